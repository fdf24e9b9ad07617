#pragma once

#include <string>

#include "ptsr/patch_ops.hpp"
#include "ptsr/transformer.hpp"

namespace ptsr {

/// Convolution-free image-to-image block: split into k x k patches, run the
/// transformer stack modulated by a learned positional embedding, merge back.
/// Output geometry equals input geometry. The embedding is sized for one
/// fixed (height, width), chosen at construction.
class PatchTranslator {
public:
    PatchTranslator() = default;
    /// `cfg.dim` is overridden with k * k * 3.
    PatchTranslator(const std::string& name, std::size_t height, std::size_t width,
                    std::size_t k, TransformerConfig cfg, Rng& rng);

    /// Strict: input must match the construction geometry.
    ad::Var forward(const ad::Var& image, const ForwardContext& ctx = {});
    /// Accepts (a * height) x (b * width) for integers a, b >= 1. The fixed
    /// random source rv is repeated a x b over the larger patch grid; no new
    /// trainable state is introduced.
    ad::Var forward_replicated(const ad::Var& image, const ForwardContext& ctx = {});
    /// Inference convenience (no gradient recording).
    Tensor translate(const Tensor& image);

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    std::size_t k() const { return k_; }
    std::size_t n() const { return (height_ / k_) * (width_ / k_); }

    PositionalEmbedding& embedding() { return pe_; }
    TransformerStack& stack() { return stack_; }

    void collect(ParamRefs& out);
    void collect(ConstParamRefs& out) const;

private:
    ad::Var run(const ad::Var& image, std::size_t reps_y, std::size_t reps_x,
                const ForwardContext& ctx);

    std::size_t height_ = 0, width_ = 0, k_ = 0;
    PositionalEmbedding pe_;
    TransformerStack stack_;
};

}  // namespace ptsr
