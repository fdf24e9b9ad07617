#pragma once

#include <cstdint>
#include <vector>

#include "ptsr/transformer.hpp"

namespace ptsr {

/// Channel concatenation [x_up RGB, y RGB] -> H x W x 6.
ad::Var concat_condition(const ad::Var& x_up, const ad::Var& y);
Tensor concat_condition(const Tensor& x_up, const Tensor& y);

struct DiscriminatorConfig {
    std::size_t height = 64;  // input (HR) geometry
    std::size_t width = 64;
    std::size_t k = 8;
    TransformerConfig encoder;  // pre-LN blocks; dim = d_D
    std::uint64_t seed = 1;

    void validate() const;
};

/// ViT classifier over a 6-channel conditioned image: patch embedding, class
/// token, learned positional embedding, pre-LN encoder, final LayerNorm and a
/// linear head on the class token.
class Discriminator {
public:
    Discriminator() = default;
    explicit Discriminator(const DiscriminatorConfig& cfg);

    const DiscriminatorConfig& config() const { return cfg_; }

    /// Pre-sigmoid score, shape {1}.
    ad::Var logit(const ad::Var& x6, const ForwardContext& ctx = {});
    /// Probability in (0, 1), shape {1}.
    ad::Var forward(const ad::Var& x6, const ForwardContext& ctx = {});
    double discriminate(const Tensor& x6);

    Parameter& class_token() { return class_token_; }
    Parameter& head_weight() { return head_.weight(); }
    Parameter& head_bias() { return head_.bias(); }

    void collect(ParamRefs& out);
    void collect(ConstParamRefs& out) const;
    ParamRefs parameters();
    Manifest manifest() const;

private:
    DiscriminatorConfig cfg_;
    Linear patch_embed_;
    Parameter class_token_;
    Parameter pos_embed_;
    std::vector<EncoderBlock> blocks_;
    LayerNorm final_ln_;
    Linear head_;
};

}  // namespace ptsr
