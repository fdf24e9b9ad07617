#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "ptsr/patch_translator.hpp"

namespace ptsr {

// Bilinear resampling at exactly 2x / 0.5x, align-corners off.
ad::Var upsample2(const ad::Var& image);
/// Rejects odd height or width.
ad::Var downsample2(const ad::Var& image);
Tensor upsample2(const Tensor& image);
Tensor downsample2(const Tensor& image);

/// How the 4x pipeline relates to the trained 2x model: `frozen` trains the
/// 2x model and composes it at inference; `joint` back-propagates through
/// both passes during training.
enum class ComposeMode { frozen, joint };
std::string to_string(ComposeMode mode);
ComposeMode compose_mode_from_string(const std::string& s);

struct GeneratorConfig {
    std::size_t lr_height = 32;
    std::size_t lr_width = 32;
    std::size_t k = 8;
    TransformerConfig transformer;
    std::uint64_t seed = 0;

    /// lr dims must be divisible by 2k so the half-resolution translator
    /// still tiles into whole patches.
    void validate() const;
};

/// Shapes of the intermediate features of one 2x pass.
struct GeneratorTrace {
    Shape input, f1, f2, f3, f4, output;
};

/// Four patch translators with bilinear resampling and skips:
///   F1 = PT1(X)                 H x W
///   F2 = PT2(down(F1))          H/2 x W/2
///   F3 = PT3(up(F2) + F1)       H x W
///   F4 = PT4(up(F3) + up(X))    2H x 2W
///   Y  = clamp(F4 + up(X), 0, 1)
class Generator {
public:
    Generator() = default;
    explicit Generator(const GeneratorConfig& cfg);

    const GeneratorConfig& config() const { return cfg_; }

    /// Input must be the native geometry or an integer multiple of it; on a
    /// multiple every translator repeats its positional source over the grid.
    ad::Var forward_2x(const ad::Var& lr, const ForwardContext& ctx = {},
                       GeneratorTrace* trace = nullptr);
    /// forward_2x(forward_2x(lr)): the second pass runs on the whole
    /// 2H x 2W intermediate with the same parameters.
    ad::Var forward_4x(const ad::Var& lr, const ForwardContext& ctx = {});
    ad::Var forward(const ad::Var& lr, int scale, const ForwardContext& ctx = {});

    /// No-grad inference at scale 2 or 4 on an input of native geometry.
    Tensor upscale(const Tensor& lr, int scale);

    PatchTranslator& translator(int index);  // 1..4

    /// Zeroes every trainable parameter (the residual-identity configuration).
    void zero_parameters();

    void collect(ParamRefs& out);
    void collect(ConstParamRefs& out) const;
    ParamRefs parameters();
    Manifest manifest() const;

private:
    GeneratorConfig cfg_;
    PatchTranslator pt1_, pt2_, pt3_, pt4_;
};

/// Super-resolves an image of any size >= 1 pixel by running forward(tile,
/// scale) on native-geometry tiles (edge-replicate padding for small inputs,
/// last tile flush with the border). On a native-size input this is exactly
/// upscale(lr, scale).
Tensor upscale_tiled(Generator& gen, const Tensor& lr, int scale);

/// upscale() when the input is a whole multiple of the native geometry
/// (attention spans the full image), upscale_tiled() otherwise.
Tensor super_resolve(Generator& gen, const Tensor& lr, int scale);

}  // namespace ptsr
