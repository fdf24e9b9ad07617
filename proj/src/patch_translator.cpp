#include "ptsr/patch_translator.hpp"

#include <fmt/format.h>

namespace ptsr {

PatchTranslator::PatchTranslator(const std::string& name, std::size_t height, std::size_t width,
                                 std::size_t k, TransformerConfig cfg, Rng& rng)
    : height_(height), width_(width), k_(k) {
    if (k == 0 || height == 0 || width == 0 || height % k != 0 || width % k != 0) {
        throw ShapeError(fmt::format(
            "{}: geometry {}x{} is not divisible by patch size {}", name, height, width, k));
    }
    cfg.dim = k * k * 3;
    pe_ = PositionalEmbedding(n(), cfg.dim, rng(), name + ".pe");
    stack_ = TransformerStack(name, cfg, rng);
}

ad::Var PatchTranslator::forward(const ad::Var& image, const ForwardContext& ctx) {
    require_image(image.value(), "patch translator input");
    const std::size_t h = image.shape()[0], w = image.shape()[1];
    if (h != height_ || w != width_) {
        throw ShapeError(fmt::format(
            "patch translator built for {}x{} (n={}) got {}x{} (n={})", height_, width_, n(), h,
            w, (h / k_) * (w / k_)));
    }
    return run(image, 1, 1, ctx);
}

ad::Var PatchTranslator::forward_replicated(const ad::Var& image, const ForwardContext& ctx) {
    require_image(image.value(), "patch translator input");
    const std::size_t h = image.shape()[0], w = image.shape()[1];
    if (h == 0 || w == 0 || h % height_ != 0 || w % width_ != 0) {
        throw ShapeError(fmt::format("patch translator built for {}x{} cannot replicate to {}x{}",
                                     height_, width_, h, w));
    }
    return run(image, h / height_, w / width_, ctx);
}

ad::Var PatchTranslator::run(const ad::Var& image, std::size_t reps_y, std::size_t reps_x,
                             const ForwardContext& ctx) {
    const std::size_t h = image.shape()[0], w = image.shape()[1];
    auto patches = ad::split_patches(image, k_);
    auto pe = pe_.forward();
    if (reps_y * reps_x > 1) {
        const std::size_t gr = height_ / k_, gc = width_ / k_, d = pe_.d();
        const auto grid = ad::reshape(pe, {gr, gc, d});
        const std::vector<ad::Var> tiles(reps_y * reps_x, grid);
        pe = ad::reshape(ad::assemble(tiles, reps_y, reps_x), {reps_y * gr * reps_x * gc, d});
    }
    auto out = stack_.forward(patches, pe, ctx);
    return ad::merge_patches(out, h, w, k_);
}

Tensor PatchTranslator::translate(const Tensor& image) {
    ad::NoGradGuard no_grad;
    return forward(ad::constant(image)).value();
}

void PatchTranslator::collect(ParamRefs& out) {
    pe_.collect(out);
    stack_.collect(out);
}
void PatchTranslator::collect(ConstParamRefs& out) const {
    pe_.collect(out);
    stack_.collect(out);
}

}  // namespace ptsr
