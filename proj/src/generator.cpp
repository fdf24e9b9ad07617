#include "ptsr/generator.hpp"

#include <algorithm>
#include <stdexcept>

#include <fmt/format.h>

namespace ptsr {

ad::Var upsample2(const ad::Var& image) {
    require_image(image.value(), "upsample2 input", image.shape().at(2));
    return ad::resize_bilinear(image, image.shape()[0] * 2, image.shape()[1] * 2);
}

ad::Var downsample2(const ad::Var& image) {
    require_image(image.value(), "downsample2 input", image.shape().at(2));
    const std::size_t h = image.shape()[0], w = image.shape()[1];
    if (h % 2 != 0) throw ShapeError(fmt::format("downsample2: odd height {}", h));
    if (w % 2 != 0) throw ShapeError(fmt::format("downsample2: odd width {}", w));
    return ad::resize_bilinear(image, h / 2, w / 2);
}

Tensor upsample2(const Tensor& image) {
    ad::NoGradGuard g;
    return upsample2(ad::constant(image)).value();
}

Tensor downsample2(const Tensor& image) {
    ad::NoGradGuard g;
    return downsample2(ad::constant(image)).value();
}

std::string to_string(ComposeMode mode) { return mode == ComposeMode::frozen ? "frozen" : "joint"; }

ComposeMode compose_mode_from_string(const std::string& s) {
    if (s == "frozen") return ComposeMode::frozen;
    if (s == "joint") return ComposeMode::joint;
    throw std::invalid_argument(fmt::format("unknown compose mode '{}'", s));
}

void GeneratorConfig::validate() const {
    if (k == 0) throw std::invalid_argument("patch size k must be positive");
    if (lr_height == 0 || lr_width == 0 || lr_height % (2 * k) != 0 || lr_width % (2 * k) != 0) {
        throw ShapeError(fmt::format(
            "generator geometry {}x{} must be divisible by 2k = {}", lr_height, lr_width, 2 * k));
    }
    transformer.validate();
}

Generator::Generator(const GeneratorConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg.seed);
    const std::size_t h = cfg.lr_height, w = cfg.lr_width, k = cfg.k;
    pt1_ = PatchTranslator("gen.pt1", h, w, k, cfg.transformer, rng);
    pt2_ = PatchTranslator("gen.pt2", h / 2, w / 2, k, cfg.transformer, rng);
    pt3_ = PatchTranslator("gen.pt3", h, w, k, cfg.transformer, rng);
    pt4_ = PatchTranslator("gen.pt4", 2 * h, 2 * w, k, cfg.transformer, rng);
}

ad::Var Generator::forward_2x(const ad::Var& lr, const ForwardContext& ctx,
                              GeneratorTrace* trace) {
    require_image(lr.value(), "generator input");
    const std::size_t h = lr.shape()[0], w = lr.shape()[1];
    if (h % cfg_.lr_height != 0 || w % cfg_.lr_width != 0) {
        throw ShapeError(fmt::format(
            "generator built for {}x{} input (or integer multiples), got {}x{}", cfg_.lr_height,
            cfg_.lr_width, h, w));
    }
    auto up_x = upsample2(lr);
    auto f1 = pt1_.forward_replicated(lr, ctx);
    auto f2 = pt2_.forward_replicated(downsample2(f1), ctx);
    auto f3 = pt3_.forward_replicated(ad::add(upsample2(f2), f1), ctx);
    auto f4 = pt4_.forward_replicated(ad::add(upsample2(f3), up_x), ctx);
    auto y = ad::clamp(ad::add(f4, up_x), 0.0, 1.0);
    if (trace) *trace = {lr.shape(), f1.shape(), f2.shape(), f3.shape(), f4.shape(), y.shape()};
    return y;
}

ad::Var Generator::forward_4x(const ad::Var& lr, const ForwardContext& ctx) {
    return forward_2x(forward_2x(lr, ctx), ctx);
}

ad::Var Generator::forward(const ad::Var& lr, int scale, const ForwardContext& ctx) {
    if (scale == 2) return forward_2x(lr, ctx);
    if (scale == 4) return forward_4x(lr, ctx);
    throw std::invalid_argument(fmt::format("unsupported scale {} (expected 2 or 4)", scale));
}

Tensor Generator::upscale(const Tensor& lr, int scale) {
    ad::NoGradGuard g;
    return forward(ad::constant(lr), scale).value();
}

PatchTranslator& Generator::translator(int index) {
    switch (index) {
        case 1: return pt1_;
        case 2: return pt2_;
        case 3: return pt3_;
        case 4: return pt4_;
        default: throw std::out_of_range("translator index must be 1..4");
    }
}

void Generator::zero_parameters() {
    for (Parameter* p : parameters())
        if (p->trainable) p->value.fill(0.0);
}

void Generator::collect(ParamRefs& out) {
    pt1_.collect(out);
    pt2_.collect(out);
    pt3_.collect(out);
    pt4_.collect(out);
}
void Generator::collect(ConstParamRefs& out) const {
    pt1_.collect(out);
    pt2_.collect(out);
    pt3_.collect(out);
    pt4_.collect(out);
}

ParamRefs Generator::parameters() {
    ParamRefs out;
    collect(out);
    return out;
}

Manifest Generator::manifest() const {
    ConstParamRefs refs;
    collect(refs);
    return make_manifest(refs);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<std::size_t> tile_starts(std::size_t extent, std::size_t tile) {
    std::vector<std::size_t> starts;
    for (std::size_t s = 0; s + tile <= extent; s += tile) starts.push_back(s);
    if (starts.empty() || starts.back() + tile < extent) starts.push_back(extent - tile);
    return starts;
}

Tensor pad_replicate(const Tensor& img, std::size_t h, std::size_t w) {
    const std::size_t ih = img.dim(0), iw = img.dim(1), ch = img.dim(2);
    Tensor out({h, w, ch});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < ch; ++c)
                out.at(y, x, c) = img.at(std::min(y, ih - 1), std::min(x, iw - 1), c);
    return out;
}

Tensor upscale_tiled_impl(Generator& gen, const Tensor& lr, int scale) {
    require_image(lr, "tiled input");
    const std::size_t th = gen.config().lr_height, tw = gen.config().lr_width;
    const std::size_t ih = lr.dim(0), iw = lr.dim(1);
    const Tensor padded = pad_replicate(lr, std::max(ih, th), std::max(iw, tw));
    const std::size_t ph = padded.dim(0), pw = padded.dim(1);
    const std::size_t s = static_cast<std::size_t>(scale);
    Tensor out({s * ph, s * pw, 3});
    ad::NoGradGuard g;
    const auto src = ad::constant(padded);
    for (std::size_t y0 : tile_starts(ph, th)) {
        for (std::size_t x0 : tile_starts(pw, tw)) {
            const Tensor sr = gen.forward(ad::crop(src, y0, x0, th, tw), scale).value();
            for (std::size_t y = 0; y < s * th; ++y)
                std::copy_n(sr.data().begin() + static_cast<std::ptrdiff_t>(y * s * tw * 3),
                            s * tw * 3,
                            out.data().begin() + static_cast<std::ptrdiff_t>(
                                                     ((s * y0 + y) * s * pw + s * x0) * 3));
        }
    }
    if (ph == ih && pw == iw) return out;
    return ad::crop(ad::constant(out), 0, 0, s * ih, s * iw).value();
}

}  // namespace

Tensor upscale_tiled(Generator& gen, const Tensor& lr, int scale) {
    if (scale == 2 || scale == 4) return upscale_tiled_impl(gen, lr, scale);
    throw std::invalid_argument(fmt::format("unsupported scale {} (expected 2 or 4)", scale));
}

Tensor super_resolve(Generator& gen, const Tensor& lr, int scale) {
    require_image(lr, "super_resolve input");
    const bool whole = lr.dim(0) % gen.config().lr_height == 0 && lr.dim(1) % gen.config().lr_width == 0;
    return whole ? gen.upscale(lr, scale) : upscale_tiled(gen, lr, scale);
}

}  // namespace ptsr
