#include "ptsr/discriminator.hpp"

#include <fmt/format.h>

namespace ptsr {

ad::Var concat_condition(const ad::Var& x_up, const ad::Var& y) {
    require_image(x_up.value(), "conditioning image");
    require_image(y.value(), "candidate image");
    if (x_up.shape() != y.shape()) {
        throw ShapeError(fmt::format("concat_condition: {} vs {}", shape_str(x_up.shape()),
                                     shape_str(y.shape())));
    }
    return ad::concat_channels(x_up, y);
}

Tensor concat_condition(const Tensor& x_up, const Tensor& y) {
    ad::NoGradGuard g;
    return concat_condition(ad::constant(x_up), ad::constant(y)).value();
}

void DiscriminatorConfig::validate() const {
    if (k == 0 || height == 0 || width == 0 || height % k != 0 || width % k != 0) {
        throw ShapeError(fmt::format("discriminator geometry {}x{} not divisible by k={}", height,
                                     width, k));
    }
    encoder.validate();
}

Discriminator::Discriminator(const DiscriminatorConfig& cfg) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(cfg.seed);
    const std::size_t d = cfg.encoder.dim;
    const std::size_t n = (cfg.height / cfg.k) * (cfg.width / cfg.k);
    const double std = cfg.encoder.init_std;
    patch_embed_ = Linear("disc.patch_embed", cfg.k * cfg.k * 6, d, std, rng);
    class_token_ = Parameter("disc.class_token", normal_tensor({1, d}, std, rng));
    pos_embed_ = Parameter("disc.pos_embed", normal_tensor({n + 1, d}, std, rng));
    blocks_.reserve(cfg.encoder.depth);
    for (std::size_t i = 0; i < cfg.encoder.depth; ++i)
        blocks_.emplace_back(fmt::format("disc.block{}", i), cfg.encoder, rng);
    final_ln_ = LayerNorm("disc.final_ln", d, cfg.encoder.ln_eps);
    head_ = Linear("disc.head", d, 1, std, rng);
}

ad::Var Discriminator::logit(const ad::Var& x6, const ForwardContext& ctx) {
    require_image(x6.value(), "discriminator input", 6);
    if (x6.shape()[0] != cfg_.height || x6.shape()[1] != cfg_.width) {
        throw ShapeError(fmt::format("discriminator built for {}x{} input, got {}x{}",
                                     cfg_.height, cfg_.width, x6.shape()[0], x6.shape()[1]));
    }
    auto tokens = patch_embed_.forward(ad::split_patches(x6, cfg_.k));
    const ad::Var rows[] = {ad::param(class_token_), tokens};
    auto x = ad::add(ad::concat_rows(rows), ad::param(pos_embed_));
    for (auto& b : blocks_) x = b.forward(x, ctx);
    auto cls = ad::slice_rows(final_ln_.forward(x), 0, 1);
    return ad::reshape(head_.forward(cls), {1});
}

ad::Var Discriminator::forward(const ad::Var& x6, const ForwardContext& ctx) {
    return ad::sigmoid(logit(x6, ctx));
}

double Discriminator::discriminate(const Tensor& x6) {
    ad::NoGradGuard g;
    return forward(ad::constant(x6)).value()[0];
}

void Discriminator::collect(ParamRefs& out) {
    patch_embed_.collect(out);
    out.push_back(&class_token_);
    out.push_back(&pos_embed_);
    for (auto& b : blocks_) b.collect(out);
    final_ln_.collect(out);
    head_.collect(out);
}
void Discriminator::collect(ConstParamRefs& out) const {
    patch_embed_.collect(out);
    out.push_back(&class_token_);
    out.push_back(&pos_embed_);
    for (const auto& b : blocks_) b.collect(out);
    final_ln_.collect(out);
    head_.collect(out);
}

ParamRefs Discriminator::parameters() {
    ParamRefs out;
    collect(out);
    return out;
}

Manifest Discriminator::manifest() const {
    ConstParamRefs refs;
    collect(refs);
    return make_manifest(refs);
}

}  // namespace ptsr
