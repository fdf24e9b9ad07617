#include "ptsr/transformer.hpp"

#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

namespace ptsr {

std::string to_string(ResidualMode mode) {
    return mode == ResidualMode::embedding ? "embedding" : "conventional";
}

ResidualMode residual_mode_from_string(const std::string& s) {
    if (s == "embedding") return ResidualMode::embedding;
    if (s == "conventional") return ResidualMode::conventional;
    throw std::invalid_argument(fmt::format("unknown residual mode '{}'", s));
}

std::size_t TransformerConfig::mlp_dim() const {
    return static_cast<std::size_t>(std::llround(static_cast<double>(dim) * mlp_ratio));
}

void TransformerConfig::validate() const {
    if (dim == 0 || heads == 0) throw std::invalid_argument("transformer dim and heads must be >= 1");
    if (dim % heads != 0) {
        throw std::invalid_argument(
            fmt::format("transformer dim {} is not divisible by heads {}", dim, heads));
    }
    if (depth == 0) throw std::invalid_argument("transformer depth must be >= 1");
    if (!(mlp_ratio > 0.0) || mlp_dim() == 0)
        throw std::invalid_argument("mlp_ratio must be positive");
    if (!(dropout >= 0.0 && dropout < 1.0))
        throw std::invalid_argument("dropout must lie in [0, 1)");
    if (!(ln_eps > 0.0)) throw std::invalid_argument("layernorm epsilon must be positive");
}

// ---------------------------------------------------------------------------

Linear::Linear(const std::string& name, std::size_t in, std::size_t out, double init_std,
               Rng& rng)
    : weight_(name + ".weight", normal_tensor({in, out}, init_std, rng)),
      bias_(name + ".bias", Tensor({1, out})) {}

ad::Var Linear::forward(const ad::Var& x) {
    return ad::linear(x, ad::param(weight_), ad::param(bias_));
}

void Linear::collect(ParamRefs& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
}
void Linear::collect(ConstParamRefs& out) const {
    out.push_back(&weight_);
    out.push_back(&bias_);
}

// ---------------------------------------------------------------------------

SelfModulatedLayerNorm::SelfModulatedLayerNorm(const std::string& name, std::size_t dim,
                                               double eps)
    : gain_map_(name + ".gain_map", Tensor({dim, dim})),
      bias_map_(name + ".bias_map", Tensor({dim, dim})),
      eps_(eps) {}

ad::Var SelfModulatedLayerNorm::forward(const ad::Var& x, const ad::Var& embedding) {
    if (x.shape() != embedding.shape()) {
        throw ShapeError(fmt::format("SLN input {} and embedding {} differ",
                                     shape_str(x.shape()), shape_str(embedding.shape())));
    }
    auto xhat = ad::layernorm_rows(x, eps_);
    auto gain = ad::add_scalar(ad::matmul(embedding, ad::param(gain_map_)), 1.0);
    auto bias = ad::matmul(embedding, ad::param(bias_map_));
    return ad::add(ad::mul(xhat, gain), bias);
}

void SelfModulatedLayerNorm::collect(ParamRefs& out) {
    out.push_back(&gain_map_);
    out.push_back(&bias_map_);
}
void SelfModulatedLayerNorm::collect(ConstParamRefs& out) const {
    out.push_back(&gain_map_);
    out.push_back(&bias_map_);
}

// ---------------------------------------------------------------------------

LayerNorm::LayerNorm(const std::string& name, std::size_t dim, double eps)
    : gamma_(name + ".gamma", Tensor({1, dim}, 1.0)),
      beta_(name + ".beta", Tensor({1, dim})),
      eps_(eps) {}

ad::Var LayerNorm::forward(const ad::Var& x) {
    auto xhat = ad::layernorm_rows(x, eps_);
    const std::size_t n = x.value().rows();
    // Broadcast gamma over rows through a ones column: (n x 1) * (1 x d).
    auto gamma_rows = ad::matmul(ad::constant(Tensor({n, 1}, 1.0)), ad::param(gamma_));
    return ad::add_row(ad::mul(xhat, gamma_rows), ad::param(beta_));
}

void LayerNorm::collect(ParamRefs& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
}
void LayerNorm::collect(ConstParamRefs& out) const {
    out.push_back(&gamma_);
    out.push_back(&beta_);
}

// ---------------------------------------------------------------------------

MultiHeadAttention::MultiHeadAttention(const std::string& name, std::size_t dim,
                                       std::size_t heads, double init_std, Rng& rng)
    : q_(name + ".q_proj", dim, dim, init_std, rng),
      k_(name + ".k_proj", dim, dim, init_std, rng),
      v_(name + ".v_proj", dim, dim, init_std, rng),
      out_(name + ".out_proj", dim, dim, init_std, rng),
      heads_(heads) {
    if (heads == 0 || dim % heads != 0) {
        throw std::invalid_argument(
            fmt::format("attention dim {} is not divisible by heads {}", dim, heads));
    }
}

ad::Var MultiHeadAttention::forward(const ad::Var& x, const ForwardContext& ctx) {
    const std::size_t dim = x.value().cols();
    const std::size_t hd = dim / heads_;
    auto q = q_.forward(x);
    auto k = k_.forward(x);
    auto v = v_.forward(x);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<ad::Var> outs;
    outs.reserve(heads_);
    for (std::size_t h = 0; h < heads_; ++h) {
        auto qh = ad::slice_cols(q, h * hd, hd);
        auto kh = ad::slice_cols(k, h * hd, hd);
        auto vh = ad::slice_cols(v, h * hd, hd);
        auto scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), scale);
        auto weights = ad::softmax_rows(scores);
        if (ctx.trace) ctx.trace->weights.push_back(weights.value());
        outs.push_back(ad::matmul(weights, vh));
    }
    auto merged = heads_ == 1 ? outs.front() : ad::concat_cols(outs);
    return out_.forward(merged);
}

void MultiHeadAttention::collect(ParamRefs& out) {
    q_.collect(out);
    k_.collect(out);
    v_.collect(out);
    out_.collect(out);
}
void MultiHeadAttention::collect(ConstParamRefs& out) const {
    q_.collect(out);
    k_.collect(out);
    v_.collect(out);
    out_.collect(out);
}

// ---------------------------------------------------------------------------

Mlp::Mlp(const std::string& name, std::size_t dim, std::size_t hidden, double init_std, Rng& rng)
    : fc_in_(name + ".fc_in", dim, hidden, init_std, rng),
      fc_out_(name + ".fc_out", hidden, dim, init_std, rng) {}

ad::Var Mlp::forward(const ad::Var& x) { return fc_out_.forward(ad::gelu(fc_in_.forward(x))); }

void Mlp::collect(ParamRefs& out) {
    fc_in_.collect(out);
    fc_out_.collect(out);
}
void Mlp::collect(ConstParamRefs& out) const {
    fc_in_.collect(out);
    fc_out_.collect(out);
}

// ---------------------------------------------------------------------------

namespace {
ad::Var maybe_dropout(const ad::Var& x, double p, const ForwardContext& ctx) {
    if (p <= 0.0 || ctx.dropout_rng == nullptr) return x;
    return ad::dropout(x, p, *ctx.dropout_rng);
}
}  // namespace

TransformerBlock::TransformerBlock(const std::string& name, const TransformerConfig& cfg,
                                   Rng& rng)
    : sln1_(name + ".sln1", cfg.dim, cfg.ln_eps),
      sln2_(name + ".sln2", cfg.dim, cfg.ln_eps),
      attn_(name + ".attn", cfg.dim, cfg.heads, cfg.init_std, rng),
      mlp_(name + ".mlp", cfg.dim, cfg.mlp_dim(), cfg.init_std, rng),
      residual_(cfg.residual),
      dropout_(cfg.dropout) {}

ad::Var TransformerBlock::forward(const ad::Var& patches, const ad::Var& embedding,
                                  const ForwardContext& ctx) {
    auto l = sln1_.forward(patches, embedding);
    auto fs = maybe_dropout(attn_.forward(l, ctx), dropout_, ctx);
    auto fr = ad::add(residual_ == ResidualMode::embedding ? embedding : patches, fs);
    auto m = maybe_dropout(mlp_.forward(sln2_.forward(fr, embedding)), dropout_, ctx);
    return ad::add(fr, m);
}

void TransformerBlock::collect(ParamRefs& out) {
    sln1_.collect(out);
    attn_.collect(out);
    sln2_.collect(out);
    mlp_.collect(out);
}
void TransformerBlock::collect(ConstParamRefs& out) const {
    sln1_.collect(out);
    attn_.collect(out);
    sln2_.collect(out);
    mlp_.collect(out);
}

// ---------------------------------------------------------------------------

TransformerStack::TransformerStack(const std::string& name, const TransformerConfig& cfg,
                                   Rng& rng)
    : cfg_(cfg) {
    cfg_.validate();
    blocks_.reserve(cfg.depth);
    for (std::size_t i = 0; i < cfg.depth; ++i)
        blocks_.emplace_back(fmt::format("{}.block{}", name, i), cfg, rng);
}

ad::Var TransformerStack::forward(const ad::Var& patches, const ad::Var& embedding,
                                  const ForwardContext& ctx) {
    ad::Var x = patches;
    for (auto& b : blocks_) x = b.forward(x, embedding, ctx);
    return x;
}

void TransformerStack::collect(ParamRefs& out) {
    for (auto& b : blocks_) b.collect(out);
}
void TransformerStack::collect(ConstParamRefs& out) const {
    for (const auto& b : blocks_) b.collect(out);
}

// ---------------------------------------------------------------------------

EncoderBlock::EncoderBlock(const std::string& name, const TransformerConfig& cfg, Rng& rng)
    : ln1_(name + ".ln1", cfg.dim, cfg.ln_eps),
      ln2_(name + ".ln2", cfg.dim, cfg.ln_eps),
      attn_(name + ".attn", cfg.dim, cfg.heads, cfg.init_std, rng),
      mlp_(name + ".mlp", cfg.dim, cfg.mlp_dim(), cfg.init_std, rng),
      dropout_(cfg.dropout) {}

ad::Var EncoderBlock::forward(const ad::Var& x, const ForwardContext& ctx) {
    auto h = ad::add(x, maybe_dropout(attn_.forward(ln1_.forward(x), ctx), dropout_, ctx));
    return ad::add(h, maybe_dropout(mlp_.forward(ln2_.forward(h)), dropout_, ctx));
}

void EncoderBlock::collect(ParamRefs& out) {
    ln1_.collect(out);
    attn_.collect(out);
    ln2_.collect(out);
    mlp_.collect(out);
}
void EncoderBlock::collect(ConstParamRefs& out) const {
    ln1_.collect(out);
    attn_.collect(out);
    ln2_.collect(out);
    mlp_.collect(out);
}

}  // namespace ptsr
