#pragma once

#include <string>
#include <vector>

#include "ptsr/autodiff.hpp"
#include "ptsr/params.hpp"

namespace ptsr {

/// Which tensor the attention residual adds to. `embedding` adds the positional
/// embedding (F_R = PE + F_S); `conventional` adds the block input.
enum class ResidualMode { embedding, conventional };

std::string to_string(ResidualMode mode);
ResidualMode residual_mode_from_string(const std::string& s);

struct TransformerConfig {
    std::size_t depth = 5;
    std::size_t dim = 192;
    std::size_t heads = 3;
    double mlp_ratio = 4.0;
    double dropout = 0.0;
    ResidualMode residual = ResidualMode::embedding;
    double ln_eps = 1e-5;
    double init_std = 0.02;

    std::size_t mlp_dim() const;
    std::size_t head_dim() const { return dim / heads; }
    /// Throws std::invalid_argument on an unusable configuration.
    void validate() const;
    /// Depths 3, 5 and 7 are the ablated configurations; others are allowed.
    bool is_reference_depth() const { return depth == 3 || depth == 5 || depth == 7; }
};

/// Collects per-head attention weight matrices during a forward pass.
struct AttentionTrace {
    std::vector<Tensor> weights;
};

/// Per-pass options threaded through every layer.
struct ForwardContext {
    Rng* dropout_rng = nullptr;  // null disables dropout
    AttentionTrace* trace = nullptr;
};

class Linear {
public:
    Linear() = default;
    Linear(const std::string& name, std::size_t in, std::size_t out, double init_std, Rng& rng);

    ad::Var forward(const ad::Var& x);
    Parameter& weight() { return weight_; }
    Parameter& bias() { return bias_; }

    void collect(ParamRefs& out);
    void collect(ConstParamRefs& out) const;

private:
    Parameter weight_;
    Parameter bias_;
};

/// LayerNorm whose gain and bias are produced from a modulation row:
/// y = xhat * (1 + e A) + e B, with A and B d x d and zero at init so the
/// layer starts out as plain LayerNorm.
class SelfModulatedLayerNorm {
public:
    SelfModulatedLayerNorm() = default;
    SelfModulatedLayerNorm(const std::string& name, std::size_t dim, double eps);

    ad::Var forward(const ad::Var& x, const ad::Var& embedding);
    Parameter& gain_map() { return gain_map_; }
    Parameter& bias_map() { return bias_map_; }

    void collect(ParamRefs& out);
    void collect(ConstParamRefs& out) const;

private:
    Parameter gain_map_;
    Parameter bias_map_;
    double eps_ = 1e-5;
};

/// Affine LayerNorm (gamma = 1, beta = 0 at init).
class LayerNorm {
public:
    LayerNorm() = default;
    LayerNorm(const std::string& name, std::size_t dim, double eps);

    ad::Var forward(const ad::Var& x);
    void collect(ParamRefs& out);
    void collect(ConstParamRefs& out) const;

private:
    Parameter gamma_;
    Parameter beta_;
    double eps_ = 1e-5;
};

/// Bidirectional scaled dot-product attention, scale 1 / sqrt(dim / heads).
class MultiHeadAttention {
public:
    MultiHeadAttention() = default;
    MultiHeadAttention(const std::string& name, std::size_t dim, std::size_t heads,
                       double init_std, Rng& rng);

    ad::Var forward(const ad::Var& x, const ForwardContext& ctx = {});

    Linear& q_proj() { return q_; }
    Linear& k_proj() { return k_; }
    Linear& v_proj() { return v_; }
    Linear& out_proj() { return out_; }
    std::size_t heads() const { return heads_; }

    void collect(ParamRefs& out);
    void collect(ConstParamRefs& out) const;

private:
    Linear q_, k_, v_, out_;
    std::size_t heads_ = 1;
};

class Mlp {
public:
    Mlp() = default;
    Mlp(const std::string& name, std::size_t dim, std::size_t hidden, double init_std, Rng& rng);

    ad::Var forward(const ad::Var& x);
    Linear& fc_in() { return fc_in_; }
    Linear& fc_out() { return fc_out_; }

    void collect(ParamRefs& out);
    void collect(ConstParamRefs& out) const;

private:
    Linear fc_in_, fc_out_;
};

/// Translator block: l = SLN(V, PE); F_S = MHA(l); F_R = PE + F_S (embedding
/// mode) or V + F_S (conventional); out = F_R + MLP(SLN(F_R, PE)).
class TransformerBlock {
public:
    TransformerBlock() = default;
    TransformerBlock(const std::string& name, const TransformerConfig& cfg, Rng& rng);

    ad::Var forward(const ad::Var& patches, const ad::Var& embedding,
                    const ForwardContext& ctx = {});

    SelfModulatedLayerNorm& sln1() { return sln1_; }
    SelfModulatedLayerNorm& sln2() { return sln2_; }
    MultiHeadAttention& attention() { return attn_; }
    Mlp& mlp() { return mlp_; }

    void collect(ParamRefs& out);
    void collect(ConstParamRefs& out) const;

private:
    SelfModulatedLayerNorm sln1_, sln2_;
    MultiHeadAttention attn_;
    Mlp mlp_;
    ResidualMode residual_ = ResidualMode::embedding;
    double dropout_ = 0.0;
};

/// `depth` blocks with independent parameters applied in sequence; every
/// block is modulated by the same positional embedding.
class TransformerStack {
public:
    TransformerStack() = default;
    TransformerStack(const std::string& name, const TransformerConfig& cfg, Rng& rng);

    ad::Var forward(const ad::Var& patches, const ad::Var& embedding,
                    const ForwardContext& ctx = {});

    std::size_t depth() const { return blocks_.size(); }
    TransformerBlock& block(std::size_t i) { return blocks_.at(i); }
    const TransformerConfig& config() const { return cfg_; }

    void collect(ParamRefs& out);
    void collect(ConstParamRefs& out) const;

private:
    TransformerConfig cfg_;
    std::vector<TransformerBlock> blocks_;
};

/// Standard pre-LayerNorm ViT encoder block:
/// x = x + MHA(LN(x)); x = x + MLP(LN(x)).
class EncoderBlock {
public:
    EncoderBlock() = default;
    EncoderBlock(const std::string& name, const TransformerConfig& cfg, Rng& rng);

    ad::Var forward(const ad::Var& x, const ForwardContext& ctx = {});

    void collect(ParamRefs& out);
    void collect(ConstParamRefs& out) const;

private:
    LayerNorm ln1_, ln2_;
    MultiHeadAttention attn_;
    Mlp mlp_;
    double dropout_ = 0.0;
};

}  // namespace ptsr
