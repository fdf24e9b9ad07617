#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
//
// A `Var` is a handle to a graph node. Nodes created while gradient recording
// is enabled remember their parents and an adjoint closure; `backward()` walks
// the graph in reverse topological order. Leaves created from a `Parameter`
// add their gradient into `Parameter::grad` when backward finishes.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "ptsr/params.hpp"
#include "ptsr/tensor.hpp"

namespace ptsr::ad {

struct Node {
    Tensor value;
    Tensor grad;  // allocated on first use
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;
    Parameter* param = nullptr;
    bool requires_grad = false;

    Tensor& grad_buffer();
};

class Var {
public:
    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

    const Tensor& value() const { return node_->value; }
    const Shape& shape() const { return node_->value.shape(); }
    /// Gradient after backward(); zeros if nothing flowed here.
    Tensor grad() const;
    bool requires_grad() const { return node_ && node_->requires_grad; }
    bool defined() const noexcept { return static_cast<bool>(node_); }
    Node& node() const { return *node_; }
    const std::shared_ptr<Node>& ptr() const { return node_; }

private:
    std::shared_ptr<Node> node_;
};

/// Gradient recording is on by default; a NoGradGuard disables it for its
/// scope on the current thread.
bool grad_enabled() noexcept;
class NoGradGuard {
public:
    NoGradGuard() noexcept;
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

Var constant(Tensor value);
Var input(Tensor value, bool requires_grad = true);
Var param(Parameter& p);

/// Runs reverse accumulation from a scalar output (seed 1) or an explicit seed.
void backward(const Var& output);
void backward(const Var& output, const Tensor& seed);

// --- elementwise -----------------------------------------------------------
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var gelu(const Var& a);
Var sigmoid(const Var& a);
/// Gradient passes where lo <= x <= hi.
Var clamp(const Var& a, double lo, double hi);
Var reshape(const Var& a, Shape shape);
/// Inverted dropout: zeroes each entry with probability p and scales the
/// survivors by 1 / (1 - p). Identity when p == 0.
Var dropout(const Var& a, double p, Rng& rng);

// --- matrices (rank 2) -----------------------------------------------------
Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
/// a (n x d) + row vector b (1 x d) broadcast over rows.
Var add_row(const Var& a, const Var& b);
/// x * w + b with w (in x out) and b (1 x out).
Var linear(const Var& x, const Var& w, const Var& b);
Var softmax_rows(const Var& a);
/// Normalizes each row to zero mean / unit variance (no affine).
Var layernorm_rows(const Var& a, double eps);
Var slice_cols(const Var& a, std::size_t start, std::size_t width);
Var concat_cols(std::span<const Var> parts);
Var slice_rows(const Var& a, std::size_t start, std::size_t count);
Var concat_rows(std::span<const Var> parts);

// --- images (rank 3, H x W x C) -------------------------------------------
Var split_patches(const Var& image, std::size_t k);
Var merge_patches(const Var& seq, std::size_t height, std::size_t width, std::size_t k);
Var resize_bilinear(const Var& image, std::size_t out_h, std::size_t out_w);
Var concat_channels(const Var& a, const Var& b);
Var crop(const Var& image, std::size_t y0, std::size_t x0, std::size_t height,
         std::size_t width);
/// Tiles laid out row-major in a rows x cols grid; tiles in one grid row
/// share a height and tiles in one grid column share a width.
Var assemble(std::span<const Var> tiles, std::size_t rows, std::size_t cols);

// --- reductions -> shape {1} ----------------------------------------------
Var sum(const Var& a);
Var mean(const Var& a);
Var abs_sum(const Var& a);
Var l2_norm(const Var& a);
Var sum_squares(const Var& a);
/// Mean binary cross-entropy of probabilities against a constant target,
/// probabilities clamped to [eps, 1 - eps].
Var bce_prob(const Var& p, double target, double eps);
/// Mean binary cross-entropy computed from logits (numerically stable).
Var bce_logits(const Var& z, double target);

}  // namespace ptsr::ad
