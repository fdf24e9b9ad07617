#pragma once

#include <cstdint>

#include "ptsr/autodiff.hpp"
#include "ptsr/params.hpp"
#include "ptsr/tensor.hpp"

namespace ptsr {

/// n x d matrix of flattened non-overlapping k x k patches plus the grid it
/// came from. Row i is patch i in row-major grid order; within a row the
/// layout is row-major over (row, col, channel), so d = k * k * channels.
struct PatchSequence {
    Tensor vectors;
    std::size_t grid_rows = 0;
    std::size_t grid_cols = 0;
    std::size_t k = 0;
    std::size_t channels = 3;

    std::size_t n() const { return grid_rows * grid_cols; }
    std::size_t d() const { return k * k * channels; }
};

PatchSequence split_into_patches(const Tensor& image, std::size_t k);
Tensor merge_patches(const PatchSequence& seq, std::size_t height, std::size_t width);

/// Learned positional embedding: table = rv * w_pe, where rv is a fixed
/// seeded standard-normal n x d matrix and w_pe a trainable d x d projection.
class PositionalEmbedding {
public:
    PositionalEmbedding() = default;
    PositionalEmbedding(std::size_t n, std::size_t d, std::uint64_t seed,
                        const std::string& prefix = "pe");

    /// Explicit rv and w_pe (rv n x d, w_pe d x d).
    static PositionalEmbedding from_parts(Tensor rv, Tensor w_pe,
                                          const std::string& prefix = "pe");

    std::size_t n() const { return rv_.value.rows(); }
    std::size_t d() const { return rv_.value.cols(); }

    const Tensor& rv() const { return rv_.value; }
    Parameter& w_pe() { return w_pe_; }
    const Parameter& w_pe() const { return w_pe_; }

    /// rv * w_pe, recomputed from the current parameter values.
    Tensor table() const;
    /// Differentiable table for use inside a forward pass.
    ad::Var forward();

    void collect(ParamRefs& out);
    void collect(ConstParamRefs& out) const;

private:
    Parameter rv_;
    Parameter w_pe_;
};

PositionalEmbedding make_positional_embedding(std::size_t n, std::size_t d,
                                              std::uint64_t seed);

/// Standard deviation of the w_pe initializer.
inline constexpr double kPositionalInitStd = 0.02;

}  // namespace ptsr
