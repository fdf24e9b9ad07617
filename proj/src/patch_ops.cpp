#include "ptsr/patch_ops.hpp"

#include <fmt/format.h>

namespace ptsr {

PatchSequence split_into_patches(const Tensor& image, std::size_t k) {
    if (image.rank() != 3) {
        throw ShapeError(fmt::format("split_into_patches expects HxWxC, got {}",
                                     shape_str(image.shape())));
    }
    if (!image.all_finite()) throw std::invalid_argument("split_into_patches: non-finite pixel");
    ad::NoGradGuard no_grad;
    auto seq = ad::split_patches(ad::constant(image), k);
    PatchSequence out;
    out.grid_rows = image.dim(0) / k;
    out.grid_cols = image.dim(1) / k;
    out.k = k;
    out.channels = image.dim(2);
    out.vectors = seq.value();
    return out;
}

Tensor merge_patches(const PatchSequence& seq, std::size_t height, std::size_t width) {
    if (seq.k == 0 || height != seq.grid_rows * seq.k || width != seq.grid_cols * seq.k) {
        throw ShapeError(fmt::format(
            "merge_patches: {}x{} does not match a {}x{} grid of {}-pixel patches", height,
            width, seq.grid_rows, seq.grid_cols, seq.k));
    }
    if (seq.vectors.rank() != 2 || seq.vectors.rows() != seq.n() ||
        seq.vectors.cols() != seq.d()) {
        throw ShapeError(fmt::format("merge_patches: vectors {} do not match n={} d={}",
                                     shape_str(seq.vectors.shape()), seq.n(), seq.d()));
    }
    ad::NoGradGuard no_grad;
    return ad::merge_patches(ad::constant(seq.vectors), height, width, seq.k).value();
}

PositionalEmbedding::PositionalEmbedding(std::size_t n, std::size_t d, std::uint64_t seed,
                                         const std::string& prefix) {
    if (n == 0 || d == 0) {
        throw std::invalid_argument(
            fmt::format("positional embedding needs n, d >= 1 (got n={}, d={})", n, d));
    }
    Rng rng(seed);
    rv_ = Parameter(prefix + ".rv", normal_tensor({n, d}, 1.0, rng), false);
    w_pe_ = Parameter(prefix + ".w_pe", normal_tensor({d, d}, kPositionalInitStd, rng));
}

PositionalEmbedding PositionalEmbedding::from_parts(Tensor rv, Tensor w_pe,
                                                   const std::string& prefix) {
    if (rv.rank() != 2 || w_pe.rank() != 2 || w_pe.rows() != rv.cols() ||
        w_pe.cols() != rv.cols()) {
        throw ShapeError(fmt::format("positional embedding parts {} and {} do not fit",
                                     shape_str(rv.shape()), shape_str(w_pe.shape())));
    }
    PositionalEmbedding pe;
    pe.rv_ = Parameter(prefix + ".rv", std::move(rv), false);
    pe.w_pe_ = Parameter(prefix + ".w_pe", std::move(w_pe));
    return pe;
}

Tensor PositionalEmbedding::table() const {
    ad::NoGradGuard no_grad;
    return ad::matmul(ad::constant(rv_.value), ad::constant(w_pe_.value)).value();
}

ad::Var PositionalEmbedding::forward() {
    return ad::matmul(ad::constant(rv_.value), ad::param(w_pe_));
}

void PositionalEmbedding::collect(ParamRefs& out) {
    out.push_back(&rv_);
    out.push_back(&w_pe_);
}

void PositionalEmbedding::collect(ConstParamRefs& out) const {
    out.push_back(&rv_);
    out.push_back(&w_pe_);
}

PositionalEmbedding make_positional_embedding(std::size_t n, std::size_t d,
                                              std::uint64_t seed) {
    return PositionalEmbedding(n, d, seed);
}

}  // namespace ptsr
