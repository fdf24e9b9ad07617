#pragma once

// Dense numeric kernels used by the autodiff ops.
//
// Every kernel exists twice: a plain serial loop nest in `serial` (the
// reference) and an OpenMP version in `omp`. Each output element is owned by
// exactly one thread and accumulated in the same order as the serial loop, so
// the two produce bit-identical results for any thread count.

#include <cstddef>
#include <span>

namespace ptsr::kernels {

enum class Backend { serial, omp };

void set_backend(Backend backend) noexcept;
Backend backend() noexcept;
/// Sets the OpenMP thread count used by the omp backend (0 = runtime default).
void set_num_threads(int threads) noexcept;
int max_threads() noexcept;

/// RAII backend override, restores the previous backend on scope exit.
class ScopedBackend {
public:
    explicit ScopedBackend(Backend b) noexcept : prev_(backend()) { set_backend(b); }
    ~ScopedBackend() { set_backend(prev_); }
    ScopedBackend(const ScopedBackend&) = delete;
    ScopedBackend& operator=(const ScopedBackend&) = delete;

private:
    Backend prev_;
};

// Shapes: a is n x m, b is m x p, c is n x p (all row-major).
//   matmul:      c  = a * b
//   matmul_tn:   c  = a^T * b      (a is r x n, b is r x p, c is n x p)
//   matmul_nt:   c  = a * b^T      (a is n x m, b is p x m, c is n x p)
// The `_acc` forms add into c instead of overwriting.
struct MatDims {
    std::size_t n, m, p;
};

#define PTSR_KERNEL_SET                                                              \
    void matmul(std::span<const double> a, std::span<const double> b,               \
                std::span<double> c, MatDims d);                                     \
    void matmul_tn_acc(std::span<const double> a, std::span<const double> b,        \
                       std::span<double> c, std::size_t r, std::size_t n,           \
                       std::size_t p);                                               \
    void matmul_nt_acc(std::span<const double> a, std::span<const double> b,        \
                       std::span<double> c, MatDims d);                              \
    void softmax_rows(std::span<const double> x, std::span<double> y,               \
                      std::size_t rows, std::size_t cols);                           \
    void softmax_rows_backward(std::span<const double> y, std::span<const double> gy, \
                               std::span<double> gx, std::size_t rows,              \
                               std::size_t cols);                                    \
    void layernorm_rows(std::span<const double> x, std::span<double> xhat,          \
                        std::span<double> inv_std, std::size_t rows,                \
                        std::size_t cols, double eps);                               \
    void layernorm_rows_backward(std::span<const double> xhat,                      \
                                 std::span<const double> inv_std,                   \
                                 std::span<const double> gy, std::span<double> gx,  \
                                 std::size_t rows, std::size_t cols);                \
    void gelu(std::span<const double> x, std::span<double> y);                      \
    void gelu_backward(std::span<const double> x, std::span<const double> gy,       \
                       std::span<double> gx);                                        \
    void resample_bilinear(std::span<const double> in, std::span<double> out,       \
                           std::size_t in_h, std::size_t in_w, std::size_t out_h,   \
                           std::size_t out_w, std::size_t channels);                 \
    void resample_bilinear_adjoint(std::span<const double> gout,                    \
                                   std::span<double> gin, std::size_t in_h,         \
                                   std::size_t in_w, std::size_t out_h,             \
                                   std::size_t out_w, std::size_t channels);

namespace serial {
PTSR_KERNEL_SET
}  // namespace serial

namespace omp {
PTSR_KERNEL_SET
}  // namespace omp

// Dispatching front-ends (use the active backend).
PTSR_KERNEL_SET

#undef PTSR_KERNEL_SET

/// Source coordinate mapping for bilinear resampling with align_corners off:
/// src = (dst + 0.5) * in / out - 0.5, clamped below at 0. `i0`/`i1` are the
/// two taps (i1 clamped to in-1) and `w1` the weight of i1.
struct BilinearTap {
    std::size_t i0, i1;
    double w1;
};
BilinearTap bilinear_tap(std::size_t dst, std::size_t in, std::size_t out) noexcept;

}  // namespace ptsr::kernels
