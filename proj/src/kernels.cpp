#include "ptsr/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <vector>

#include <omp.h>

namespace ptsr::kernels {

namespace {

std::atomic<Backend> g_backend{Backend::omp};

inline double gelu_value(double x) {
    return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
}

inline double gelu_grad(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return cdf + x * pdf;
}

}  // namespace

void set_backend(Backend b) noexcept { g_backend.store(b); }
Backend backend() noexcept { return g_backend.load(); }

void set_num_threads(int threads) noexcept {
    if (threads > 0) omp_set_num_threads(threads);
}

int max_threads() noexcept { return omp_get_max_threads(); }

BilinearTap bilinear_tap(std::size_t dst, std::size_t in, std::size_t out) noexcept {
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    double src = (static_cast<double>(dst) + 0.5) * scale - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    return {i0, i1, src - static_cast<double>(i0)};
}

// ---------------------------------------------------------------------------
// serial reference
// ---------------------------------------------------------------------------
namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            MatDims d) {
    for (std::size_t i = 0; i < d.n; ++i) {
        for (std::size_t j = 0; j < d.p; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d.m; ++k) s += a[i * d.m + k] * b[k * d.p + j];
            c[i * d.p + j] = s;
        }
    }
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> b,
                   std::span<double> c, std::size_t r, std::size_t n, std::size_t p) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < p; ++j) {
            double s = c[i * p + j];
            for (std::size_t k = 0; k < r; ++k) s += a[k * n + i] * b[k * p + j];
            c[i * p + j] = s;
        }
    }
}

void matmul_nt_acc(std::span<const double> a, std::span<const double> b,
                   std::span<double> c, MatDims d) {
    for (std::size_t i = 0; i < d.n; ++i) {
        for (std::size_t j = 0; j < d.p; ++j) {
            double s = c[i * d.p + j];
            for (std::size_t k = 0; k < d.m; ++k) s += a[i * d.m + k] * b[j * d.m + k];
            c[i * d.p + j] = s;
        }
    }
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows,
                  std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xr = x.data() + r * cols;
        double* yr = y.data() + r * cols;
        double mx = xr[0];
        for (std::size_t c = 1; c < cols; ++c) mx = std::max(mx, xr[c]);
        double sum = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            yr[c] = std::exp(xr[c] - mx);
            sum += yr[c];
        }
        for (std::size_t c = 0; c < cols; ++c) yr[c] /= sum;
    }
}

void softmax_rows_backward(std::span<const double> y, std::span<const double> gy,
                           std::span<double> gx, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t o = r * cols;
        double dot = 0.0;
        for (std::size_t c = 0; c < cols; ++c) dot += y[o + c] * gy[o + c];
        for (std::size_t c = 0; c < cols; ++c) gx[o + c] += y[o + c] * (gy[o + c] - dot);
    }
}

void layernorm_rows(std::span<const double> x, std::span<double> xhat,
                    std::span<double> inv_std, std::size_t rows, std::size_t cols,
                    double eps) {
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t o = r * cols;
        double mean = 0.0;
        for (std::size_t c = 0; c < cols; ++c) mean += x[o + c];
        mean /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            const double t = x[o + c] - mean;
            var += t * t;
        }
        var /= static_cast<double>(cols);
        const double is = 1.0 / std::sqrt(var + eps);
        inv_std[r] = is;
        for (std::size_t c = 0; c < cols; ++c) xhat[o + c] = (x[o + c] - mean) * is;
    }
}

void layernorm_rows_backward(std::span<const double> xhat, std::span<const double> inv_std,
                             std::span<const double> gy, std::span<double> gx,
                             std::size_t rows, std::size_t cols) {
    const double inv_n = 1.0 / static_cast<double>(cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t o = r * cols;
        double mg = 0.0, mgx = 0.0;
        for (std::size_t c = 0; c < cols; ++c) {
            mg += gy[o + c];
            mgx += gy[o + c] * xhat[o + c];
        }
        mg *= inv_n;
        mgx *= inv_n;
        for (std::size_t c = 0; c < cols; ++c)
            gx[o + c] += inv_std[r] * (gy[o + c] - mg - xhat[o + c] * mgx);
    }
}

void gelu(std::span<const double> x, std::span<double> y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = gelu_value(x[i]);
}

void gelu_backward(std::span<const double> x, std::span<const double> gy,
                   std::span<double> gx) {
    for (std::size_t i = 0; i < x.size(); ++i) gx[i] += gy[i] * gelu_grad(x[i]);
}

void resample_bilinear(std::span<const double> in, std::span<double> out, std::size_t in_h,
                       std::size_t in_w, std::size_t out_h, std::size_t out_w,
                       std::size_t ch) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        const auto ty = bilinear_tap(oy, in_h, out_h);
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto tx = bilinear_tap(ox, in_w, out_w);
            for (std::size_t c = 0; c < ch; ++c) {
                const double v00 = in[(ty.i0 * in_w + tx.i0) * ch + c];
                const double v01 = in[(ty.i0 * in_w + tx.i1) * ch + c];
                const double v10 = in[(ty.i1 * in_w + tx.i0) * ch + c];
                const double v11 = in[(ty.i1 * in_w + tx.i1) * ch + c];
                const double top = (1.0 - tx.w1) * v00 + tx.w1 * v01;
                const double bot = (1.0 - tx.w1) * v10 + tx.w1 * v11;
                out[(oy * out_w + ox) * ch + c] = (1.0 - ty.w1) * top + ty.w1 * bot;
            }
        }
    }
}

void resample_bilinear_adjoint(std::span<const double> gout, std::span<double> gin,
                               std::size_t in_h, std::size_t in_w, std::size_t out_h,
                               std::size_t out_w, std::size_t ch) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        const auto ty = bilinear_tap(oy, in_h, out_h);
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto tx = bilinear_tap(ox, in_w, out_w);
            for (std::size_t c = 0; c < ch; ++c) {
                const double g = gout[(oy * out_w + ox) * ch + c];
                const double gy0 = (1.0 - ty.w1) * g;
                const double gy1 = ty.w1 * g;
                gin[(ty.i0 * in_w + tx.i0) * ch + c] += (1.0 - tx.w1) * gy0;
                gin[(ty.i0 * in_w + tx.i1) * ch + c] += tx.w1 * gy0;
                gin[(ty.i1 * in_w + tx.i0) * ch + c] += (1.0 - tx.w1) * gy1;
                gin[(ty.i1 * in_w + tx.i1) * ch + c] += tx.w1 * gy1;
            }
        }
    }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP
// ---------------------------------------------------------------------------
namespace omp {

namespace {

// c[i, :] (+)= sum_k a(i, k) * b[k, :] for rows [i0, i1), k ascending per
// element. a(i, k) = a[i * si + k * sk]. Four rows share each b row load.
void gemm_rows(const double* a, std::size_t si, std::size_t sk, const double* b, double* c,
               std::size_t i0, std::size_t i1, std::size_t m, std::size_t p) {
    std::size_t i = i0;
    for (; i + 4 <= i1; i += 4) {
        double* c0 = c + i * p;
        double* c1 = c0 + p;
        double* c2 = c1 + p;
        double* c3 = c2 + p;
        for (std::size_t k = 0; k < m; ++k) {
            const double a0 = a[i * si + k * sk], a1 = a[(i + 1) * si + k * sk];
            const double a2 = a[(i + 2) * si + k * sk], a3 = a[(i + 3) * si + k * sk];
            const double* bk = b + k * p;
            for (std::size_t j = 0; j < p; ++j) {
                const double bj = bk[j];
                c0[j] += a0 * bj;
                c1[j] += a1 * bj;
                c2[j] += a2 * bj;
                c3[j] += a3 * bj;
            }
        }
    }
    for (; i < i1; ++i) {
        double* ci = c + i * p;
        for (std::size_t k = 0; k < m; ++k) {
            const double aik = a[i * si + k * sk];
            const double* bk = b + k * p;
            for (std::size_t j = 0; j < p; ++j) ci[j] += aik * bk[j];
        }
    }
}

void gemm(const double* a, std::size_t si, std::size_t sk, const double* b, double* c,
          std::size_t n, std::size_t m, std::size_t p) {
    const auto blocks = static_cast<std::ptrdiff_t>((n + 3) / 4);
#pragma omp parallel for schedule(static) if (n * m * p > 32768)
    for (std::ptrdiff_t bi = 0; bi < blocks; ++bi) {
        const auto i0 = static_cast<std::size_t>(bi) * 4;
        gemm_rows(a, si, sk, b, c, i0, std::min(i0 + 4, n), m, p);
    }
}

}  // namespace

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            MatDims d) {
    std::fill(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(d.n * d.p), 0.0);
    gemm(a.data(), d.m, 1, b.data(), c.data(), d.n, d.m, d.p);
}

void matmul_tn_acc(std::span<const double> a, std::span<const double> b,
                   std::span<double> c, std::size_t r, std::size_t n, std::size_t p) {
    gemm(a.data(), 1, n, b.data(), c.data(), n, r, p);
}

void matmul_nt_acc(std::span<const double> a, std::span<const double> b,
                   std::span<double> c, MatDims d) {
    // b is p x m; transpose to m x p so the inner loop runs over contiguous j.
    std::vector<double> bt(d.m * d.p);
    for (std::size_t j = 0; j < d.p; ++j)
        for (std::size_t k = 0; k < d.m; ++k) bt[k * d.p + j] = b[j * d.m + k];
    gemm(a.data(), d.m, 1, bt.data(), c.data(), d.n, d.m, d.p);
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows,
                  std::size_t cols) {
    const auto nr = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t rr = 0; rr < nr; ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        serial::softmax_rows(x.subspan(r * cols, cols), y.subspan(r * cols, cols), 1, cols);
    }
}

void softmax_rows_backward(std::span<const double> y, std::span<const double> gy,
                           std::span<double> gx, std::size_t rows, std::size_t cols) {
    const auto nr = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t rr = 0; rr < nr; ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        serial::softmax_rows_backward(y.subspan(r * cols, cols), gy.subspan(r * cols, cols),
                                      gx.subspan(r * cols, cols), 1, cols);
    }
}

void layernorm_rows(std::span<const double> x, std::span<double> xhat,
                    std::span<double> inv_std, std::size_t rows, std::size_t cols,
                    double eps) {
    const auto nr = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t rr = 0; rr < nr; ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        serial::layernorm_rows(x.subspan(r * cols, cols), xhat.subspan(r * cols, cols),
                               inv_std.subspan(r, 1), 1, cols, eps);
    }
}

void layernorm_rows_backward(std::span<const double> xhat, std::span<const double> inv_std,
                             std::span<const double> gy, std::span<double> gx,
                             std::size_t rows, std::size_t cols) {
    const auto nr = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t rr = 0; rr < nr; ++rr) {
        const auto r = static_cast<std::size_t>(rr);
        serial::layernorm_rows_backward(xhat.subspan(r * cols, cols), inv_std.subspan(r, 1),
                                        gy.subspan(r * cols, cols),
                                        gx.subspan(r * cols, cols), 1, cols);
    }
}

void gelu(std::span<const double> x, std::span<double> y) {
    const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) y[i] = gelu_value(x[i]);
}

void gelu_backward(std::span<const double> x, std::span<const double> gy,
                   std::span<double> gx) {
    const auto n = static_cast<std::ptrdiff_t>(x.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < n; ++i) gx[i] += gy[i] * gelu_grad(x[i]);
}

void resample_bilinear(std::span<const double> in, std::span<double> out, std::size_t in_h,
                       std::size_t in_w, std::size_t out_h, std::size_t out_w,
                       std::size_t ch) {
    const auto nr = static_cast<std::ptrdiff_t>(out_h);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t yy = 0; yy < nr; ++yy) {
        const auto oy = static_cast<std::size_t>(yy);
        const auto ty = bilinear_tap(oy, in_h, out_h);
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            const auto tx = bilinear_tap(ox, in_w, out_w);
            for (std::size_t c = 0; c < ch; ++c) {
                const double v00 = in[(ty.i0 * in_w + tx.i0) * ch + c];
                const double v01 = in[(ty.i0 * in_w + tx.i1) * ch + c];
                const double v10 = in[(ty.i1 * in_w + tx.i0) * ch + c];
                const double v11 = in[(ty.i1 * in_w + tx.i1) * ch + c];
                const double top = (1.0 - tx.w1) * v00 + tx.w1 * v01;
                const double bot = (1.0 - tx.w1) * v10 + tx.w1 * v11;
                out[(oy * out_w + ox) * ch + c] = (1.0 - ty.w1) * top + ty.w1 * bot;
            }
        }
    }
}

// Gather form of the serial scatter: each thread owns whole input rows and
// replays the serial contribution order restricted to those rows.
void resample_bilinear_adjoint(std::span<const double> gout, std::span<double> gin,
                               std::size_t in_h, std::size_t in_w, std::size_t out_h,
                               std::size_t out_w, std::size_t ch) {
    const auto nr = static_cast<std::ptrdiff_t>(in_h);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t yy = 0; yy < nr; ++yy) {
        const auto iy = static_cast<std::size_t>(yy);
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const auto ty = bilinear_tap(oy, in_h, out_h);
            if (ty.i0 != iy && ty.i1 != iy) continue;
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const auto tx = bilinear_tap(ox, in_w, out_w);
                for (std::size_t c = 0; c < ch; ++c) {
                    const double g = gout[(oy * out_w + ox) * ch + c];
                    const double gy0 = (1.0 - ty.w1) * g;
                    const double gy1 = ty.w1 * g;
                    if (ty.i0 == iy) {
                        gin[(iy * in_w + tx.i0) * ch + c] += (1.0 - tx.w1) * gy0;
                        gin[(iy * in_w + tx.i1) * ch + c] += tx.w1 * gy0;
                    }
                    if (ty.i1 == iy) {
                        gin[(iy * in_w + tx.i0) * ch + c] += (1.0 - tx.w1) * gy1;
                        gin[(iy * in_w + tx.i1) * ch + c] += tx.w1 * gy1;
                    }
                }
            }
        }
    }
}

}  // namespace omp

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------
#define PTSR_DISPATCH(fn, ...)                              \
    do {                                                    \
        if (backend() == Backend::omp) omp::fn(__VA_ARGS__); \
        else serial::fn(__VA_ARGS__);                       \
    } while (0)

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            MatDims d) {
    PTSR_DISPATCH(matmul, a, b, c, d);
}
void matmul_tn_acc(std::span<const double> a, std::span<const double> b,
                   std::span<double> c, std::size_t r, std::size_t n, std::size_t p) {
    PTSR_DISPATCH(matmul_tn_acc, a, b, c, r, n, p);
}
void matmul_nt_acc(std::span<const double> a, std::span<const double> b,
                   std::span<double> c, MatDims d) {
    PTSR_DISPATCH(matmul_nt_acc, a, b, c, d);
}
void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows,
                  std::size_t cols) {
    PTSR_DISPATCH(softmax_rows, x, y, rows, cols);
}
void softmax_rows_backward(std::span<const double> y, std::span<const double> gy,
                           std::span<double> gx, std::size_t rows, std::size_t cols) {
    PTSR_DISPATCH(softmax_rows_backward, y, gy, gx, rows, cols);
}
void layernorm_rows(std::span<const double> x, std::span<double> xhat,
                    std::span<double> inv_std, std::size_t rows, std::size_t cols,
                    double eps) {
    PTSR_DISPATCH(layernorm_rows, x, xhat, inv_std, rows, cols, eps);
}
void layernorm_rows_backward(std::span<const double> xhat, std::span<const double> inv_std,
                             std::span<const double> gy, std::span<double> gx,
                             std::size_t rows, std::size_t cols) {
    PTSR_DISPATCH(layernorm_rows_backward, xhat, inv_std, gy, gx, rows, cols);
}
void gelu(std::span<const double> x, std::span<double> y) { PTSR_DISPATCH(gelu, x, y); }
void gelu_backward(std::span<const double> x, std::span<const double> gy,
                   std::span<double> gx) {
    PTSR_DISPATCH(gelu_backward, x, gy, gx);
}
void resample_bilinear(std::span<const double> in, std::span<double> out, std::size_t in_h,
                       std::size_t in_w, std::size_t out_h, std::size_t out_w,
                       std::size_t ch) {
    PTSR_DISPATCH(resample_bilinear, in, out, in_h, in_w, out_h, out_w, ch);
}
void resample_bilinear_adjoint(std::span<const double> gout, std::span<double> gin,
                               std::size_t in_h, std::size_t in_w, std::size_t out_h,
                               std::size_t out_w, std::size_t ch) {
    PTSR_DISPATCH(resample_bilinear_adjoint, gout, gin, in_h, in_w, out_h, out_w, ch);
}

#undef PTSR_DISPATCH

}  // namespace ptsr::kernels
