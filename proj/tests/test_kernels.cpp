#include <gtest/gtest.h>

#include "ptsr/kernels.hpp"
#include "test_util.hpp"

namespace ptsr {
namespace {

using test::uniform_tensor;

struct ThreadCount {
    explicit ThreadCount(int n) : prev(kernels::max_threads()) { kernels::set_num_threads(n); }
    ~ThreadCount() { kernels::set_num_threads(prev); }
    int prev;
};

// Property: serial and OpenMP kernels agree bit-for-bit for random shapes and
// thread counts.
TEST(Kernels, OmpMatchesSerialBitExactly) {
    Rng rng(11);
    std::uniform_int_distribution<std::size_t> dim(1, 23);
    for (int trial = 0; trial < 40; ++trial) {
        ThreadCount threads(1 + trial % 4);
        const std::size_t n = dim(rng), m = dim(rng), p = dim(rng);
        const Tensor a = uniform_tensor({n, m}, rng, -1, 1);
        const Tensor b = uniform_tensor({m, p}, rng, -1, 1);
        Tensor cs({n, p}), co({n, p});
        kernels::serial::matmul(a.data(), b.data(), cs.data(), {n, m, p});
        kernels::omp::matmul(a.data(), b.data(), co.data(), {n, m, p});
        ASSERT_EQ(cs, co);

        const Tensor g = uniform_tensor({n, p}, rng, -1, 1);
        Tensor ts({m, p}, 0.5), to({m, p}, 0.5);
        kernels::serial::matmul_tn_acc(a.data(), g.data(), ts.data(), n, m, p);
        kernels::omp::matmul_tn_acc(a.data(), g.data(), to.data(), n, m, p);
        ASSERT_EQ(ts, to);

        const Tensor bt = uniform_tensor({p, m}, rng, -1, 1);
        Tensor ns({n, p}, -0.25), no({n, p}, -0.25);
        kernels::serial::matmul_nt_acc(a.data(), bt.data(), ns.data(), {n, m, p});
        kernels::omp::matmul_nt_acc(a.data(), bt.data(), no.data(), {n, m, p});
        ASSERT_EQ(ns, no);

        Tensor ss({n, m}), so({n, m});
        kernels::serial::softmax_rows(a.data(), ss.data(), n, m);
        kernels::omp::softmax_rows(a.data(), so.data(), n, m);
        ASSERT_EQ(ss, so);
        Tensor gs({n, m}), go({n, m});
        kernels::serial::softmax_rows_backward(ss.data(), a.data(), gs.data(), n, m);
        kernels::omp::softmax_rows_backward(so.data(), a.data(), go.data(), n, m);
        ASSERT_EQ(gs, go);

        Tensor xs({n, m}), xo({n, m});
        std::vector<double> is(n), io(n);
        kernels::serial::layernorm_rows(a.data(), xs.data(), is, n, m, 1e-5);
        kernels::omp::layernorm_rows(a.data(), xo.data(), io, n, m, 1e-5);
        ASSERT_EQ(xs, xo);
        ASSERT_EQ(is, io);
        Tensor ls({n, m}), lo({n, m});
        kernels::serial::layernorm_rows_backward(xs.data(), is, a.data(), ls.data(), n, m);
        kernels::omp::layernorm_rows_backward(xo.data(), io, a.data(), lo.data(), n, m);
        ASSERT_EQ(ls, lo);

        Tensor es({n, m}), eo({n, m});
        kernels::serial::gelu(a.data(), es.data());
        kernels::omp::gelu(a.data(), eo.data());
        ASSERT_EQ(es, eo);
    }
}

TEST(Kernels, ResampleOmpMatchesSerialBitExactly) {
    Rng rng(5);
    for (auto [ih, iw, oh, ow] : {std::array<std::size_t, 4>{4, 6, 8, 12},
                                  {8, 8, 4, 4},
                                  {3, 5, 7, 2},
                                  {16, 8, 32, 16}}) {
        ThreadCount threads(3);
        const Tensor in = uniform_tensor({ih, iw, 3}, rng);
        Tensor os({oh, ow, 3}), oo({oh, ow, 3});
        kernels::serial::resample_bilinear(in.data(), os.data(), ih, iw, oh, ow, 3);
        kernels::omp::resample_bilinear(in.data(), oo.data(), ih, iw, oh, ow, 3);
        ASSERT_EQ(os, oo);
        const Tensor g = uniform_tensor({oh, ow, 3}, rng, -1, 1);
        Tensor gs({ih, iw, 3}), go({ih, iw, 3});
        kernels::serial::resample_bilinear_adjoint(g.data(), gs.data(), ih, iw, oh, ow, 3);
        kernels::omp::resample_bilinear_adjoint(g.data(), go.data(), ih, iw, oh, ow, 3);
        ASSERT_EQ(gs, go);
    }
}

// <A x, y> == <x, A^T y> for the bilinear operator and its adjoint.
TEST(Kernels, ResampleAdjointIsTranspose) {
    Rng rng(9);
    const std::size_t ih = 5, iw = 7, oh = 10, ow = 3;
    const Tensor x = uniform_tensor({ih, iw, 2}, rng, -1, 1);
    const Tensor y = uniform_tensor({oh, ow, 2}, rng, -1, 1);
    Tensor ax({oh, ow, 2}), aty({ih, iw, 2});
    kernels::serial::resample_bilinear(x.data(), ax.data(), ih, iw, oh, ow, 2);
    kernels::serial::resample_bilinear_adjoint(y.data(), aty.data(), ih, iw, oh, ow, 2);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < ax.size(); ++i) lhs += ax[i] * y[i];
    for (std::size_t i = 0; i < aty.size(); ++i) rhs += x[i] * aty[i];
    EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Kernels, SoftmaxRowsSumToOne) {
    Rng rng(3);
    const Tensor x = uniform_tensor({6, 9}, rng, -20, 20);
    Tensor y({6, 9});
    kernels::softmax_rows(x.data(), y.data(), 6, 9);
    for (std::size_t r = 0; r < 6; ++r) {
        double s = 0;
        for (std::size_t c = 0; c < 9; ++c) s += y.at(r, c);
        EXPECT_NEAR(s, 1.0, 1e-12);
    }
}

TEST(Kernels, ScopedBackendRestores) {
    kernels::set_backend(kernels::Backend::omp);
    {
        kernels::ScopedBackend s(kernels::Backend::serial);
        EXPECT_EQ(kernels::backend(), kernels::Backend::serial);
    }
    EXPECT_EQ(kernels::backend(), kernels::Backend::omp);
}

}  // namespace
}  // namespace ptsr
