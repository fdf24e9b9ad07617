// Serial reference vs OpenMP kernels on transformer-sized operands.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "ptsr/kernels.hpp"

namespace k = ptsr::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed) {
    std::mt19937_64 gen(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (double& x : v) x = u(gen);
    return v;
}

// tokens x dim x dim, e.g. 256 patches of 192 features through a linear layer
template <auto Fn>
void bm_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto m = static_cast<std::size_t>(state.range(1));
    const auto p = static_cast<std::size_t>(state.range(2));
    const auto a = random_vec(n * m, 1), b = random_vec(m * p, 2);
    std::vector<double> c(n * p);
    for (auto _ : state) {
        Fn(a, b, c, k::MatDims{n, m, p});
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * m * p));
}

template <auto Fn>
void bm_matmul_nt(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const auto m = static_cast<std::size_t>(state.range(1));
    const auto p = static_cast<std::size_t>(state.range(2));
    const auto a = random_vec(n * m, 3), b = random_vec(p * m, 4);
    std::vector<double> c(n * p, 0.0);
    for (auto _ : state) {
        Fn(a, b, c, k::MatDims{n, m, p});
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * m * p));
}

template <auto Fn>
void bm_matmul_tn(benchmark::State& state) {
    const auto r = static_cast<std::size_t>(state.range(0));
    const auto n = static_cast<std::size_t>(state.range(1));
    const auto p = static_cast<std::size_t>(state.range(2));
    const auto a = random_vec(r * n, 5), b = random_vec(r * p, 6);
    std::vector<double> c(n * p, 0.0);
    for (auto _ : state) {
        Fn(a, b, c, r, n, p);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * r * n * p));
}

template <auto Fn>
void bm_softmax(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    const auto x = random_vec(rows * rows, 7);
    std::vector<double> y(x.size());
    for (auto _ : state) {
        Fn(x, y, rows, rows);
        benchmark::DoNotOptimize(y.data());
    }
}

template <auto Fn>
void bm_layernorm(benchmark::State& state) {
    const auto rows = static_cast<std::size_t>(state.range(0));
    const auto cols = static_cast<std::size_t>(state.range(1));
    const auto x = random_vec(rows * cols, 8);
    std::vector<double> xhat(x.size()), inv(rows);
    for (auto _ : state) {
        Fn(x, xhat, inv, rows, cols, 1e-5);
        benchmark::DoNotOptimize(xhat.data());
    }
}

template <auto Fn>
void bm_resample(benchmark::State& state) {
    const auto side = static_cast<std::size_t>(state.range(0));
    const auto in = random_vec(side * side * 3, 9);
    std::vector<double> out(4 * side * side * 3);
    for (auto _ : state) {
        Fn(in, out, side, side, 2 * side, 2 * side, 3);
        benchmark::DoNotOptimize(out.data());
    }
}

void matmul_shapes(benchmark::internal::Benchmark* b) {
    b->Args({16, 192, 192})->Args({256, 192, 192})->Args({256, 192, 768})->Args({1024, 48, 48});
}

}  // namespace

BENCHMARK(bm_matmul<k::serial::matmul>)->Apply(matmul_shapes)->Name("matmul/serial");
BENCHMARK(bm_matmul<k::omp::matmul>)->Apply(matmul_shapes)->Name("matmul/omp");
BENCHMARK(bm_matmul_nt<k::serial::matmul_nt_acc>)->Apply(matmul_shapes)->Name("matmul_nt/serial");
BENCHMARK(bm_matmul_nt<k::omp::matmul_nt_acc>)->Apply(matmul_shapes)->Name("matmul_nt/omp");
BENCHMARK(bm_matmul_tn<k::serial::matmul_tn_acc>)->Apply(matmul_shapes)->Name("matmul_tn/serial");
BENCHMARK(bm_matmul_tn<k::omp::matmul_tn_acc>)->Apply(matmul_shapes)->Name("matmul_tn/omp");
BENCHMARK(bm_softmax<k::serial::softmax_rows>)->Arg(64)->Arg(256)->Name("softmax/serial");
BENCHMARK(bm_softmax<k::omp::softmax_rows>)->Arg(64)->Arg(256)->Name("softmax/omp");
BENCHMARK(bm_layernorm<k::serial::layernorm_rows>)->Args({256, 192})->Name("layernorm/serial");
BENCHMARK(bm_layernorm<k::omp::layernorm_rows>)->Args({256, 192})->Name("layernorm/omp");
BENCHMARK(bm_resample<k::serial::resample_bilinear>)->Arg(64)->Arg(256)->Name("resample/serial");
BENCHMARK(bm_resample<k::omp::resample_bilinear>)->Arg(64)->Arg(256)->Name("resample/omp");

BENCHMARK_MAIN();
