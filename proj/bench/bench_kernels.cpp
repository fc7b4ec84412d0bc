// Serial reference vs OpenMP kernels at the shapes a training step uses.
// Thread count follows OMP_NUM_THREADS.

#include <vector>

#include <benchmark/benchmark.h>

#include "sparselab/kernels.hpp"
#include "sparselab/rng.hpp"

namespace k = sparselab::kernels;

namespace {

std::vector<double> filled(std::size_t n, std::uint64_t seed) {
    sparselab::Rng rng(seed);
    std::vector<double> v(n);
    for (auto& x : v) {
        x = rng.uniform(-1.0, 1.0);
    }
    return v;
}

using Gemm = void (*)(std::span<const double>, std::span<const double>, std::span<double>, std::size_t,
                      std::size_t, std::size_t);

void run_gemm(benchmark::State& state, Gemm f) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const auto kk = static_cast<std::size_t>(state.range(1));
    const auto n = static_cast<std::size_t>(state.range(2));
    const auto a = filled(m * kk, 1);
    const auto b = filled(kk * n, 2);
    std::vector<double> c(m * n);
    for (auto _ : state) {
        f(a, b, c, m, kk, n);
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * m * kk * n));
}

void run_softmax(benchmark::State& state, bool (*f)(std::span<const double>, std::span<double>, std::size_t,
                                                     std::size_t)) {
    const auto m = static_cast<std::size_t>(state.range(0));
    const auto n = static_cast<std::size_t>(state.range(1));
    const auto x = filled(m * n, 3);
    std::vector<double> y(m * n);
    for (auto _ : state) {
        benchmark::DoNotOptimize(f(x, y, m, n));
    }
}

// Batch 16 × length 8 tokens through d=64 / ff=256 projections, plus a larger case.
void gemm_shapes(benchmark::internal::Benchmark* b) {
    b->Args({128, 64, 64})->Args({128, 64, 256})->Args({128, 256, 64})->Args({512, 256, 256});
}

void BM_gemm_nn_serial(benchmark::State& s) { run_gemm(s, k::serial::gemm_nn); }
void BM_gemm_nn_omp(benchmark::State& s) { run_gemm(s, k::omp::gemm_nn); }
void BM_gemm_nt_serial(benchmark::State& s) { run_gemm(s, k::serial::gemm_nt); }
void BM_gemm_nt_omp(benchmark::State& s) { run_gemm(s, k::omp::gemm_nt); }
void BM_gemm_tn_serial(benchmark::State& s) { run_gemm(s, k::serial::gemm_tn); }
void BM_gemm_tn_omp(benchmark::State& s) { run_gemm(s, k::omp::gemm_tn); }
void BM_softmax_serial(benchmark::State& s) { run_softmax(s, k::serial::softmax_rows); }
void BM_softmax_omp(benchmark::State& s) { run_softmax(s, k::omp::softmax_rows); }

}  // namespace

BENCHMARK(BM_gemm_nn_serial)->Apply(gemm_shapes);
BENCHMARK(BM_gemm_nn_omp)->Apply(gemm_shapes);
BENCHMARK(BM_gemm_nt_serial)->Apply(gemm_shapes);
BENCHMARK(BM_gemm_nt_omp)->Apply(gemm_shapes);
BENCHMARK(BM_gemm_tn_serial)->Apply(gemm_shapes);
BENCHMARK(BM_gemm_tn_omp)->Apply(gemm_shapes);
BENCHMARK(BM_softmax_serial)->Args({512, 8})->Args({4096, 32});
BENCHMARK(BM_softmax_omp)->Args({512, 8})->Args({4096, 32});

BENCHMARK_MAIN();
