#include "pdecl/oracles.hpp"
#include "pdecl/pde_cl.hpp"
#include "pdecl/rng.hpp"

#include <benchmark/benchmark.h>

using namespace pdecl;

namespace {

DenseMatrix bench_system(std::size_t n, std::size_t cols, Rng& rng) {
    DenseMatrix A(n, cols);
    for (double& v : A.data()) v = 0.3 * rng.normal();
    for (std::size_t i = 0; i < std::min(n, cols); ++i) A(i, i) += 3.0;
    return A;
}

void FitLinear(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(7);
    DenseMatrix A = bench_system(n, n, rng);
    DenseVector b(n);
    for (double& v : b) v = rng.normal();
    for (auto _ : state) {
        auto w = fit_linear(A, b, 1e-8);
        benchmark::DoNotOptimize(w.omega.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(FitLinear)->Arg(50)->Arg(100)->Arg(200)->Complexity();

void LaxWendroff(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    ParameterField beta;
    beta.kind = FieldKind::Wavespeed;
    beta.nx = 16;
    beta.values.assign(16, 1.5);
    for (auto _ : state) {
        auto sol = lax_wendroff_convection(beta, n, n);
        benchmark::DoNotOptimize(sol.values.data());
    }
    state.SetComplexityN(state.range(0));
}
BENCHMARK(LaxWendroff)->Arg(100)->Arg(200)->Arg(400)->Complexity();

void GmresKkt(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Rng rng(11);
    DenseMatrix B = bench_system(n / 2, n, rng);
    DenseMatrix A = bench_system(n / 4, n, rng);
    DenseVector y(n / 2);
    for (double& v : y) v = rng.normal();
    for (auto _ : state) {
        auto w = fit_eqqp(B, y, A, 1e-8);
        benchmark::DoNotOptimize(w.omega.data());
    }
}
BENCHMARK(GmresKkt)->Arg(64)->Arg(128);

} // namespace

BENCHMARK_MAIN();
