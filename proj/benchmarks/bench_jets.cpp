#include "pdecl/basis_net.hpp"
#include "pdecl/rng.hpp"

#include <benchmark/benchmark.h>

using namespace pdecl;

namespace {

void EvalJet(benchmark::State& state) {
    const auto width = static_cast<std::size_t>(state.range(0));
    NetworkParams net = init_params({2, width, width, width, 100}, 3);
    std::vector<DerivSeed> seeds{DerivSeed::coordinate(0, 2, 2.0),
                                 DerivSeed::coordinate(1, 2, 2.0)};
    DenseVector x{0.3, -0.2};
    JetTape tape;
    for (auto _ : state) {
        auto jet = eval_jet_recording(net, x, seeds, 2, tape);
        benchmark::DoNotOptimize(jet.values.data());
    }
}
BENCHMARK(EvalJet)->Arg(32)->Arg(64)->Arg(128);

void BackpropJet(benchmark::State& state) {
    const auto width = static_cast<std::size_t>(state.range(0));
    NetworkParams net = init_params({2, width, width, width, 100}, 3);
    std::vector<DerivSeed> seeds{DerivSeed::coordinate(0, 2, 2.0),
                                 DerivSeed::coordinate(1, 2, 2.0)};
    DenseVector x{0.3, -0.2};
    Rng rng(5);
    JetBundle adj;
    adj.order = 2;
    adj.values.resize(100);
    adj.first = {DenseVector(100), DenseVector(100)};
    adj.second = {DenseVector(100), DenseVector(100)};
    for (double& v : adj.values) v = rng.normal();
    for (auto& block : adj.first)
        for (double& v : block) v = rng.normal();
    for (auto& block : adj.second)
        for (double& v : block) v = rng.normal();

    JetTape tape;
    ParamGradient grad = zero_gradient_like(net);
    for (auto _ : state) {
        eval_jet_recording(net, x, seeds, 2, tape);
        backprop_from_tape(net, tape, adj, grad);
        benchmark::DoNotOptimize(grad.weights[0].data().data());
    }
}
BENCHMARK(BackpropJet)->Arg(32)->Arg(64)->Arg(128);

} // namespace
