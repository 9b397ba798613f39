#include <benchmark/benchmark.h>

#include "tnd/circuit.hpp"
#include "tnd/mpo.hpp"
#include "tnd/rng.hpp"
#include "tnd/tensor.hpp"
#include "tnd/vardis.hpp"

namespace {

tnd::DenseTensor random_matrix(std::size_t n, std::uint64_t seed) {
    tnd::Rng rng(seed);
    tnd::DenseTensor t({n, n});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
    return t;
}

void BM_Contract64(benchmark::State& state) {
    const tnd::DenseTensor a = random_matrix(64, 1);
    const tnd::DenseTensor b = random_matrix(64, 2);
    for (auto _ : state) {
        benchmark::DoNotOptimize(tnd::contract(a, b, {{1, 0}}));
    }
}
BENCHMARK(BM_Contract64);

void BM_Svd(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const tnd::DenseTensor a = random_matrix(n, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(tnd::svd(a));
    }
}
BENCHMARK(BM_Svd)->Arg(16)->Arg(64);

void BM_ExpmSkew(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const tnd::DenseTensor lower = random_matrix(n, 4);
    for (auto _ : state) {
        benchmark::DoNotOptimize(tnd::expm_skew(lower));
    }
}
BENCHMARK(BM_ExpmSkew)->Arg(4)->Arg(64);

void BM_DecomposeReconstruct(benchmark::State& state) {
    const tnd::DenseTensor w = random_matrix(64, 5);
    for (auto _ : state) {
        benchmark::DoNotOptimize(tnd::reconstruct(tnd::decompose(w, 6)));
    }
}
BENCHMARK(BM_DecomposeReconstruct);

void BM_ApplyToState(benchmark::State& state) {
    tnd::Rng rng(6);
    tnd::Circuit c = tnd::build_brickwall(10, 4, 2, tnd::GateKind::Trainable);
    tnd::randomize_gates(c, rng, 0.3);
    tnd::DenseTensor psi({std::size_t{1} << 10});
    for (std::size_t i = 0; i < psi.size(); ++i) psi[i] = rng.normal();
    for (auto _ : state) {
        benchmark::DoNotOptimize(tnd::apply_to_state(c, psi));
    }
}
BENCHMARK(BM_ApplyToState);

void BM_SweepPass(benchmark::State& state) {
    tnd::Rng rng(7);
    tnd::Mpo m = [&] {
        std::vector<tnd::DenseTensor> sites;
        std::size_t left = 1;
        for (std::size_t k = 0; k < 6; ++k) {
            const std::size_t right = (k + 1 < 6) ? 2 : 1;
            tnd::DenseTensor s({left, 2, 2, right});
            for (std::size_t i = 0; i < s.size(); ++i) s[i] = rng.normal();
            sites.push_back(std::move(s));
            left = right;
        }
        return tnd::Mpo(std::move(sites));
    }();
    for (auto _ : state) {
        state.PauseTiming();
        tnd::Rng gate_rng(11);
        tnd::Circuit left = tnd::parse_circuit_spec("2b", 6);
        tnd::Circuit right = tnd::parse_circuit_spec("2b", 6);
        tnd::randomize_gates(left, gate_rng, 0.1);
        tnd::randomize_gates(right, gate_rng, 0.1);
        auto p = tnd::DisentangleProblem::make(m, tnd::truncate(m, 1), left, right);
        state.ResumeTiming();
        benchmark::DoNotOptimize(tnd::sweep(p, 1, 0.0, false));
    }
}
BENCHMARK(BM_SweepPass);

}  // namespace

BENCHMARK_MAIN();
