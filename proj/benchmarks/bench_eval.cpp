#include <random>

#include <benchmark/benchmark.h>

#include "mangapipe/eval.hpp"

using namespace mangapipe;

namespace {

void BM_Ami(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937 rng(11);
    std::uniform_int_distribution<int> label(0, static_cast<int>(n / 4 + 1));
    std::vector<int> a(n), b(n);
    for (auto& x : a) x = label(rng);
    for (auto& x : b) x = label(rng);
    for (auto _ : state) benchmark::DoNotOptimize(ami(a, b));
}
BENCHMARK(BM_Ami)->Arg(8)->Arg(64)->Arg(512)->Arg(4096);

void BM_AssociationAp(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937 rng(12);
    std::uniform_real_distribution<double> u(0, 1);
    Matrix m(n, n);
    EdgeList gt;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) m(i, j) = u(rng);
        gt.push_back({i, (i * 7) % n});
    }
    const auto cands = candidates_from_scores(m, false);
    for (auto _ : state) benchmark::DoNotOptimize(association_ap(cands, gt));
}
BENCHMARK(BM_AssociationAp)->Arg(16)->Arg(64)->Arg(256);

}  // namespace
