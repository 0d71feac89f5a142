#include <random>

#include <benchmark/benchmark.h>

#include "mangapipe/page_graph.hpp"
#include "mangapipe/reconcile.hpp"

using namespace mangapipe;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) m(i, j) = u(rng);
    return m;
}

void BM_Hungarian(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    const Matrix m = random_matrix(n, n + n / 4, 7);
    for (auto _ : state) benchmark::DoNotOptimize(hungarian(m));
    state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_Hungarian)->RangeMultiplier(2)->Range(8, 256)->Complexity();

void BM_MatchByIou(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> pos(0, 1000), size(10, 120);
    std::vector<BBox> a, b;
    for (std::size_t i = 0; i < n; ++i) {
        const double x = pos(rng), y = pos(rng);
        a.push_back({x, y, x + size(rng), y + size(rng)});
        b.push_back({x + 3, y - 2, x + size(rng), y + size(rng)});
    }
    for (auto _ : state) benchmark::DoNotOptimize(match_by_iou(a, b, 0.5));
}
BENCHMARK(BM_MatchByIou)->Arg(16)->Arg(64)->Arg(200);

void BM_BuildGraphAssociations(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Matrix cc = random_matrix(n, n, 1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) cc(i, j) = cc(j, i);
    const Matrix tc = random_matrix(n, n, 2), tt = random_matrix(n, n, 3);
    for (auto _ : state) {
        benchmark::DoNotOptimize(cluster_characters(cc, 0.5));
        benchmark::DoNotOptimize(assign_speakers(tc, 0.5));
        benchmark::DoNotOptimize(link_tails(tt, 0.5));
    }
}
BENCHMARK(BM_BuildGraphAssociations)->Arg(10)->Arg(40)->Arg(100);

}  // namespace
