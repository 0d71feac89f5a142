#include <random>

#include <benchmark/benchmark.h>

#include "mangapipe/token_codec.hpp"

using namespace mangapipe;

namespace {

std::vector<DetectionRecord> records(std::size_t n) {
    std::mt19937 rng(5);
    std::uniform_int_distribution<int> bin(0, 899), ext(1, 99), kind(0, 3);
    std::vector<DetectionRecord> out;
    for (std::size_t i = 0; i < n; ++i) {
        const int x = bin(rng), y = bin(rng);
        out.push_back({{x, y, x + ext(rng), y + ext(rng)}, kAllNodeKinds[kind(rng)], i});
    }
    return out;
}

void BM_ParseDetection(benchmark::State& state) {
    const auto tokens = serialize_detection(records(static_cast<std::size_t>(state.range(0))));
    for (auto _ : state) benchmark::DoNotOptimize(parse_detection(tokens));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(tokens.size()));
}
BENCHMARK(BM_ParseDetection)->Arg(10)->Arg(100)->Arg(1000);

void BM_ParseGrounded(benchmark::State& state) {
    GroundedCaption c;
    for (int i = 0; i < state.range(0); ++i) {
        c.segments.push_back(PlainSegment{" and then "});
        c.segments.push_back(PhraseSegment{"the tall man", {{1, 2, 300, 400}, {500, 500, 600, 650}}});
    }
    const auto tokens = serialize_grounded_caption(c);
    for (auto _ : state) benchmark::DoNotOptimize(parse_grounded_caption(tokens));
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(tokens.size()));
}
BENCHMARK(BM_ParseGrounded)->Arg(4)->Arg(64);

void BM_Notation(benchmark::State& state) {
    const std::string text = to_notation(serialize_detection(records(200)));
    for (auto _ : state) benchmark::DoNotOptimize(from_notation(text));
}
BENCHMARK(BM_Notation);

}  // namespace
