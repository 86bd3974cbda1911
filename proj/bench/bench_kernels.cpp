#include <benchmark/benchmark.h>

#include "tempus/discretizer.hpp"
#include "tempus/metrics.hpp"
#include "tempus/prv_ingest.hpp"
#include "tempus/replay.hpp"
#include "tempus/synth.hpp"

#include <sstream>

namespace {

using namespace tempus;

const AnnotatedTimeline& timeline() {
  static const AnnotatedTimeline tl = [] {
    synth::Scenario s;
    s.rank_count = 32;
    synth::Phase p;
    p.iterations = 2000;
    p.pattern = synth::Pattern::neighbor_stencil;
    p.message_bytes = 1024;
    p.injected_wait_ns = 3000;
    p.compute.distribution = synth::Distribution::linear_imbalance;
    p.compute.mean_ns = 40000;
    p.compute.max_over_mean = 1.4;
    s.phases = {p};
    std::istringstream in(synth::generate_trace(s).prv);
    return replay(load_prv(in, "bench.prv").trace).timeline;
  }();
  return tl;
}

std::vector<Window> tiling(std::int64_t count) {
  const auto& tl = timeline();
  return plan_windows(tl, std::max<Nanos>(1, tl.total_duration / count), 3).windows;
}

void BM_BoundaryClocks(benchmark::State& state) {
  const auto bounds = window_boundaries(tiling(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(boundary_clocks(timeline(), bounds));
}

void BM_BoundaryClocksSerial(benchmark::State& state) {
  const auto bounds = window_boundaries(tiling(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(serial::boundary_clocks(timeline(), bounds));
}

void BM_WindowSeries(benchmark::State& state) {
  const auto w = tiling(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(window_series(timeline(), w));
}

void BM_WindowSeriesSerial(benchmark::State& state) {
  const auto w = tiling(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(serial::window_series(timeline(), w));
}

}  // namespace

BENCHMARK(BM_BoundaryClocks)->Arg(100)->Arg(10000);
BENCHMARK(BM_BoundaryClocksSerial)->Arg(100)->Arg(10000);
BENCHMARK(BM_WindowSeries)->Arg(100)->Arg(10000);
BENCHMARK(BM_WindowSeriesSerial)->Arg(100)->Arg(10000);

BENCHMARK_MAIN();
