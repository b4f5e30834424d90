// Serial reference vs OpenMP kernels. Thread count for the parallel
// variants is the benchmark argument.
#include <benchmark/benchmark.h>
#include <omp.h>

#include "mmloc/io.hpp"
#include "mmloc/nn.hpp"
#include "mmloc/serial.hpp"

using namespace mmloc;

namespace {

struct Fixture {
  Scenario scenario = io::stock_scenario("lroom3");
  AnchorRoster roster = build_anchor_roster(scenario);
  std::vector<Vec2> probes = interior_grid(scenario.room, 0.1);
  DatasetRequest request = [] {
    DatasetRequest r;
    r.sigma = deg2rad(5.0);
    r.seed = 1;
    return r;
  }();
  Dataset dataset = build_dataset(scenario, roster, request);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_CoverageSerial(benchmark::State& st) {
  const auto& f = fixture();
  for (auto _ : st)
    for (const auto& a : f.roster.anchors) benchmark::DoNotOptimize(serial::path_coverage(a, f.scenario.room, f.probes));
}

void BM_CoverageOmp(benchmark::State& st) {
  const auto& f = fixture();
  omp_set_num_threads(static_cast<int>(st.range(0)));
  for (auto _ : st)
    for (const auto& a : f.roster.anchors) benchmark::DoNotOptimize(path_coverage(a, f.scenario.room, f.probes));
}

void BM_DatasetSerial(benchmark::State& st) {
  const auto& f = fixture();
  for (auto _ : st) benchmark::DoNotOptimize(serial::build_dataset(f.scenario, f.roster, f.request));
}

void BM_DatasetOmp(benchmark::State& st) {
  const auto& f = fixture();
  for (auto _ : st)
    benchmark::DoNotOptimize(build_dataset(f.scenario, f.roster, f.request, static_cast<int>(st.range(0))));
}

void BM_LabelSerial(benchmark::State& st) {
  const auto& f = fixture();
  for (auto _ : st) benchmark::DoNotOptimize(serial::label_dataset(f.dataset, f.roster, f.scenario.room));
}

void BM_LabelOmp(benchmark::State& st) {
  const auto& f = fixture();
  for (auto _ : st)
    benchmark::DoNotOptimize(label_dataset(f.dataset, f.roster, f.scenario.room, {}, static_cast<int>(st.range(0))));
}

void BM_Tune(benchmark::State& st) {
  const auto& f = fixture();
  nn::TrainConfig base;
  base.max_epochs = 20;
  const nn::TuneGrid grid{{0.6, 0.7, 0.8}, {0.0, 0.05}, {0.001, 0.003}};
  for (auto _ : st) benchmark::DoNotOptimize(nn::tune(f.dataset, grid, base, static_cast<int>(st.range(0))));
}

}  // namespace

BENCHMARK(BM_CoverageSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_CoverageOmp)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DatasetSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_DatasetOmp)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LabelSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LabelOmp)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Tune)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
