// Serial versus OpenMP comparisons for the parallelizable kernels.
#include <benchmark/benchmark.h>

#include <cmath>
#include <utility>
#include <vector>

#include "spdc/coincidence.hpp"
#include "spdc/identify.hpp"
#include "spdc/imaging.hpp"
#include "spdc/pipeline.hpp"
#include "spdc/rng.hpp"
#include "spdc/simulator.hpp"

using namespace spdc;

namespace {

SimulationConfig bench_sim_config() {
  SimulationConfig sc;
  sc.pair_rate_per_hour = 2.0e5;
  sc.duration_hours = 0.05;
  sc.seed = 7;
  return sc;
}

const SimResult& bench_sim_result() {
  static const SimResult res = [] {
    DetectorLayout layout;
    return run_simulation(bench_sim_config(), layout, ToTCalibration{});
  }();
  return res;
}

std::vector<CandidatePair> ring_pairs(std::size_t n) {
  ExperimentGeometry geom;
  auto [cx, cy] = pixel_position(geom.ring_center_col, geom.ring_center_row);
  RngStream rng(11);
  std::vector<CandidatePair> pairs(n);
  for (auto& p : pairs) {
    const double phi = rng.uniform(-kPi, 0.0);
    const double rs = rng.normal(11.6, 0.8);
    const double ri = conjugate_radius(std::max(rs, 3.0), geom);
    p.signal.x_mm = cx + rs * std::cos(phi);
    p.signal.y_mm = cy + rs * std::sin(phi);
    p.idler.x_mm = cx - ri * std::cos(phi);
    p.idler.y_mm = cy - ri * std::sin(phi);
    p.r_s_mm = rs;
    p.r_i_mm = ri;
    p.azimuth_s_rad = phi;
    p.azimuth_i_rad = phi + kPi;
    p.detuning_calc_rad = geom.detuning_rad;
    p.passed = true;
  }
  return pairs;
}

void BM_Simulation(benchmark::State& state) {
  const bool parallel = state.range(0) != 0;
  DetectorLayout layout;
  ToTCalibration calib;
  SimulationConfig sc = bench_sim_config();
  for (auto _ : state) {
    SimResult res = run_simulation(sc, layout, calib, parallel);
    benchmark::DoNotOptimize(res.hits.data());
  }
}

void BM_Clustering(benchmark::State& state) {
  const bool parallel = state.range(0) != 0;
  DetectorLayout layout;
  ToTCalibration calib;
  const SimResult& res = bench_sim_result();
  for (auto _ : state) {
    auto clusters = cluster_hits(res.hits, layout, calib, {}, parallel);
    benchmark::DoNotOptimize(clusters.data());
  }
  state.counters["hits"] = static_cast<double>(res.hits.size());
}

void BM_ImageAccumulate(benchmark::State& state) {
  const bool parallel = state.range(0) != 0;
  static const std::vector<CandidatePair> pairs = ring_pairs(200000);
  for (auto _ : state) {
    auto imgs = accumulate(pairs, 1, 0.0, parallel);
    benchmark::DoNotOptimize(imgs.first.counts.data());
  }
}

void BM_Surface(benchmark::State& state) {
  const bool parallel = state.range(0) != 0;
  static const SpectrumModel h = default_spdc_spectrum();
  static const SpectrumModel g = default_pump_spectrum();
  static const std::vector<double> betas = logspace(1.0, 1.0e6, 8);
  static const std::vector<double> zetas = linspace(0.5, 4.0, 6);
  for (auto _ : state) {
    SurfaceResult surf = probability_surface(h, g, betas, zetas, parallel);
    benchmark::DoNotOptimize(surf.p.data());
  }
}

}  // namespace

BENCHMARK(BM_Simulation)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Clustering)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ImageAccumulate)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Surface)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
