#include "spdc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "spdc/errors.hpp"
#include "test_util.hpp"

using namespace spdc;

namespace {

SimulationConfig base_config() {
  SimulationConfig cfg;
  cfg.seed = 1234;
  cfg.duration_hours = 0.05;
  return cfg;
}

// chi^2 0.999 quantiles for the degrees of freedom used below.
constexpr double kChi2_999_19 = 43.820;
constexpr double kChi2_999_24 = 51.179;

}  // namespace

TEST_CASE("pair sampling invariants") {
  auto cfg = base_config();
  RngStream rng(7, 0);

  SUBCASE("energy closure and anti-collinearity") {
    for (int i = 0; i < 2000; ++i) {
      auto t = sample_pair(rng, cfg);
      CHECK(t.signal.energy_kev + t.idler.energy_kev == 15.0);
      double dphi = std::fabs(t.signal.azimuth_rad - t.idler.azimuth_rad);
      CHECK(dphi == doctest::Approx(kPi).epsilon(1e-12));
      CHECK(t.detuning_rad > 0);
      CHECK(t.signal.y_mm <= t.idler.y_mm);
      CHECK(t.signal.b == doctest::Approx(1.0 - t.idler.b).epsilon(1e-12));
      CHECK(t.signal.b >= cfg.geom.b_min);
      CHECK(t.signal.b <= cfg.geom.b_max);
    }
  }

  SUBCASE("zero spread pins the detuning") {
    auto fixed = cfg;
    fixed.geom.detuning_sigma_rad = 0.0;
    for (int i = 0; i < 500; ++i) {
      auto t = sample_pair(rng, fixed);
      CHECK(t.detuning_rad == fixed.geom.detuning_rad);
    }
  }

  SUBCASE("detuning sample mean matches the configured spread") {
    const int n = 100000;
    double sum = 0;
    for (int i = 0; i < n; ++i) sum += sample_pair(rng, cfg).detuning_rad;
    double mean = sum / n;
    double tol = 3.0 * cfg.geom.detuning_sigma_rad / std::sqrt(double(n));
    CHECK(std::fabs(mean - cfg.geom.detuning_rad) < tol);
  }

  SUBCASE("positions sit on the sampled ring radii") {
    auto [cx, cy] = pixel_position(cfg.geom.ring_center_col,
                                   cfg.geom.ring_center_row);
    for (int i = 0; i < 500; ++i) {
      auto t = sample_pair(rng, cfg);
      double rs = std::hypot(t.signal.x_mm - cx, t.signal.y_mm - cy);
      double expect =
          cfg.geom.crystal_to_detector_mm * std::tan(t.signal.alpha_rad);
      CHECK(rs == doctest::Approx(expect).epsilon(1e-9));
    }
  }
}

TEST_CASE("sampled fractions follow the b(1-b) weight") {
  auto cfg = base_config();
  RngStream rng(11, 0);
  const int n = 200000;
  const int bins = 20;
  std::vector<double> counts(bins, 0.0);
  double lo = cfg.geom.b_min, hi = cfg.geom.b_max;
  for (int i = 0; i < n; ++i) {
    double b = sample_pair(rng, cfg).signal.b;
    int k = std::min(bins - 1, static_cast<int>((b - lo) / (hi - lo) * bins));
    counts[k] += 1.0;
  }
  auto mass = [](double b) { return b * b / 2.0 - b * b * b / 3.0; };
  double total_mass = mass(hi) - mass(lo);
  double chi2 = 0;
  for (int k = 0; k < bins; ++k) {
    double a = lo + (hi - lo) * k / bins;
    double b = lo + (hi - lo) * (k + 1) / bins;
    double expect = n * (mass(b) - mass(a)) / total_mass;
    chi2 += (counts[k] - expect) * (counts[k] - expect) / expect;
  }
  CHECK(chi2 < kChi2_999_19);
}

TEST_CASE("truth radii match the ring profile after the Jacobian") {
  auto cfg = base_config();
  cfg.mode = AngleMode::Approximate;  // closed-form inverse for the oracle
  RngStream rng(13, 0);
  const int n = 150000;
  const int bins = 25;
  const double rlo = 5.0, rhi = 20.0;
  std::vector<double> counts(bins, 0.0);
  long in_range = 0;
  for (int i = 0; i < n; ++i) {
    auto t = sample_pair(rng, cfg);
    for (const PhotonTruth* p : {&t.signal, &t.idler}) {
      double r = cfg.geom.crystal_to_detector_mm * std::tan(p->alpha_rad);
      if (r < rlo || r >= rhi) continue;
      counts[static_cast<std::size_t>((r - rlo) / (rhi - rlo) * bins)] += 1.0;
      ++in_range;
    }
  }
  auto mass = [](double b) { return b * b / 2.0 - b * b * b / 3.0; };
  auto b_of_r = [&](double r) {
    return energy_from_radius(r, cfg.geom) / cfg.geom.pump_energy_kev;
  };
  // Larger radius means smaller fraction; bin mass is the |db| integral
  // of b(1-b) between the mapped edges.
  double total = mass(b_of_r(rlo)) - mass(b_of_r(rhi));
  double chi2 = 0;
  for (int k = 0; k < bins; ++k) {
    double ra = rlo + (rhi - rlo) * k / bins;
    double rb = rlo + (rhi - rlo) * (k + 1) / bins;
    double expect = in_range * (mass(b_of_r(ra)) - mass(b_of_r(rb))) / total;
    chi2 += (counts[k] - expect) * (counts[k] - expect) / expect;
  }
  CHECK(chi2 < kChi2_999_24);
}

TEST_CASE("background sampling") {
  auto cfg = base_config();

  SUBCASE("zero ratio gives an empty stream") {
    RngStream rng(3, 0);
    cfg.background_ratio = 0.0;
    CHECK(sample_background(rng, cfg, 0.0, 1e9).empty());
  }

  SUBCASE("rate bookkeeping counts both pair photons") {
    RngStream rng(5, 0);
    cfg.background_ratio = 10.0;
    cfg.pair_rate_per_hour = 1000.0;
    // Expected photons: beta * 2 * 1000 over one hour.
    auto bg = sample_background(rng, cfg, 0.0, 3.6e12);
    double expect = 20000.0;
    CHECK(std::fabs(double(bg.size()) - expect) < 3.0 * std::sqrt(expect));
    for (std::size_t i = 1; i < bg.size(); ++i)
      CHECK(bg[i].time_ns >= bg[i - 1].time_ns);
    for (const auto& p : bg) {
      CHECK(p.energy_kev == 15.0);
      CHECK(p.x_mm >= 0.0);
      CHECK(p.x_mm < DetectorLayout::width());
    }
  }

  SUBCASE("uniform law fills quadrants evenly") {
    RngStream rng(6, 0);
    cfg.background_ratio = 5.0;
    cfg.pair_rate_per_hour = 2000.0;
    auto bg = sample_background(rng, cfg, 0.0, 3.6e12);
    double half = DetectorLayout::width() / 2;
    double q[4] = {0, 0, 0, 0};
    for (const auto& p : bg)
      q[(p.y_mm >= half ? 0 : 2) + (p.x_mm >= half ? 1 : 0)] += 1.0;
    double expect = double(bg.size()) / 4.0;
    for (double c : q) CHECK(std::fabs(c - expect) < 4.0 * std::sqrt(expect));
  }

  SUBCASE("radial law concentrates toward the ring center") {
    RngStream rng(8, 0);
    cfg.background_ratio = 5.0;
    cfg.pair_rate_per_hour = 2000.0;
    cfg.background_law = BackgroundLaw::OneOverR;
    auto bg = sample_background(rng, cfg, 0.0, 3.6e12);
    auto [cx, cy] = pixel_position(cfg.geom.ring_center_col,
                                   cfg.geom.ring_center_row);
    long inner = 0, outer = 0;
    for (const auto& p : bg) {
      double r = std::hypot(p.x_mm - cx, p.y_mm - cy);
      if (r < 5.0) ++inner;
      if (r >= 5.0 && r < 10.0) ++outer;
    }
    // Uniform radial marginal: equal-width annuli hold equal counts,
    // so the inner disk is denser per unit area.
    CHECK(inner > 0);
    CHECK(std::fabs(double(inner) - double(outer)) <
          4.0 * std::sqrt(double(inner + outer)));
  }
}

TEST_CASE("mask absorption") {
  auto cfg = base_config();
  RngStream rng(21, 0);
  std::vector<BiphotonTruth> truths;
  for (int i = 0; i < 10000; ++i) truths.push_back(sample_pair(rng, cfg));

  SUBCASE("full transmission is the identity") {
    auto mask = TransmissionMask::from_function(
        0, 0, 28.27, 14.135, 0.055, [](double, double) { return 1.0; });
    RngStream mrng(22, 0);
    auto copy = truths;
    apply_masks(copy, std::vector<TransmissionMask>{mask}, mrng);
    for (const auto& t : copy) CHECK_FALSE(t.signal.absorbed);
  }

  SUBCASE("opaque region absorbs every signal photon inside") {
    auto mask = TransmissionMask::from_function(
        0, 0, 28.27, 14.135, 0.055, [](double, double) { return 0.0; });
    RngStream mrng(23, 0);
    auto copy = truths;
    apply_masks(copy, std::vector<TransmissionMask>{mask}, mrng);
    for (const auto& t : copy) {
      bool inside = t.signal.y_mm >= 0 && t.signal.y_mm < 14.135 &&
                    t.signal.x_mm >= 0 && t.signal.x_mm < 28.27;
      CHECK(t.signal.absorbed == inside);
      CHECK_FALSE(t.idler.absorbed);
    }
  }

  SUBCASE("half transmission absorbs binomially") {
    auto mask = TransmissionMask::from_function(
        -50, -50, 100, 100, 1.0, [](double, double) { return 0.5; });
    RngStream mrng(24, 0);
    auto copy = truths;
    apply_masks(copy, std::vector<TransmissionMask>{mask}, mrng);
    long absorbed = 0;
    for (const auto& t : copy) absorbed += t.signal.absorbed ? 1 : 0;
    CHECK(std::fabs(double(absorbed) - 5000.0) <= 150.0);
  }
}

TEST_CASE("transmission mask validation and lookup") {
  auto m = TransmissionMask::from_function(1.0, 2.0, 3.0, 4.0, 0.5,
                                           [](double x, double) {
                                             return x < 2.0 ? 0.25 : 0.75;
                                           });
  m.validate();
  CHECK(m.nx == 4);
  CHECK(m.ny == 4);
  CHECK(m.transmission(1.4, 2.5) == doctest::Approx(0.25));
  CHECK(m.transmission(2.6, 3.5) == doctest::Approx(0.75));
  CHECK(m.transmission(0.0, 0.0) == doctest::Approx(1.0));  // outside
  CHECK(m.transmission(100.0, 100.0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(TransmissionMask::from_function(
                      0, 0, 1, 1, 0.5, [](double, double) { return 1.5; }),
                  ConfigError);
  TransmissionMask bad = m;
  bad.cell_mm = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("full simulation run") {
  DetectorLayout layout;
  ToTCalibration calib;
  auto cfg = base_config();
  cfg.duration_hours = 0.05;
  cfg.background_ratio = 0.5;

  SUBCASE("deterministic and slice-order independent") {
    auto a = run_simulation(cfg, layout, calib, false);
    auto b = run_simulation(cfg, layout, calib, true);
    REQUIRE(a.hits.size() == b.hits.size());
    for (std::size_t i = 0; i < a.hits.size(); ++i) {
      CHECK(a.hits[i].col == b.hits[i].col);
      CHECK(a.hits[i].row == b.hits[i].row);
      CHECK(a.hits[i].toa_ns == b.hits[i].toa_ns);
      CHECK(a.hits[i].tot_ns == b.hits[i].tot_ns);
    }
    REQUIRE(a.truths.size() == b.truths.size());
    for (std::size_t i = 0; i < a.truths.size(); ++i) {
      CHECK(a.truths[i].signal.x_mm == b.truths[i].signal.x_mm);
      CHECK(a.truths[i].emission_ns == b.truths[i].emission_ns);
    }
  }

  SUBCASE("outputs are ordered and well formed") {
    auto res = run_simulation(cfg, layout, calib);
    REQUIRE_FALSE(res.truths.empty());
    for (std::size_t i = 0; i < res.truths.size(); ++i) {
      CHECK(res.truths[i].pair_id == i);
      if (i > 0)
        CHECK(res.truths[i].emission_ns >= res.truths[i - 1].emission_ns);
    }
    for (std::size_t i = 1; i < res.hits.size(); ++i)
      CHECK(res.hits[i].toa_ns >= res.hits[i - 1].toa_ns);
    for (const auto& h : res.hits) {
      CHECK(h.col >= 0);
      CHECK(h.col < 512);
      CHECK(h.chip == DetectorLayout::chip_of(h.col, h.row));
    }
  }

  SUBCASE("pair count tracks the configured rate") {
    auto fast = cfg;
    fast.duration_hours = 0.2;
    fast.background_ratio = 0.0;
    auto res = run_simulation(fast, layout, calib);
    double expect = 6300.0 * 0.2;
    CHECK(std::fabs(double(res.truths.size()) - expect) <
          3.0 * std::sqrt(expect));
  }

  SUBCASE("beamstop removes central hits") {
    auto stopped = cfg;
    auto [cx, cy] = pixel_position(cfg.geom.ring_center_col,
                                   cfg.geom.ring_center_row);
    stopped.geom.beamstop = BeamStop{cx, cy, 6.0};
    auto with = run_simulation(stopped, layout, calib);
    auto without = run_simulation(cfg, layout, calib);
    CHECK(with.hits.size() < without.hits.size());
  }

  SUBCASE("opaque mask flags absorptions and drops their hits") {
    auto masked = cfg;
    masked.background_ratio = 0.0;
    masked.masks.push_back(TransmissionMask::from_function(
        0, 0, 28.27, 14.135, 0.055, [](double, double) { return 0.0; }));
    auto res = run_simulation(masked, layout, calib);
    long flagged = 0;
    for (const auto& t : res.truths) flagged += t.signal.absorbed ? 1 : 0;
    CHECK(flagged == long(res.absorbed_count));
    CHECK(flagged > 0);
    auto open = run_simulation(cfg, layout, calib);
    (void)open;
  }

  SUBCASE("config validation") {
    auto bad = cfg;
    bad.duration_hours = 0.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.background_ratio = -1.0;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    bad = cfg;
    bad.response.sharing_radius_mm = 0.05;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
    CHECK(cfg.slice_count() == 3);
  }
}

TEST_CASE("paired hit time difference reflects the jitter model") {
  DetectorLayout layout;
  ToTCalibration calib;
  ResponseModel response;
  response.sharing_radius_mm = 0.0;
  RngStream rng(31, 0);
  double sum2 = 0;
  int n = 0;
  for (int i = 0; i < 4000; ++i) {
    double t0 = i * 1.0e6;
    auto a = synthesize_hits(10.0, 10.0, 7.5, t0, layout, calib, response, rng);
    auto b = synthesize_hits(10.0, 18.0, 7.5, t0, layout, calib, response, rng);
    if (a.size() != 1 || b.size() != 1) continue;
    double dt = a[0].toa_ns - b[0].toa_ns;
    sum2 += dt * dt;
    ++n;
  }
  double rms = std::sqrt(sum2 / n);
  CHECK(rms == doctest::Approx(18.0 * std::sqrt(2.0)).epsilon(0.05));
}

TEST_CASE("truth csv round trip") {
  testutil::TempDir tmp("truth");
  auto cfg = base_config();
  RngStream rng(41, 0);
  std::vector<BiphotonTruth> truths;
  for (int i = 0; i < 200; ++i) {
    auto t = sample_pair(rng, cfg);
    t.pair_id = static_cast<std::uint64_t>(i);
    t.emission_ns = 1000.0 * i;
    truths.push_back(t);
  }
  truths[5].signal.absorbed = true;
  auto path = tmp.path / "truth.csv";
  write_truth_csv(path, truths, csv::Meta{});
  auto back = read_truth_csv(path);
  REQUIRE(back.size() == truths.size());
  for (std::size_t i = 0; i < truths.size(); ++i) {
    CHECK(back[i].pair_id == truths[i].pair_id);
    CHECK(back[i].signal.b ==
          doctest::Approx(truths[i].signal.b).epsilon(1e-8));
    CHECK(back[i].idler.x_mm ==
          doctest::Approx(truths[i].idler.x_mm).epsilon(1e-5));
    CHECK(back[i].signal.absorbed == truths[i].signal.absorbed);
  }
}
