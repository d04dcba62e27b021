#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "doctest.h"
#include "spdc/errors.hpp"
#include "spdc/identify.hpp"
#include "spdc/detector.hpp"
#include "test_util.hpp"

using namespace spdc;

namespace {

std::string slurp(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  REQUIRE(f != nullptr);
  std::string data;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) data.append(buf, n);
  std::fclose(f);
  return data;
}

double trapz_mass(const SpectrumModel& m, double lo, double hi, int n) {
  double acc = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double t = lo + (hi - lo) * i / n;
    acc += (i == 0 || i == n ? 0.5 : 1.0) * m.density_at(t);
  }
  return acc * (hi - lo) / n;
}

}  // namespace

TEST_CASE("spectrum models validate and normalize") {
  SpectrumModel h = default_spdc_spectrum();
  SpectrumModel g = default_pump_spectrum();
  h.validate();
  g.validate();
  CHECK(h.components.size() == 1);
  CHECK(h.components[0].first == doctest::Approx(400.0));
  CHECK(g.components[0].first == doctest::Approx(700.0));
  CHECK(h.sigma_ns == doctest::Approx(94.0));

  auto [lo, hi] = h.support();
  CHECK(trapz_mass(h, lo, hi, 20000) == doctest::Approx(1.0).epsilon(1e-9));

  SpectrumModel bad = h;
  bad.sigma_ns = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = h;
  bad.components[0].second = 0.7;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = h;
  bad.resolution_factor = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(h.with_zeta(0.0), DomainError);
}

TEST_CASE("band spectrum weights follow the pair probability") {
  ExperimentGeometry geom;
  ToTCalibration calib;
  SpectrumModel band = spdc_band_spectrum(geom, calib, 80.0, 21);
  band.validate();
  REQUIRE(band.components.size() == 21);
  // Weight maximum at the band center b = 0.5 (tot 400 ns).
  double best_w = 0.0, best_mu = 0.0;
  for (auto [mu, w] : band.components)
    if (w > best_w) {
      best_w = w;
      best_mu = mu;
    }
  CHECK(best_mu == doctest::Approx(400.0).epsilon(1e-9));
  auto [lo, hi] = band.support();
  CHECK(trapz_mass(band, lo, hi, 40000) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(spdc_band_spectrum(geom, calib, 80.0, 0), ConfigError);
}

TEST_CASE("empirical spectra narrow about their mean under zeta") {
  std::vector<double> counts(100, 0.0);
  for (int i = 0; i < 100; ++i)
    counts[i] = std::exp(-0.5 * std::pow((i - 50.0) / 10.0, 2));
  SpectrumModel emp = empirical_spectrum(300.0, 2.0, counts);
  emp.validate();
  CHECK(emp.empirical_mean_ns == doctest::Approx(401.0).epsilon(1e-3));
  CHECK(trapz_mass(emp, 250.0, 550.0, 30000) ==
        doctest::Approx(1.0).epsilon(1e-3));

  SpectrumModel narrow = emp.with_zeta(2.0);
  CHECK(trapz_mass(narrow, 250.0, 550.0, 30000) ==
        doctest::Approx(1.0).epsilon(1e-3));
  // Second moment about the mean shrinks by zeta^2.
  auto var = [](const SpectrumModel& m, double mu) {
    double acc = 0.0;
    const int n = 30000;
    for (int i = 0; i <= n; ++i) {
      const double t = 250.0 + 300.0 * i / n;
      acc += (i == 0 || i == n ? 0.5 : 1.0) * (t - mu) * (t - mu) *
             m.density_at(t);
    }
    return acc * 300.0 / n;
  };
  const double v0 = var(emp, emp.empirical_mean_ns);
  const double v1 = var(narrow, emp.empirical_mean_ns);
  CHECK(v1 == doctest::Approx(v0 / 4.0).epsilon(0.01));

  std::vector<double> none;
  CHECK_THROWS_AS(empirical_spectrum(0.0, 1.0, none), ConfigError);
  std::vector<double> neg = {1.0, -1.0};
  CHECK_THROWS_AS(empirical_spectrum(0.0, 1.0, neg), ConfigError);
}

TEST_CASE("posterior limiting cases") {
  SpectrumModel h = default_spdc_spectrum();
  SpectrumModel g = default_pump_spectrum();

  CHECK(posterior(400.0, h, g, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(posterior(400.0, h, h, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
  // Far outside both supports there is no evidence.
  CHECK(posterior(1e7, h, g, 1.0) == 0.0);
  CHECK_THROWS_AS(posterior(400.0, h, g, -1.0), DomainError);

  // At the ToT where h = 2g, posterior at beta=10 is 2/12.
  const double sigma = 94.0;
  const double t =
      0.5 * (2.0 * sigma * sigma * std::log(2.0) / (400.0 - 700.0) + 1100.0);
  CHECK(h.density_at(t) == doctest::Approx(2.0 * g.density_at(t)).epsilon(1e-9));
  CHECK(posterior(t, h, g, 10.0) == doctest::Approx(1.0 / 6.0).epsilon(1e-6));
}

TEST_CASE("aggregate probability reproduces the reference points") {
  SpectrumModel h = default_spdc_spectrum();
  SpectrumModel g = default_pump_spectrum();

  CHECK(aggregate_probability(h, g, 0.0) == doctest::Approx(1.0).epsilon(1e-9));
  // Identical spectra: integral collapses to 1/(1+beta) exactly.
  CHECK(aggregate_probability(h, h, 3.0) ==
        doctest::Approx(0.25).epsilon(1e-6));
  // Frozen independent-oracle values for the default model.
  CHECK(aggregate_probability(h, g, 1e5, 1.0) ==
        doctest::Approx(0.040107).epsilon(2e-3));
  CHECK(aggregate_probability(h, g, 1e3, 2.0) ==
        doctest::Approx(0.978739).epsilon(2e-3));
  CHECK(aggregate_probability(h, g, 10.0, 1.0) ==
        doctest::Approx(0.777836).epsilon(2e-3));
  CHECK(aggregate_probability(h, g, 1.0, 1.0) ==
        doctest::Approx(0.917990).epsilon(2e-3));

  CHECK_THROWS_AS(aggregate_probability(h, g, -1.0), DomainError);
  CHECK_THROWS_AS(aggregate_probability(h, g, 1.0, -2.0), DomainError);
}

TEST_CASE("aggregate probability is monotone in beta and zeta") {
  SpectrumModel h = default_spdc_spectrum();
  SpectrumModel g = default_pump_spectrum();
  double prev = 1.1;
  for (double beta : {0.0, 1.0, 10.0, 1e2, 1e3, 1e4, 1e5, 1e6}) {
    const double p = aggregate_probability(h, g, beta, 1.0);
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(p <= prev + 1e-9);
    prev = p;
  }
  prev = -0.1;
  for (double zeta : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    const double p = aggregate_probability(h, g, 1e4, zeta);
    CHECK(p >= prev - 1e-9);
    prev = p;
  }
}

TEST_CASE("probability surface shape, monotonicity and contour") {
  SpectrumModel h = default_spdc_spectrum();
  SpectrumModel g = default_pump_spectrum();
  std::vector<double> betas = {0.0, 1.0, 10.0, 1e3, 1e5};
  std::vector<double> zetas = {0.5, 1.0, 2.0};
  SurfaceResult s = probability_surface(h, g, betas, zetas, true);
  SurfaceResult serial = probability_surface(h, g, betas, zetas, false);
  CHECK(s.p == serial.p);
  REQUIRE(s.p.size() == 15);

  for (std::size_t iz = 0; iz < zetas.size(); ++iz) {
    CHECK(s.at(iz, 0) == doctest::Approx(1.0).epsilon(1e-9));  // beta = 0
    for (std::size_t ib = 1; ib < betas.size(); ++ib)
      CHECK(s.at(iz, ib) <= s.at(iz, ib - 1) + 1e-9);
  }
  for (std::size_t ib = 0; ib < betas.size(); ++ib)
    for (std::size_t iz = 1; iz < zetas.size(); ++iz)
      CHECK(s.at(iz, ib) >= s.at(iz - 1, ib) - 1e-9);

  CHECK(s.reference_p == doctest::Approx(0.040107).epsilon(2e-3));

  // The 0.95 contour at zeta=2 sits between the two reference betas.
  bool found = false;
  for (auto [z, b] : s.contour95) {
    if (z == doctest::Approx(2.0)) {
      found = true;
      CHECK(b > 1e3);
      CHECK(b < 1e5);
    }
  }
  CHECK(found);

  std::vector<double> empty;
  CHECK_THROWS_AS(probability_surface(h, g, empty, zetas), ConfigError);
  std::vector<double> bad = {-1.0};
  CHECK_THROWS_AS(probability_surface(h, g, bad, zetas), DomainError);
}

TEST_CASE("grid helpers") {
  auto lin = linspace(0.0, 1.0, 5);
  REQUIRE(lin.size() == 5);
  CHECK(lin[0] == 0.0);
  CHECK(lin[4] == 1.0);
  CHECK(lin[2] == doctest::Approx(0.5));
  auto log = logspace(1.0, 1e4, 5);
  REQUIRE(log.size() == 5);
  CHECK(log[0] == doctest::Approx(1.0));
  CHECK(log[2] == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(log[4] == doctest::Approx(1e4).epsilon(1e-9));
  CHECK_THROWS_AS(logspace(0.0, 1.0, 3), ConfigError);
  CHECK_THROWS_AS(linspace(0.0, 1.0, 0), ConfigError);
}

TEST_CASE("ssn experiment limiting cases") {
  SsnConfig cfg;
  cfg.mean_flux = 100.0;
  cfg.n_frames = 20000;

  cfg.transmission = 1.0;
  SsnReport r1 = ssn_experiment(cfg, 7);
  CHECK(r1.var_heralded == 0.0);
  CHECK(r1.var_classical == doctest::Approx(0.01).epsilon(0.1));
  CHECK(r1.ratio == 0.0);

  cfg.transmission = 0.0;
  SsnReport r0 = ssn_experiment(cfg, 7);
  CHECK(r0.var_classical == 0.0);
  CHECK(r0.var_heralded == 0.0);
}

TEST_CASE("ssn variance ratio approaches 1 - eta*t") {
  SsnConfig cfg;
  cfg.mean_flux = 100.0;
  cfg.transmission = 0.5;
  cfg.n_frames = 100000;
  SsnReport rep = ssn_experiment(cfg, 1);
  CHECK(rep.ratio == doctest::Approx(0.5).epsilon(0.04));
  CHECK(rep.stderr_ratio > 0.0);
  CHECK(rep.stderr_ratio < 0.01);
  CHECK(rep.frames_heralded == 100000);

  SsnReport again = ssn_experiment(cfg, 1);
  CHECK(again.var_classical == rep.var_classical);
  CHECK(again.var_heralded == rep.var_heralded);

  cfg.n_frames = 50000;
  cfg.heralding_efficiency = 0.0;
  SsnReport degraded = ssn_experiment(cfg, 2);
  CHECK(degraded.ratio == doctest::Approx(1.0).epsilon(0.05));
  cfg.heralding_efficiency = 0.5;
  SsnReport half = ssn_experiment(cfg, 3);
  CHECK(half.ratio == doctest::Approx(0.75).epsilon(0.05));

  SsnConfig bad = cfg;
  bad.mean_flux = 0.0;
  CHECK_THROWS_AS(ssn_experiment(bad, 1), ConfigError);
  bad = cfg;
  bad.transmission = 1.5;
  CHECK_THROWS_AS(ssn_experiment(bad, 1), ConfigError);
  bad = cfg;
  bad.n_frames = 0;
  CHECK_THROWS_AS(ssn_experiment(bad, 1), ConfigError);
}

TEST_CASE("surface, contour and ssn exports") {
  testutil::TempDir dir("identify_export");
  SpectrumModel h = default_spdc_spectrum();
  SpectrumModel g = default_pump_spectrum();
  std::vector<double> betas = {1.0, 1e3, 1e5};
  std::vector<double> zetas = {1.0, 2.0};
  SurfaceResult s = probability_surface(h, g, betas, zetas);
  csv::Meta meta{11, 0xfeed};

  const auto spath = dir.path / "surface.csv";
  write_surface_csv(spath, s, meta);
  const std::string text = slurp(spath);
  CHECK(text.find("# spdcforge seed=11") != std::string::npos);
  CHECK(text.find("zeta\\beta,1.000000e+00,1.000000e+03,1.000000e+05") !=
        std::string::npos);
  CHECK(text.find("# reference beta=1e+05 zeta=1 p=0.040") !=
        std::string::npos);
  // One line per zeta row plus meta, header, reference.
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);

  const auto cpath = dir.path / "contour95.csv";
  write_contour_csv(cpath, s, meta);
  int rows = 0;
  csv::for_each_row(cpath, "zeta,beta95",
                    [&](const std::vector<std::string>& f, long line) {
                      REQUIRE(f.size() == 2);
                      CHECK(csv::to_double(f[1], line) > 0.0);
                      ++rows;
                    });
  CHECK(rows == static_cast<int>(s.contour95.size()));

  SsnConfig cfg;
  cfg.n_frames = 1000;
  SsnReport rep = ssn_experiment(cfg, 11);
  const auto jpath = dir.path / "ssn.json";
  write_ssn_json(jpath, rep, meta);
  const std::string json = slurp(jpath);
  CHECK(json.find("\"seed\": 11") != std::string::npos);
  CHECK(json.find("\"config\": \"000000000000feed\"") != std::string::npos);
  CHECK(json.find("\"var_classical\"") != std::string::npos);
  CHECK(json.find("\"var_heralded\"") != std::string::npos);
  CHECK(json.find("\"ratio\"") != std::string::npos);
  CHECK(json.find("\"stderr\"") != std::string::npos);
  CHECK(json.back() == '\n');
}
