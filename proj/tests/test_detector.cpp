#include "spdc/detector.hpp"

#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "spdc/errors.hpp"
#include "spdc/rng.hpp"
#include "test_util.hpp"

using namespace spdc;

TEST_CASE("axis centers around the chip boundary") {
  CHECK(DetectorLayout::axis_center(0) == doctest::Approx(0.0275));
  CHECK(DetectorLayout::axis_center(254) == doctest::Approx(13.9975));
  CHECK(DetectorLayout::axis_center(255) == doctest::Approx(14.080));
  CHECK(DetectorLayout::axis_center(256) == doctest::Approx(14.190));
  CHECK(DetectorLayout::axis_center(257) == doctest::Approx(14.2725));
  CHECK(DetectorLayout::axis_center(257) - DetectorLayout::axis_center(254) ==
        doctest::Approx(0.275).epsilon(1e-12));
  CHECK(DetectorLayout::width() == doctest::Approx(28.270));
  CHECK_THROWS_AS(DetectorLayout::axis_center(-1), IndexError);
  CHECK_THROWS_AS(DetectorLayout::axis_center(512), IndexError);
}

TEST_CASE("cell bounds match a width-accumulation oracle") {
  // Accumulate strip widths in exact half-micrometer integers.
  long edge = 0;
  for (int i = 0; i < DetectorLayout::kLogicalSize; ++i) {
    long w = (i == 255 || i == 256) ? 220 : 110;
    auto [lo, hi] = DetectorLayout::axis_cell(i);
    CHECK(lo * 2000.0 == doctest::Approx(double(edge)).epsilon(1e-9));
    CHECK(hi * 2000.0 == doctest::Approx(double(edge + w)).epsilon(1e-9));
    edge += w;
  }
  CHECK(edge == 2000.0 * DetectorLayout::width());
}

TEST_CASE("axis index inverts axis center") {
  for (int i = 0; i < DetectorLayout::kLogicalSize; ++i)
    CHECK(DetectorLayout::axis_index(DetectorLayout::axis_center(i)) == i);
  CHECK(DetectorLayout::axis_index(14.030) == 255);
  CHECK(DetectorLayout::axis_index(14.140) == 256);
  CHECK(DetectorLayout::axis_index(14.250) == 257);
  CHECK_THROWS_AS(DetectorLayout::axis_index(-0.001), OutOfActiveArea);
  CHECK_THROWS_AS(DetectorLayout::axis_index(28.270), OutOfActiveArea);
}

TEST_CASE("physical raster bins and structurally empty slots") {
  std::set<int> seen;
  for (int i = 0; i < DetectorLayout::kLogicalSize; ++i)
    seen.insert(DetectorLayout::physical_bin(DetectorLayout::axis_center(i)));
  CHECK(seen.size() == 512);
  CHECK(seen.count(255) == 0);
  CHECK(seen.count(257) == 0);
  CHECK(DetectorLayout::is_gap_bin(255));
  CHECK(DetectorLayout::is_gap_bin(257));
  CHECK_FALSE(DetectorLayout::is_gap_bin(256));
  CHECK(DetectorLayout::physical_bin(DetectorLayout::axis_center(255)) == 256);
  CHECK(DetectorLayout::physical_bin(DetectorLayout::axis_center(256)) == 258);
  CHECK(DetectorLayout::physical_bin(-5.0) == 0);
  CHECK(DetectorLayout::physical_bin(100.0) == 513);
}

TEST_CASE("chip quadrants and arm roles") {
  DetectorLayout layout;
  CHECK(DetectorLayout::chip_of(0, 511) == 1);
  CHECK(DetectorLayout::chip_of(511, 511) == 2);
  CHECK(DetectorLayout::chip_of(0, 0) == 3);
  CHECK(DetectorLayout::chip_of(511, 0) == 4);
  CHECK(layout.arm_of(100, 100) == Arm::Signal);
  CHECK(layout.arm_of(400, 100) == Arm::Signal);
  CHECK(layout.arm_of(100, 400) == Arm::Idler);
  CHECK(layout.arm_of(260, 256) == Arm::Idler);
  auto [x, y] = layout.logical_to_physical(260, 256);
  CHECK(x == doctest::Approx(14.4375));
  CHECK(y == doctest::Approx(14.190));
  CHECK_THROWS_AS(DetectorLayout::chip_of(512, 0), IndexError);
}

TEST_CASE("hot pixel mask") {
  DetectorLayout layout;
  CHECK_FALSE(layout.is_hot(3, 4));
  layout.set_hot(3, 4);
  CHECK(layout.is_hot(3, 4));

  SUBCASE("apply preserves order and drops masked hits") {
    std::vector<RawHit> hits;
    for (int i = 0; i < 1000; ++i) {
      RawHit h;
      h.col = i % 512;
      h.row = i / 512;  // unique pixel per hit
      h.toa_ns = i;
      hits.push_back(h);
    }
    DetectorLayout l2;
    for (int i = 0; i < 10; ++i) l2.set_hot(hits[i * 37].col, hits[i * 37].row);
    auto kept = l2.apply_hot_mask(hits);
    CHECK(kept.size() == 990);
    for (std::size_t i = 1; i < kept.size(); ++i)
      CHECK(kept[i].toa_ns > kept[i - 1].toa_ns);
    DetectorLayout none;
    CHECK(none.apply_hot_mask(hits).size() == hits.size());
    DetectorLayout all;
    for (int c = 0; c < 512; ++c)
      for (int r = 0; r < 512; ++r) all.set_hot(c, r);
    CHECK(all.apply_hot_mask(hits).empty());
  }

  SUBCASE("randomized mask hits the configured fraction") {
    DetectorLayout l;
    RngStream rng(99, 0);
    l.randomize_hot_pixels(0.001, rng);
    CHECK(l.hot_count() == 262);  // floor(0.001 * 512^2)
    RngStream rng2(99, 1);
    CHECK_THROWS_AS(l.randomize_hot_pixels(0.02, rng2), ConfigError);
  }

  SUBCASE("csv round trip") {
    testutil::TempDir tmp("hotmask");
    DetectorLayout l;
    RngStream rng(5, 0);
    l.randomize_hot_pixels(0.0005, rng);
    auto path = tmp.path / "hot.csv";
    l.save_hot_mask_csv(path, csv::Meta{});
    DetectorLayout back;
    back.load_hot_mask_csv(path);
    CHECK(back.hot_count() == l.hot_count());
    for (int c = 0; c < 512; c += 7)
      for (int r = 0; r < 512; r += 7)
        CHECK(back.is_hot(c, r) == l.is_hot(c, r));
  }
}

TEST_CASE("tot calibration linear model") {
  ToTCalibration calib;
  CHECK(calib.tot_to_energy(calib.global.offset_ns, 10, 10) ==
        doctest::Approx(0.0));
  CHECK(calib.tot_to_energy(580.0, 10, 10) == doctest::Approx(12.0));
  CHECK(calib.tot_to_energy(50.0, 10, 10) == doctest::Approx(0.0));
  CHECK(calib.energy_to_tot_mean(9.0, 10, 10) == doctest::Approx(460.0));
  CHECK(calib.energy_to_tot_mean(15.0, 10, 10) == doctest::Approx(700.0));
  CHECK(calib.cutoff_ns(10, 10) == doctest::Approx(580.0));
  CHECK(ToTCalibration::default_cutoff(calib.global) == doctest::Approx(580.0));
  CHECK_THROWS_AS(calib.tot_to_energy(-1.0, 0, 0), DomainError);

  SUBCASE("quantized round trip stays within half a quantum") {
    for (double e = 4.0; e <= 15.0; e += 0.37) {
      double tot = calib.quantize_tot(calib.energy_to_tot_mean(e, 5, 5));
      double back = calib.tot_to_energy(tot, 5, 5);
      CHECK(std::fabs(back - e) <=
            0.5 * calib.tot_quantum_ns / calib.global.gain_ns_per_kev + 1e-12);
    }
  }

  SUBCASE("variation scales energies inversely") {
    ToTCalibration c;
    PixelCalib low = c.global, high = c.global;
    low.variation = 0.9;
    high.variation = 1.1;
    c.set_pixel(1, 1, low);
    c.set_pixel(2, 2, high);
    double ratio = c.tot_to_energy(500.0, 1, 1) / c.tot_to_energy(500.0, 2, 2);
    CHECK(ratio == doctest::Approx(11.0 / 9.0).epsilon(1e-12));
  }

  SUBCASE("monotone in tot for randomized pixels") {
    ToTCalibration c;
    RngStream rng(17, 3);
    for (int k = 0; k < 50; ++k) {
      int col = static_cast<int>(rng.integer(512));
      int row = static_cast<int>(rng.integer(512));
      double prev = -1;
      for (double tot = 0; tot <= 1000; tot += 25) {
        double e = c.tot_to_energy(tot, col, row);
        CHECK(e >= prev);
        prev = e;
      }
    }
  }

  SUBCASE("per-pixel requirement") {
    ToTCalibration c;
    c.require_per_pixel = true;
    CHECK_THROWS_AS(c.tot_to_energy(500.0, 9, 9), CalibrationMissing);
    c.set_pixel(9, 9, PixelCalib{});
    CHECK(c.tot_to_energy(500.0, 9, 9) == doctest::Approx(10.0));
  }

  SUBCASE("csv round trip") {
    testutil::TempDir tmp("calib");
    ToTCalibration c;
    RngStream rng(23, 0);
    for (int k = 0; k < 100; ++k) {
      PixelCalib pc;
      pc.gain_ns_per_kev = 35.0 + rng.uniform() * 10.0;
      pc.offset_ns = 80.0 + rng.uniform() * 40.0;
      pc.variation = 0.9 + rng.uniform() * 0.2;
      pc.cutoff_ns = ToTCalibration::default_cutoff(pc);
      c.set_pixel(static_cast<int>(rng.integer(512)),
                  static_cast<int>(rng.integer(512)), pc);
    }
    auto path = tmp.path / "calib.csv";
    c.save_csv(path, csv::Meta{});
    ToTCalibration back;
    back.load_csv(path);
    CHECK(back.override_count() == c.override_count());
    CHECK(back.tot_to_energy(500.0, 0, 0) ==
          doctest::Approx(c.tot_to_energy(500.0, 0, 0)));
  }
}

TEST_CASE("timewalk model") {
  TimingModel t;
  CHECK(timewalk_delay_ns(t.timewalk_tot_ref_ns, t) == doctest::Approx(0.0));
  CHECK(timewalk_delay_ns(0.0, t) == doctest::Approx(100.0));
  CHECK(timewalk_delay_ns(400.0, t) ==
        doctest::Approx(100.0 * (1.0 - 400.0 / 25575.0)));
  double prev = 1e9;
  for (double tot = 0; tot <= 30000; tot += 500) {
    double d = timewalk_delay_ns(tot, t);
    CHECK(d <= prev);
    CHECK(d >= 0.0);
    CHECK(d <= t.timewalk_max_ns);
    prev = d;
  }
}

TEST_CASE("hit synthesis") {
  DetectorLayout layout;
  ToTCalibration calib;
  ResponseModel ideal;
  ideal.sharing_radius_mm = 0.0;
  ideal.timing.jitter_rms_ns = 0.0;
  ideal.timing.timewalk_max_ns = 0.0;

  SUBCASE("point response at a pixel center") {
    ToTCalibration sharp = calib;
    sharp.energy_resolution_fwhm_kev = 0.0;
    RngStream rng(1, 0);
    auto [x, y] = layout.logical_to_physical(100, 100);
    auto hits = synthesize_hits(x, y, 7.5, 1000.0, layout, sharp, ideal, rng);
    REQUIRE(hits.size() == 1);
    CHECK(hits[0].col == 100);
    CHECK(hits[0].row == 100);
    CHECK(hits[0].chip == 3);
    CHECK(hits[0].tot_ns == doctest::Approx(400.0));
    CHECK(hits[0].toa_ns == doctest::Approx(1000.0));
  }

  SUBCASE("corner deposit splits over four pixels") {
    ToTCalibration sharp = calib;
    sharp.energy_resolution_fwhm_kev = 0.0;
    ResponseModel shared = ideal;
    shared.sharing_radius_mm = 0.010;
    RngStream rng(2, 0);
    double corner = 100 * DetectorLayout::kPitchMm;
    auto hits =
        synthesize_hits(corner, corner, 8.0, 0.0, layout, sharp, shared, rng);
    REQUIRE(hits.size() == 4);
    double esum = 0;
    for (const auto& h : hits) {
      CHECK((h.col == 99 || h.col == 100));
      CHECK((h.row == 99 || h.row == 100));
      esum += sharp.tot_to_energy(h.tot_ns, h.col, h.row);
    }
    // Each quarter-share ToT rounds independently to the 25 ns grid.
    CHECK(std::fabs(esum - 8.0) <=
          4 * 0.5 * sharp.tot_quantum_ns / sharp.global.gain_ns_per_kev);
  }

  SUBCASE("energy conservation in expectation") {
    ResponseModel shared = ideal;
    shared.sharing_radius_mm = 0.015;
    RngStream rng(3, 0);
    double sum = 0;
    int n = 10000;
    for (int i = 0; i < n; ++i) {
      double x = 5.0 + rng.uniform() * 18.0;
      double y = 5.0 + rng.uniform() * 18.0;
      auto hits = synthesize_hits(x, y, 7.5, 0.0, layout, calib, shared, rng);
      for (const auto& h : hits) sum += calib.tot_to_energy(h.tot_ns, h.col, h.row);
    }
    double mean = sum / n;
    // 3 sigma of the per-cluster resolution over 10^4 samples, plus
    // margin for sub-threshold tail clipping.
    CHECK(std::fabs(mean - 7.5) < 0.06);
  }

  SUBCASE("masked pixels produce no hits") {
    DetectorLayout masked;
    masked.set_hot(99, 99);
    masked.set_hot(99, 100);
    masked.set_hot(100, 99);
    masked.set_hot(100, 100);
    ResponseModel shared = ideal;
    shared.sharing_radius_mm = 0.010;
    RngStream rng(4, 0);
    double corner = 100 * DetectorLayout::kPitchMm;
    auto hits =
        synthesize_hits(corner, corner, 8.0, 0.0, masked, calib, shared, rng);
    CHECK(hits.empty());
  }

  SUBCASE("outside the active area") {
    RngStream rng(5, 0);
    CHECK_THROWS_AS(
        synthesize_hits(-1.0, 5.0, 8.0, 0.0, layout, calib, ideal, rng),
        OutOfActiveArea);
    CHECK_THROWS_AS(
        synthesize_hits(5.0, 28.30, 8.0, 0.0, layout, calib, ideal, rng),
        OutOfActiveArea);
  }

  SUBCASE("deterministic for a fixed stream") {
    ResponseModel shared;
    auto run = [&] {
      RngStream rng(42, 7);
      std::vector<RawHit> all;
      for (int i = 0; i < 200; ++i) {
        auto hits = synthesize_hits(10.0 + 0.01 * i, 12.0, 7.5, 100.0 * i,
                                    layout, calib, shared, rng);
        all.insert(all.end(), hits.begin(), hits.end());
      }
      return all;
    };
    auto a = run(), b = run();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].col == b[i].col);
      CHECK(a[i].toa_ns == b[i].toa_ns);
      CHECK(a[i].tot_ns == b[i].tot_ns);
    }
  }

  SUBCASE("quantization grids") {
    ResponseModel shared;
    RngStream rng(6, 0);
    for (int i = 0; i < 100; ++i) {
      auto hits = synthesize_hits(8.0 + 0.05 * i, 20.0, 6.0 + 0.05 * i,
                                  13.7 * i, layout, calib, shared, rng);
      for (const auto& h : hits) {
        CHECK(std::fabs(h.tot_ns - 25.0 * std::llround(h.tot_ns / 25.0)) <
              1e-9);
        CHECK(std::fabs(h.toa_ns - 1.5625 * std::llround(h.toa_ns / 1.5625)) <
              1e-9);
      }
    }
  }
}

TEST_CASE("event csv round trip") {
  testutil::TempDir tmp("events");
  std::vector<RawHit> hits;
  for (int i = 0; i < 50; ++i) {
    RawHit h;
    h.col = 10 + i;
    h.row = 300;
    h.chip = DetectorLayout::chip_of(h.col, h.row);
    h.toa_ns = 1.5625 * (i * 640 + 3);
    h.tot_ns = 25.0 * (16 + i % 5);
    hits.push_back(h);
  }
  auto path = tmp.path / "events.csv";
  csv::Meta meta;
  meta.seed = 11;
  write_events_csv(path, hits, meta);
  auto back = read_events_csv(path);
  REQUIRE(back.size() == hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) {
    CHECK(back[i].col == hits[i].col);
    CHECK(back[i].row == hits[i].row);
    CHECK(back[i].chip == hits[i].chip);
    CHECK(back[i].toa_ns == doctest::Approx(hits[i].toa_ns).epsilon(1e-12));
    CHECK(back[i].tot_ns == doctest::Approx(hits[i].tot_ns));
  }

  SUBCASE("malformed rows carry line numbers") {
    auto bad = tmp.path / "bad.csv";
    FILE* f = fopen(bad.string().c_str(), "w");
    fputs("chip,col,row,toa_ns,tot_ns\n2,10,20,125.0,400\n2,nope,20,1,1\n", f);
    fclose(f);
    try {
      read_events_csv(bad);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
  }
}
