#include "spdc/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "spdc/errors.hpp"

namespace spdc {

namespace {

constexpr std::uint64_t kSaltPair = 1;
constexpr std::uint64_t kSaltBackground = 2;
constexpr std::uint64_t kSaltMask = 3;
constexpr std::uint64_t kSaltDetect = 4;
constexpr double kNsPerHour = 3.6e12;

double axis_position(double v) {
  int i = static_cast<int>(std::floor(v));
  i = std::clamp(i, 0, DetectorLayout::kLogicalSize - 1);
  double frac = v - i;
  if (frac <= 0.0) return DetectorLayout::axis_center(i);
  int j = std::min(i + 1, DetectorLayout::kLogicalSize - 1);
  return DetectorLayout::axis_center(i) +
         frac * (DetectorLayout::axis_center(j) - DetectorLayout::axis_center(i));
}

}  // namespace

std::pair<double, double> pixel_position(double col, double row) {
  return {axis_position(col), axis_position(row)};
}

double TransmissionMask::transmission(double x_mm, double y_mm) const {
  if (nx <= 0 || ny <= 0) return 1.0;
  int i = static_cast<int>(std::floor((x_mm - x0_mm) / cell_mm));
  int j = static_cast<int>(std::floor((y_mm - y0_mm) / cell_mm));
  if (i < 0 || i >= nx || j < 0 || j >= ny) return 1.0;
  return t[static_cast<std::size_t>(j) * nx + i];
}

void TransmissionMask::validate() const {
  if (!(cell_mm > 0)) throw ConfigError("mask cell size must be positive");
  if (nx <= 0 || ny <= 0) throw ConfigError("mask grid must be non-empty");
  if (t.size() != static_cast<std::size_t>(nx) * ny)
    throw ConfigError("mask grid size mismatch");
  for (float v : t)
    if (!(v >= 0.0f) || v > 1.0f)
      throw ConfigError("mask transmission outside [0, 1]");
}

TransmissionMask TransmissionMask::from_function(
    double x0_mm, double y0_mm, double x1_mm, double y1_mm, double cell_mm,
    const std::function<double(double, double)>& fn) {
  if (!(cell_mm > 0) || !(x1_mm > x0_mm) || !(y1_mm > y0_mm))
    throw ConfigError("invalid mask bounding box");
  TransmissionMask m;
  m.x0_mm = x0_mm;
  m.y0_mm = y0_mm;
  m.cell_mm = cell_mm;
  m.nx = static_cast<int>(std::ceil((x1_mm - x0_mm) / cell_mm - 1e-9));
  m.ny = static_cast<int>(std::ceil((y1_mm - y0_mm) / cell_mm - 1e-9));
  m.t.resize(static_cast<std::size_t>(m.nx) * m.ny);
  for (int j = 0; j < m.ny; ++j)
    for (int i = 0; i < m.nx; ++i) {
      double x = x0_mm + (i + 0.5) * cell_mm;
      double y = y0_mm + (j + 0.5) * cell_mm;
      double v = fn(x, y);
      if (!(v >= 0.0) || !(v <= 1.0))
        throw ConfigError("mask transmission outside [0, 1]");
      m.t[static_cast<std::size_t>(j) * m.nx + i] = static_cast<float>(v);
    }
  return m;
}

int SimulationConfig::slice_count() const {
  return std::max(1, static_cast<int>(std::llround(duration_hours *
                                                   slices_per_hour)));
}

double SimulationConfig::slice_length_ns() const {
  return duration_hours * kNsPerHour / slice_count();
}

void SimulationConfig::validate() const {
  geom.validate();
  if (!(pair_rate_per_hour >= 0)) throw ConfigError("pair rate must be >= 0");
  if (!(background_ratio >= 0))
    throw ConfigError("background ratio must be >= 0");
  if (!(duration_hours > 0)) throw ConfigError("duration must be positive");
  if (slices_per_hour < 1) throw ConfigError("need at least one slice per hour");
  if (!(response.sharing_radius_mm >= 0) ||
      response.sharing_radius_mm > 0.5 * DetectorLayout::kPitchMm)
    throw ConfigError("sharing radius outside [0, half pitch]");
  if (!(response.timing.toa_quantum_ns > 0) ||
      !(response.timing.tot_quantum_ns > 0))
    throw ConfigError("timing quanta must be positive");
  if (!(response.timing.jitter_rms_ns >= 0) ||
      !(response.timing.timewalk_max_ns >= 0) ||
      !(response.timing.timewalk_tot_ref_ns > 0))
    throw ConfigError("invalid timing model");
  for (const auto& m : masks) m.validate();
}

BiphotonTruth sample_pair(RngStream& rng, const SimulationConfig& config) {
  const auto& g = config.geom;
  double s2t = g.sin_two_theta();

  double b;
  do {
    b = rng.uniform(g.b_min, g.b_max);
  } while (rng.uniform() * 0.25 >= b * (1.0 - b));

  double dth;
  do {
    dth = g.detuning_rad + rng.normal(0.0, 1.0) * g.detuning_sigma_rad;
  } while (!(dth > 0));

  double phi = rng.uniform(0.0, 2.0 * kPi);
  auto [cx, cy] = pixel_position(g.ring_center_col, g.ring_center_row);

  double alpha_a = emission_angle(b, dth, s2t, config.mode);
  double alpha_b = emission_angle(1.0 - b, dth, s2t, config.mode);
  double ra = g.crystal_to_detector_mm * std::tan(alpha_a);
  double rb = g.crystal_to_detector_mm * std::tan(alpha_b);

  PhotonTruth a;
  a.b = b;
  a.energy_kev = b * g.pump_energy_kev;
  a.alpha_rad = alpha_a;
  a.azimuth_rad = phi;
  a.x_mm = cx + ra * std::cos(phi);
  a.y_mm = cy + ra * std::sin(phi);

  PhotonTruth p;
  p.b = 1.0 - b;
  p.energy_kev = g.pump_energy_kev - a.energy_kev;
  p.alpha_rad = alpha_b;
  p.azimuth_rad = phi < kPi ? phi + kPi : phi - kPi;
  p.x_mm = cx - rb * std::cos(phi);
  p.y_mm = cy - rb * std::sin(phi);

  BiphotonTruth truth;
  truth.detuning_rad = dth;
  // The lower photon feeds the signal (lower-chip) arm.
  if (a.y_mm <= p.y_mm) {
    truth.signal = a;
    truth.idler = p;
  } else {
    truth.signal = p;
    truth.idler = a;
  }
  return truth;
}

std::vector<BackgroundPhoton> sample_background(RngStream& rng,
                                                const SimulationConfig& config,
                                                double window_start_ns,
                                                double window_length_ns) {
  std::vector<BackgroundPhoton> photons;
  double expected_spdc =
      2.0 * config.pair_rate_per_hour * window_length_ns / kNsPerHour;
  std::uint64_t n = rng.poisson(config.background_ratio * expected_spdc);
  photons.reserve(n);
  auto [cx, cy] = pixel_position(config.geom.ring_center_col,
                                 config.geom.ring_center_row);
  double w = DetectorLayout::width();
  for (std::uint64_t k = 0; k < n; ++k) {
    BackgroundPhoton ph;
    if (config.background_law == BackgroundLaw::Uniform) {
      ph.x_mm = rng.uniform(0.0, w);
      ph.y_mm = rng.uniform(0.0, w);
    } else {
      // 2D density ~ 1/r has a uniform radial marginal.
      for (;;) {
        double r = rng.uniform(0.0, w);
        double phi = rng.uniform(0.0, 2.0 * kPi);
        ph.x_mm = cx + r * std::cos(phi);
        ph.y_mm = cy + r * std::sin(phi);
        if (ph.x_mm >= 0 && ph.x_mm < w && ph.y_mm >= 0 && ph.y_mm < w) break;
      }
    }
    ph.energy_kev = config.geom.pump_energy_kev;
    ph.time_ns = rng.uniform(window_start_ns, window_start_ns + window_length_ns);
    photons.push_back(ph);
  }
  std::sort(photons.begin(), photons.end(),
            [](const BackgroundPhoton& l, const BackgroundPhoton& r) {
              return l.time_ns < r.time_ns;
            });
  return photons;
}

void apply_masks(std::span<BiphotonTruth> truths,
                 std::span<const TransmissionMask> masks, RngStream& rng) {
  for (auto& truth : truths) {
    double t_total = 1.0;
    for (const auto& m : masks)
      if (m.target == Arm::Signal)
        t_total *= m.transmission(truth.signal.x_mm, truth.signal.y_mm);
    double u = rng.uniform();
    if (u >= t_total) truth.signal.absorbed = true;
  }
}

namespace {

struct SliceResult {
  std::vector<BiphotonTruth> truths;
  std::vector<BackgroundPhoton> background;
  std::vector<RawHit> hits;
  std::uint64_t absorbed = 0;
};

SliceResult simulate_slice(int slice, const SimulationConfig& config,
                           const DetectorLayout& layout,
                           const ToTCalibration& calib) {
  SliceResult out;
  double len = config.slice_length_ns();
  double t0 = slice * len;

  RngStream pair_rng(config.seed, static_cast<std::uint64_t>(slice), kSaltPair);
  std::uint64_t n_pairs =
      pair_rng.poisson(config.pair_rate_per_hour * len / kNsPerHour);
  std::vector<double> times(n_pairs);
  for (auto& t : times) t = pair_rng.uniform(t0, t0 + len);
  std::sort(times.begin(), times.end());

  out.truths.reserve(n_pairs);
  for (double t : times) {
    BiphotonTruth truth = sample_pair(pair_rng, config);
    truth.emission_ns = t;
    out.truths.push_back(truth);
  }

  RngStream mask_rng(config.seed, static_cast<std::uint64_t>(slice), kSaltMask);
  apply_masks(out.truths, config.masks, mask_rng);

  RngStream bg_rng(config.seed, static_cast<std::uint64_t>(slice),
                   kSaltBackground);
  out.background = sample_background(bg_rng, config, t0, len);

  RngStream det_rng(config.seed, static_cast<std::uint64_t>(slice), kSaltDetect);
  double w = DetectorLayout::width();
  auto detect = [&](double x, double y, double energy, double time) {
    if (x < 0 || x >= w || y < 0 || y >= w) return;
    if (config.geom.beamstop.radius_mm > 0 &&
        config.geom.beamstop.contains(x, y))
      return;
    auto hs = synthesize_hits(x, y, energy, time, layout, calib,
                              config.response, det_rng);
    out.hits.insert(out.hits.end(), hs.begin(), hs.end());
  };

  for (const auto& truth : out.truths) {
    if (truth.signal.absorbed)
      ++out.absorbed;
    else
      detect(truth.signal.x_mm, truth.signal.y_mm, truth.signal.energy_kev,
             truth.emission_ns);
    detect(truth.idler.x_mm, truth.idler.y_mm, truth.idler.energy_kev,
           truth.emission_ns);
  }
  for (const auto& ph : out.background)
    detect(ph.x_mm, ph.y_mm, ph.energy_kev, ph.time_ns);
  return out;
}

}  // namespace

void sort_hits_canonical(std::vector<RawHit>& hits) {
  std::sort(hits.begin(), hits.end(), [](const RawHit& a, const RawHit& b) {
    return std::tie(a.toa_ns, a.col, a.row, a.tot_ns, a.chip) <
           std::tie(b.toa_ns, b.col, b.row, b.tot_ns, b.chip);
  });
}

SimResult run_simulation(const SimulationConfig& config,
                         const DetectorLayout& layout,
                         const ToTCalibration& calib, bool parallel) {
  config.validate();
  int n = config.slice_count();
  std::vector<SliceResult> slices(static_cast<std::size_t>(n));

#pragma omp parallel for schedule(dynamic) if (parallel && n > 1)
  for (int s = 0; s < n; ++s)
    slices[static_cast<std::size_t>(s)] =
        simulate_slice(s, config, layout, calib);

  SimResult out;
  for (auto& slice : slices) {
    for (auto& truth : slice.truths) {
      truth.pair_id = out.truths.size();
      out.truths.push_back(truth);
    }
    out.background.insert(out.background.end(), slice.background.begin(),
                          slice.background.end());
    out.hits.insert(out.hits.end(), slice.hits.begin(), slice.hits.end());
    out.absorbed_count += slice.absorbed;
  }
  sort_hits_canonical(out.hits);
  return out;
}

void write_truth_csv(const std::filesystem::path& path,
                     std::span<const BiphotonTruth> truths,
                     const csv::Meta& meta) {
  csv::Writer out(path, meta,
                  "pair_id,arm,b,detuning_rad,azimuth_rad,x_mm,y_mm,"
                  "energy_keV,emission_ns,absorbed");
  auto photon_row = [&](std::uint64_t id, const char* arm,
                        const PhotonTruth& p, double detuning,
                        double emission) {
    out.row("%llu,%s,%.9f,%.9e,%.9f,%.6f,%.6f,%.6f,%.4f,%d",
            static_cast<unsigned long long>(id), arm, p.b, detuning,
            p.azimuth_rad, p.x_mm, p.y_mm, p.energy_kev, emission,
            p.absorbed ? 1 : 0);
  };
  for (const auto& t : truths) {
    photon_row(t.pair_id, "signal", t.signal, t.detuning_rad, t.emission_ns);
    photon_row(t.pair_id, "idler", t.idler, t.detuning_rad, t.emission_ns);
  }
}

std::vector<BiphotonTruth> read_truth_csv(const std::filesystem::path& path) {
  std::vector<BiphotonTruth> truths;
  csv::for_each_row(
      path,
      "pair_id,arm,b,detuning_rad,azimuth_rad,x_mm,y_mm,energy_keV,"
      "emission_ns,absorbed",
      [&](const std::vector<std::string>& f, long line) {
        if (f.size() != 10) throw ParseError("expected 10 fields", line);
        auto id = static_cast<std::uint64_t>(csv::to_int(f[0], line));
        bool is_signal = f[1] == "signal";
        if (!is_signal && f[1] != "idler")
          throw ParseError("arm must be signal or idler", line);
        PhotonTruth p;
        p.b = csv::to_double(f[2], line);
        p.azimuth_rad = csv::to_double(f[4], line);
        p.x_mm = csv::to_double(f[5], line);
        p.y_mm = csv::to_double(f[6], line);
        p.energy_kev = csv::to_double(f[7], line);
        p.absorbed = csv::to_int(f[9], line) != 0;
        if (is_signal) {
          BiphotonTruth t;
          t.pair_id = id;
          t.detuning_rad = csv::to_double(f[3], line);
          t.emission_ns = csv::to_double(f[8], line);
          t.signal = p;
          truths.push_back(t);
        } else {
          if (truths.empty() || truths.back().pair_id != id)
            throw ParseError("idler row without matching signal row", line);
          truths.back().idler = p;
        }
      });
  return truths;
}

}  // namespace spdc
