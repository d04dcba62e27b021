#include "spdc/coincidence.hpp"

#include <algorithm>
#include <cmath>

#include "spdc/errors.hpp"
#include "spdc/simulator.hpp"

namespace spdc {

namespace {

void check_sorted(std::span<const ClusterEvent> events, const char* what) {
  for (std::size_t i = 1; i < events.size(); ++i)
    if (events[i].toa_ns < events[i - 1].toa_ns)
      throw OrderError(std::string(what) + " events not time-ordered");
}

double wrap_pi(double angle) {
  while (angle > kPi) angle -= 2.0 * kPi;
  while (angle <= -kPi) angle += 2.0 * kPi;
  return angle;
}

GaussianFit moment_fit(std::vector<double>& values) {
  auto moments = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= double(v.size());
    double s2 = 0;
    for (double x : v) s2 += (x - m) * (x - m);
    return GaussianFit{m, std::sqrt(s2 / double(v.size()))};
  };
  GaussianFit fit = moments(values);
  // Two clipping rounds remove the non-Gaussian tails (accidentals).
  for (int round = 0; round < 2; ++round) {
    if (!(fit.sigma > 0)) break;
    std::vector<double> kept;
    kept.reserve(values.size());
    for (double x : values)
      if (std::fabs(x - fit.mean) <= 3.0 * fit.sigma) kept.push_back(x);
    if (kept.size() < 10 || kept.size() == values.size()) break;
    values.swap(kept);
    fit = moments(values);
  }
  return fit;
}

Histogram build_histogram(const std::vector<double>& values, double bin_width) {
  Histogram h;
  h.bin_width = bin_width;
  h.n = values.size();
  if (values.empty()) return h;
  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  h.lo = std::floor(lo / bin_width) * bin_width;
  auto bins = static_cast<std::size_t>((hi - h.lo) / bin_width) + 1;
  h.counts.assign(bins, 0);
  double sum = 0, sum2 = 0;
  for (double x : values) {
    auto k = static_cast<std::size_t>((x - h.lo) / bin_width);
    ++h.counts[std::min(k, bins - 1)];
    sum += x;
  }
  h.mean = sum / double(h.n);
  for (double x : values) sum2 += (x - h.mean) * (x - h.mean);
  h.rms = std::sqrt(sum2 / double(h.n));
  return h;
}

}  // namespace

void PairFilterConfig::validate() const {
  if (!(time_window_ns > 0) || !(azimuth_tolerance_rad > 0) ||
      !(energy_tolerance_kev > 0))
    throw ConfigError("pair filter tolerances must be positive");
  if (tot_box) {
    if (!(tot_box->signal_hi_ns > tot_box->signal_lo_ns) ||
        !(tot_box->idler_hi_ns > tot_box->idler_lo_ns))
      throw ConfigError("tot box bounds must be increasing");
  }
}

MatchResult match_pairs(std::span<const ClusterEvent> signal_events,
                        std::span<const ClusterEvent> idler_events,
                        const PairFilterConfig& cfg) {
  cfg.validate();
  check_sorted(signal_events, "signal");
  check_sorted(idler_events, "idler");

  MatchResult out;
  std::vector<bool> consumed(idler_events.size(), false);
  std::size_t window_lo = 0;

  for (const auto& s : signal_events) {
    while (window_lo < idler_events.size() &&
           idler_events[window_lo].toa_ns < s.toa_ns - cfg.time_window_ns)
      ++window_lo;
    std::size_t best = idler_events.size();
    double best_dt = cfg.time_window_ns;
    for (std::size_t j = window_lo; j < idler_events.size(); ++j) {
      double dt = idler_events[j].toa_ns - s.toa_ns;
      if (dt > cfg.time_window_ns) break;
      if (consumed[j]) continue;
      if (std::fabs(dt) < best_dt ||
          (std::fabs(dt) == best_dt && best == idler_events.size())) {
        best_dt = std::fabs(dt);
        best = j;
      }
    }
    if (best == idler_events.size()) {
      out.single_signal.push_back(s);
      continue;
    }
    consumed[best] = true;
    CandidatePair p;
    p.signal = s;
    p.idler = idler_events[best];
    p.dt_ns = s.toa_ns - idler_events[best].toa_ns;
    out.pairs.push_back(p);
  }
  for (std::size_t j = 0; j < idler_events.size(); ++j)
    if (!consumed[j]) out.single_idler.push_back(idler_events[j]);
  return out;
}

void spatial_filter(std::span<CandidatePair> pairs,
                    const ExperimentGeometry& geom,
                    const PairFilterConfig& cfg) {
  cfg.validate();
  auto [cx, cy] = pixel_position(geom.ring_center_col, geom.ring_center_row);
  double L = geom.crystal_to_detector_mm;

  for (auto& p : pairs) {
    double dxs = p.signal.x_mm - cx, dys = p.signal.y_mm - cy;
    double dxi = p.idler.x_mm - cx, dyi = p.idler.y_mm - cy;
    p.r_s_mm = std::hypot(dxs, dys);
    p.r_i_mm = std::hypot(dxi, dyi);
    if (!(p.r_s_mm > 0) || !(p.r_i_mm > 0))
      throw DegenerateGeometry("event coincides with the ring center");
    p.azimuth_s_rad = std::atan2(dys, dxs);
    p.azimuth_i_rad = std::atan2(dyi, dxi);
    p.e_s_pos_kev = energy_from_radius(p.r_s_mm, geom);
    p.e_i_pos_kev = energy_from_radius(p.r_i_mm, geom);
    p.detuning_calc_rad = detuning_from_angles(
        std::atan(p.r_s_mm / L), std::atan(p.r_i_mm / L), geom.bragg_angle_rad);

    bool anti =
        std::fabs(wrap_pi(p.azimuth_s_rad - p.azimuth_i_rad - kPi)) <=
        cfg.azimuth_tolerance_rad;
    bool energy = std::fabs(p.e_s_pos_kev + p.e_i_pos_kev -
                            geom.pump_energy_kev) <= cfg.energy_tolerance_kev;
    bool box = true;
    if (cfg.tot_box) {
      const TotBox& b = *cfg.tot_box;
      box = p.signal.tot_sum_ns >= b.signal_lo_ns &&
            p.signal.tot_sum_ns <= b.signal_hi_ns &&
            p.idler.tot_sum_ns >= b.idler_lo_ns &&
            p.idler.tot_sum_ns <= b.idler_hi_ns;
    }
    p.passed = anti && energy && box;
  }
}

Histogram dt_histogram(std::span<const CandidatePair> pairs, double bin_ns) {
  if (!(bin_ns > 0)) throw ConfigError("bin width must be positive");
  std::vector<double> dts;
  dts.reserve(pairs.size());
  for (const auto& p : pairs)
    if (p.passed) dts.push_back(p.dt_ns);
  return build_histogram(dts, bin_ns);
}

DetuningResult detuning_histogram(std::span<const CandidatePair> pairs,
                                  const ExperimentGeometry& geom) {
  (void)geom;
  std::vector<double> values;
  values.reserve(pairs.size());
  for (const auto& p : pairs)
    if (p.passed) values.push_back(p.detuning_calc_rad);
  if (values.size() < 100)
    throw FitError("need at least 100 passed pairs for the detuning fit");

  DetuningResult out;
  double lo = *std::min_element(values.begin(), values.end());
  double hi = *std::max_element(values.begin(), values.end());
  double width = (hi > lo) ? (hi - lo) / 50.0 : 1e-7;
  out.hist = build_histogram(values, width);
  out.fit = moment_fit(values);
  return out;
}

std::vector<ScatterRow> emission_scatter(std::span<const CandidatePair> pairs,
                                         const ExperimentGeometry& geom) {
  std::vector<ScatterRow> rows;
  double L = geom.crystal_to_detector_mm;
  double k = geom.ring_coefficient();
  for (const auto& p : pairs) {
    if (!p.passed) continue;
    ScatterRow r;
    r.alpha_s_rad = std::atan(p.r_s_mm / L);
    r.alpha_i_rad = std::atan(p.r_i_mm / L);
    r.e_s_kev = p.e_s_pos_kev;
    r.e_i_kev = p.e_i_pos_kev;
    r.alpha_i_nominal_rad = k / r.alpha_s_rad;
    rows.push_back(r);
  }
  return rows;
}

void write_pairs_csv(const std::filesystem::path& path,
                     std::span<const CandidatePair> pairs,
                     const csv::Meta& meta) {
  csv::Writer out(path, meta,
                  "dt_ns,xs_mm,ys_mm,xi_mm,yi_mm,es_keV,ei_keV,detuning_rad,"
                  "passed");
  for (const auto& p : pairs)
    out.row("%.4f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.9e,%d", p.dt_ns,
            p.signal.x_mm, p.signal.y_mm, p.idler.x_mm, p.idler.y_mm,
            p.e_s_pos_kev, p.e_i_pos_kev, p.detuning_calc_rad,
            p.passed ? 1 : 0);
}

std::vector<CandidatePair> read_pairs_csv(const std::filesystem::path& path,
                                          const ExperimentGeometry& geom) {
  auto [cx, cy] = pixel_position(geom.ring_center_col, geom.ring_center_row);
  std::vector<CandidatePair> pairs;
  csv::for_each_row(
      path,
      "dt_ns,xs_mm,ys_mm,xi_mm,yi_mm,es_keV,ei_keV,detuning_rad,passed",
      [&](const std::vector<std::string>& f, long line) {
        if (f.size() != 9)
          throw ParseError("expected 9 fields in pair row", line);
        CandidatePair p;
        p.dt_ns = csv::to_double(f[0], line);
        p.signal.x_mm = csv::to_double(f[1], line);
        p.signal.y_mm = csv::to_double(f[2], line);
        p.idler.x_mm = csv::to_double(f[3], line);
        p.idler.y_mm = csv::to_double(f[4], line);
        p.e_s_pos_kev = csv::to_double(f[5], line);
        p.e_i_pos_kev = csv::to_double(f[6], line);
        p.detuning_calc_rad = csv::to_double(f[7], line);
        p.passed = csv::to_int(f[8], line) != 0;
        const double dxs = p.signal.x_mm - cx, dys = p.signal.y_mm - cy;
        const double dxi = p.idler.x_mm - cx, dyi = p.idler.y_mm - cy;
        p.r_s_mm = std::hypot(dxs, dys);
        p.r_i_mm = std::hypot(dxi, dyi);
        p.azimuth_s_rad = std::atan2(dys, dxs);
        p.azimuth_i_rad = std::atan2(dyi, dxi);
        pairs.push_back(p);
      });
  return pairs;
}

void write_histogram_csv(const std::filesystem::path& path,
                         const Histogram& hist, const csv::Meta& meta) {
  csv::Writer out(path, meta, "bin_low,count");
  for (std::size_t i = 0; i < hist.counts.size(); ++i)
    out.row("%.6f,%llu", hist.lo + double(i) * hist.bin_width,
            static_cast<unsigned long long>(hist.counts[i]));
}

void write_scatter_csv(const std::filesystem::path& path,
                       std::span<const ScatterRow> rows,
                       const csv::Meta& meta) {
  csv::Writer out(path, meta,
                  "alpha_s_rad,alpha_i_rad,es_keV,ei_keV,alpha_i_nominal_rad");
  for (const auto& r : rows)
    out.row("%.9f,%.9f,%.6f,%.6f,%.9f", r.alpha_s_rad, r.alpha_i_rad,
            r.e_s_kev, r.e_i_kev, r.alpha_i_nominal_rad);
}

}  // namespace spdc
