#include "spdc/detector.hpp"

#include <algorithm>
#include <cmath>

#include "spdc/errors.hpp"

namespace spdc {

namespace {

constexpr double kFwhmToSigma = 2.354820045030949;

void check_index(int col, int row) {
  if (col < 0 || col >= DetectorLayout::kLogicalSize || row < 0 ||
      row >= DetectorLayout::kLogicalSize)
    throw IndexError("pixel index outside 512x512 grid");
}

std::uint32_t pix_key(int col, int row) {
  check_index(col, row);
  return static_cast<std::uint32_t>(col) << 9 | static_cast<std::uint32_t>(row);
}

struct AxisShare {
  int index;
  double weight;
};

/// Overlap fractions of a uniform cloud [center-s, center+s] with the
/// physical cells near it. With s = 0 the containing cell gets weight 1.
void share_axis(double center_mm, double s_mm, AxisShare out[], int& n) {
  n = 0;
  int c0 = DetectorLayout::axis_index(center_mm);
  if (s_mm <= 0) {
    out[n++] = {c0, 1.0};
    return;
  }
  double lo = center_mm - s_mm, hi = center_mm + s_mm;
  for (int c = std::max(0, c0 - 2);
       c <= std::min(DetectorLayout::kLogicalSize - 1, c0 + 2); ++c) {
    auto [cell_lo, cell_hi] = DetectorLayout::axis_cell(c);
    double overlap = std::min(hi, cell_hi) - std::max(lo, cell_lo);
    if (overlap > 0) out[n++] = {c, overlap / (2.0 * s_mm)};
  }
}

}  // namespace

const char* arm_name(Arm arm) {
  return arm == Arm::Signal ? "signal" : "idler";
}

DetectorLayout::DetectorLayout()
    : chip_roles{Arm::Idler, Arm::Idler, Arm::Signal, Arm::Signal} {}

int DetectorLayout::chip_of(int col, int row) {
  check_index(col, row);
  return (row >= 256 ? 1 : 3) + (col >= 256 ? 1 : 0);
}

Arm DetectorLayout::arm_of(int col, int row) const {
  return chip_roles[static_cast<std::size_t>(chip_of(col, row) - 1)];
}

double DetectorLayout::axis_center(int index) {
  auto [lo, hi] = axis_cell(index);
  return 0.5 * (lo + hi);
}

std::pair<double, double> DetectorLayout::axis_cell(int index) {
  if (index < 0 || index >= kLogicalSize)
    throw IndexError("axis index outside [0, 512)");
  if (index < 255) return {index * kPitchMm, (index + 1) * kPitchMm};
  if (index == 255) return {255 * kPitchMm, 255 * kPitchMm + kGapPitchMm};
  if (index == 256)
    return {255 * kPitchMm + kGapPitchMm, 255 * kPitchMm + 2 * kGapPitchMm};
  return {index * kPitchMm + kGapPitchMm, (index + 1) * kPitchMm + kGapPitchMm};
}

int DetectorLayout::axis_index(double coord_mm) {
  if (!(coord_mm >= 0) || !(coord_mm < width()))
    throw OutOfActiveArea("coordinate outside detector active area");
  if (coord_mm < 255 * kPitchMm)
    return std::min(254, static_cast<int>(coord_mm / kPitchMm));
  if (coord_mm < 255 * kPitchMm + kGapPitchMm) return 255;
  if (coord_mm < 255 * kPitchMm + 2 * kGapPitchMm) return 256;
  return std::clamp(static_cast<int>((coord_mm - kGapPitchMm) / kPitchMm), 257,
                    kLogicalSize - 1);
}

std::pair<double, double> DetectorLayout::logical_to_physical(int col,
                                                              int row) const {
  check_index(col, row);
  return {axis_center(col), axis_center(row)};
}

int DetectorLayout::physical_bin(double coord_mm) {
  int bin = static_cast<int>(std::floor(coord_mm / kPitchMm));
  return std::clamp(bin, 0, kPhysicalBins - 1);
}

bool DetectorLayout::is_hot(int col, int row) const {
  return hot_.count(pix_key(col, row)) != 0;
}

void DetectorLayout::set_hot(int col, int row) { hot_.insert(pix_key(col, row)); }

void DetectorLayout::randomize_hot_pixels(double fraction, RngStream& rng) {
  if (fraction < 0 || fraction > 0.01)
    throw ConfigError("hot pixel fraction outside [0, 0.01]");
  auto target = static_cast<std::size_t>(fraction * kLogicalSize * kLogicalSize);
  while (hot_.size() < target) {
    int col = static_cast<int>(rng.integer(kLogicalSize));
    int row = static_cast<int>(rng.integer(kLogicalSize));
    hot_.insert(pix_key(col, row));
  }
}

void DetectorLayout::load_hot_mask_csv(const std::filesystem::path& path) {
  csv::for_each_row(path, "col,row",
                    [&](const std::vector<std::string>& f, long line) {
                      if (f.size() != 2)
                        throw ParseError("expected 2 fields", line);
                      int col = csv::to_int(f[0], line);
                      int row = csv::to_int(f[1], line);
                      if (col < 0 || col >= kLogicalSize || row < 0 ||
                          row >= kLogicalSize)
                        throw ParseError("pixel index out of range", line);
                      hot_.insert(pix_key(col, row));
                    });
}

void DetectorLayout::save_hot_mask_csv(const std::filesystem::path& path,
                                       const csv::Meta& meta) const {
  std::vector<std::uint32_t> keys(hot_.begin(), hot_.end());
  std::sort(keys.begin(), keys.end());
  csv::Writer out(path, meta, "col,row");
  for (auto k : keys) out.row("%u,%u", k >> 9, k & 0x1ffu);
}

std::vector<RawHit> DetectorLayout::apply_hot_mask(
    std::span<const RawHit> hits) const {
  std::vector<RawHit> kept;
  kept.reserve(hits.size());
  for (const auto& h : hits)
    if (!is_hot(h.col, h.row)) kept.push_back(h);
  return kept;
}

std::uint32_t DetectorLayout::key(int col, int row) { return pix_key(col, row); }

double ToTCalibration::sigma_kev() const {
  return energy_resolution_fwhm_kev / kFwhmToSigma;
}

const PixelCalib& ToTCalibration::at(int col, int row) const {
  auto it = pixels_.find(pix_key(col, row));
  if (it != pixels_.end()) return it->second;
  if (require_per_pixel)
    throw CalibrationMissing("no calibration entry for pixel");
  return global;
}

void ToTCalibration::set_pixel(int col, int row, const PixelCalib& calib) {
  if (!(calib.gain_ns_per_kev > 0) || !(calib.variation > 0))
    throw ConfigError("calibration gain and variation must be positive");
  pixels_[pix_key(col, row)] = calib;
}

double ToTCalibration::energy_to_tot_mean(double energy_kev, int col,
                                          int row) const {
  const PixelCalib& c = at(col, row);
  return c.offset_ns + c.gain_ns_per_kev * c.variation * energy_kev;
}

double ToTCalibration::tot_to_energy(double tot_ns, int col, int row) const {
  if (!(tot_ns >= 0)) throw DomainError("tot must be non-negative");
  const PixelCalib& c = at(col, row);
  double e = (tot_ns - c.offset_ns) / (c.gain_ns_per_kev * c.variation);
  return std::max(0.0, e);
}

double ToTCalibration::cutoff_ns(int col, int row) const {
  return at(col, row).cutoff_ns;
}

double ToTCalibration::quantize_tot(double tot_ns) const {
  if (tot_quantum_ns <= 0) return tot_ns;
  return std::llround(tot_ns / tot_quantum_ns) * tot_quantum_ns;
}

double ToTCalibration::default_cutoff(const PixelCalib& calib) {
  // Midpoint of the expected 9 keV and 15 keV responses.
  return calib.offset_ns + calib.gain_ns_per_kev * calib.variation * 12.0;
}

void ToTCalibration::randomize_variations(double rel_sigma, RngStream& rng) {
  if (rel_sigma < 0) throw ConfigError("calibration spread must be >= 0");
  for (int col = 0; col < DetectorLayout::kLogicalSize; ++col)
    for (int row = 0; row < DetectorLayout::kLogicalSize; ++row) {
      PixelCalib c = global;
      c.variation = std::max(0.5, rng.normal(1.0, rel_sigma));
      c.cutoff_ns = default_cutoff(c);
      pixels_[pix_key(col, row)] = c;
    }
}

void ToTCalibration::load_csv(const std::filesystem::path& path) {
  csv::for_each_row(
      path, "col,row,gain_ns_per_keV,offset_ns,variation,cutoff_ns",
      [&](const std::vector<std::string>& f, long line) {
        if (f.size() != 6) throw ParseError("expected 6 fields", line);
        int col = csv::to_int(f[0], line);
        int row = csv::to_int(f[1], line);
        PixelCalib c;
        c.gain_ns_per_kev = csv::to_double(f[2], line);
        c.offset_ns = csv::to_double(f[3], line);
        c.variation = csv::to_double(f[4], line);
        c.cutoff_ns = csv::to_double(f[5], line);
        if (!(c.gain_ns_per_kev > 0) || !(c.variation > 0))
          throw ParseError("gain and variation must be positive", line);
        set_pixel(col, row, c);
      });
}

void ToTCalibration::save_csv(const std::filesystem::path& path,
                              const csv::Meta& meta) const {
  std::vector<std::uint32_t> keys;
  keys.reserve(pixels_.size());
  for (const auto& [k, v] : pixels_) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  csv::Writer out(path, meta,
                  "col,row,gain_ns_per_keV,offset_ns,variation,cutoff_ns");
  for (auto k : keys) {
    const PixelCalib& c = pixels_.at(k);
    out.row("%u,%u,%.6f,%.6f,%.9f,%.6f", k >> 9, k & 0x1ffu, c.gain_ns_per_kev,
            c.offset_ns, c.variation, c.cutoff_ns);
  }
}

double timewalk_delay_ns(double tot_ns, const TimingModel& timing) {
  if (timing.timewalk_max_ns <= 0) return 0.0;
  double d =
      timing.timewalk_max_ns * (1.0 - tot_ns / timing.timewalk_tot_ref_ns);
  return std::clamp(d, 0.0, timing.timewalk_max_ns);
}

double quantize_toa(double toa_ns, const TimingModel& timing) {
  if (timing.toa_quantum_ns <= 0) return toa_ns;
  return std::llround(toa_ns / timing.toa_quantum_ns) * timing.toa_quantum_ns;
}

std::vector<RawHit> synthesize_hits(double x_mm, double y_mm,
                                    double energy_kev, double time_ns,
                                    const DetectorLayout& layout,
                                    const ToTCalibration& calib,
                                    const ResponseModel& response,
                                    RngStream& rng) {
  if (!(energy_kev > 0)) throw DomainError("deposit energy must be positive");
  AxisShare xs[5], ys[5];
  int nx = 0, ny = 0;
  share_axis(x_mm, response.sharing_radius_mm, xs, nx);
  share_axis(y_mm, response.sharing_radius_mm, ys, ny);

  // One conversion-depth jitter per photon, shared by all its hits.
  double jitter = rng.normal(0.0, 1.0) * response.timing.jitter_rms_ns;
  double sigma_kev = calib.sigma_kev();

  std::vector<RawHit> hits;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) {
      int col = xs[i].index, row = ys[j].index;
      if (layout.is_hot(col, row)) continue;
      double w = xs[i].weight * ys[j].weight;
      const PixelCalib& pc = calib.at(col, row);
      double gain_eff = pc.gain_ns_per_kev * pc.variation;
      double mean_tot = pc.offset_ns + gain_eff * w * energy_kev;
      // sqrt(w) scaling keeps the cluster-summed energy noise at the
      // configured resolution.
      double sigma_tot = gain_eff * sigma_kev * std::sqrt(w);
      double tot = calib.quantize_tot(mean_tot + rng.normal(0.0, 1.0) * sigma_tot);
      if (tot <= 0) continue;
      RawHit h;
      h.chip = DetectorLayout::chip_of(col, row);
      h.col = col;
      h.row = row;
      h.tot_ns = tot;
      h.toa_ns = quantize_toa(
          time_ns + jitter + timewalk_delay_ns(tot, response.timing),
          response.timing);
      hits.push_back(h);
    }
  return hits;
}

void write_events_csv(const std::filesystem::path& path,
                      std::span<const RawHit> hits, const csv::Meta& meta) {
  csv::Writer out(path, meta, "chip,col,row,toa_ns,tot_ns");
  for (const auto& h : hits)
    out.row("%d,%d,%d,%.4f,%.0f", h.chip, h.col, h.row, h.toa_ns, h.tot_ns);
}

std::vector<RawHit> read_events_csv(const std::filesystem::path& path) {
  std::vector<RawHit> hits;
  csv::for_each_row(path, "chip,col,row,toa_ns,tot_ns",
                    [&](const std::vector<std::string>& f, long line) {
                      if (f.size() != 5)
                        throw ParseError("expected 5 fields", line);
                      RawHit h;
                      h.chip = csv::to_int(f[0], line);
                      h.col = csv::to_int(f[1], line);
                      h.row = csv::to_int(f[2], line);
                      h.toa_ns = csv::to_double(f[3], line);
                      h.tot_ns = csv::to_double(f[4], line);
                      if (h.col < 0 || h.col >= DetectorLayout::kLogicalSize ||
                          h.row < 0 || h.row >= DetectorLayout::kLogicalSize)
                        throw ParseError("pixel index out of range", line);
                      if (h.tot_ns < 0)
                        throw ParseError("negative tot", line);
                      hits.push_back(h);
                    });
  return hits;
}

}  // namespace spdc
