#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "spdc/csv.hpp"
#include "spdc/rng.hpp"

namespace spdc {

enum class Arm { Signal, Idler };

const char* arm_name(Arm arm);

struct PixelCoord {
  int col = 0;
  int row = 0;
  bool operator==(const PixelCoord&) const = default;
};

/// One detector event: a single pixel firing once.
struct RawHit {
  int chip = 0;
  int col = 0;
  int row = 0;
  double toa_ns = 0.0;
  double tot_ns = 0.0;
};

/// Four 256x256 chips tiled 2x2 into a 512x512 logical grid. The two
/// rows/columns adjacent to the chip boundary (indices 255 and 256) are
/// 110 um wide instead of 55 um, so physical coordinates expand onto a
/// 514-bin raster per axis.
class DetectorLayout {
 public:
  static constexpr int kLogicalSize = 512;
  static constexpr int kPhysicalBins = 514;
  static constexpr double kPitchMm = 0.055;
  static constexpr double kGapPitchMm = 0.110;

  DetectorLayout();

  /// Lower chips (rows < 256) image the signal arm by default.
  std::array<Arm, 4> chip_roles;

  /// Quadrant id: 1 upper-left, 2 upper-right, 3 lower-left,
  /// 4 lower-right (upper = rows >= 256).
  static int chip_of(int col, int row);
  Arm arm_of(int col, int row) const;

  /// Physical center of a logical index along either axis, in mm.
  static double axis_center(int index);
  /// Physical [low, high) cell bounds of a logical index, in mm.
  static std::pair<double, double> axis_cell(int index);
  /// Logical index containing a physical coordinate. Throws
  /// OutOfActiveArea outside [0, width()).
  static int axis_index(double coord_mm);
  static double width() { return kPhysicalBins * kPitchMm; }

  std::pair<double, double> logical_to_physical(int col, int row) const;

  /// 55 um raster bin for image accumulation; values clamped into range.
  static int physical_bin(double coord_mm);
  /// Bins covered by no pixel center (outer halves of the wide strips).
  static bool is_gap_bin(int bin) { return bin == 255 || bin == 257; }

  bool is_hot(int col, int row) const;
  void set_hot(int col, int row);
  std::size_t hot_count() const { return hot_.size(); }
  /// Marks floor(fraction * 512^2) distinct pixels hot.
  void randomize_hot_pixels(double fraction, RngStream& rng);

  void load_hot_mask_csv(const std::filesystem::path& path);
  void save_hot_mask_csv(const std::filesystem::path& path,
                         const csv::Meta& meta) const;

  /// Drops hits on hot pixels; preserves order.
  std::vector<RawHit> apply_hot_mask(std::span<const RawHit> hits) const;

 private:
  std::unordered_set<std::uint32_t> hot_;
  static std::uint32_t key(int col, int row);
};

struct PixelCalib {
  double gain_ns_per_kev = 40.0;
  double offset_ns = 100.0;
  double variation = 1.0;
  double cutoff_ns = 580.0;
};

/// Linear per-pixel ToT model: tot = offset + gain * variation * energy.
/// Pixels without an explicit entry fall back to the global defaults
/// unless require_per_pixel is set.
class ToTCalibration {
 public:
  PixelCalib global;
  double energy_resolution_fwhm_kev = 2.0;
  double tot_quantum_ns = 25.0;
  bool require_per_pixel = false;

  double sigma_kev() const;

  const PixelCalib& at(int col, int row) const;
  void set_pixel(int col, int row, const PixelCalib& calib);
  std::size_t override_count() const { return pixels_.size(); }

  double energy_to_tot_mean(double energy_kev, int col, int row) const;
  /// Inverts the linear model; clamps at zero.
  double tot_to_energy(double tot_ns, int col, int row) const;
  double cutoff_ns(int col, int row) const;
  double quantize_tot(double tot_ns) const;

  /// Midpoint between the expected 9 keV and 15 keV responses,
  /// separating the SPDC band from the elastic pump band.
  static double default_cutoff(const PixelCalib& calib);

  /// Draws per-pixel gain variations (Gaussian around 1) and recomputes
  /// cutoffs, emulating a calibration-scan spread.
  void randomize_variations(double rel_sigma, RngStream& rng);

  void load_csv(const std::filesystem::path& path);
  void save_csv(const std::filesystem::path& path, const csv::Meta& meta) const;

 private:
  std::unordered_map<std::uint32_t, PixelCalib> pixels_;
};

struct TimingModel {
  double toa_quantum_ns = 25.0 / 16.0;  // 1.5625
  double tot_quantum_ns = 25.0;
  double jitter_rms_ns = 18.0;
  double timewalk_max_ns = 100.0;
  /// ToT at which the walk vanishes; the full 10-bit counter range.
  double timewalk_tot_ref_ns = 1023.0 * 25.0;
};

/// Charge-sharing and per-hit response parameters.
struct ResponseModel {
  TimingModel timing;
  /// Half-side of the uniform square charge cloud. Zero collapses every
  /// deposit onto a single pixel.
  double sharing_radius_mm = 0.010;
};

double timewalk_delay_ns(double tot_ns, const TimingModel& timing);
double quantize_toa(double toa_ns, const TimingModel& timing);

/// Converts one energy deposit into pixel hits: splits charge over the
/// cells overlapping the cloud, draws each ToT from the calibrated mean
/// with resolution noise, applies one shared arrival jitter plus per-hit
/// timewalk, and quantizes. Hot pixels produce nothing.
std::vector<RawHit> synthesize_hits(double x_mm, double y_mm,
                                    double energy_kev, double time_ns,
                                    const DetectorLayout& layout,
                                    const ToTCalibration& calib,
                                    const ResponseModel& response,
                                    RngStream& rng);

void write_events_csv(const std::filesystem::path& path,
                      std::span<const RawHit> hits, const csv::Meta& meta);
std::vector<RawHit> read_events_csv(const std::filesystem::path& path);

}  // namespace spdc
