#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "spdc/detector.hpp"
#include "spdc/kinematics.hpp"
#include "spdc/rng.hpp"

namespace spdc {

/// Physical position of a (possibly fractional) logical pixel coordinate.
std::pair<double, double> pixel_position(double col, double row);

/// Absorbing object in front of the signal arm: transmission values on a
/// uniform grid in detector coordinates. Points outside the grid
/// transmit fully.
struct TransmissionMask {
  double x0_mm = 0.0;
  double y0_mm = 0.0;
  double cell_mm = DetectorLayout::kPitchMm;
  int nx = 0;
  int ny = 0;
  std::vector<float> t;
  Arm target = Arm::Signal;

  double transmission(double x_mm, double y_mm) const;
  void validate() const;

  static TransmissionMask from_function(
      double x0_mm, double y0_mm, double x1_mm, double y1_mm, double cell_mm,
      const std::function<double(double, double)>& fn);
};

struct PhotonTruth {
  double b = 0.0;
  double energy_kev = 0.0;
  double alpha_rad = 0.0;
  double azimuth_rad = 0.0;
  double x_mm = 0.0;
  double y_mm = 0.0;
  bool absorbed = false;
};

/// Ground-truth pair. The signal photon is the one emitted toward the
/// lower detector half (smaller y); its partner is the idler.
struct BiphotonTruth {
  std::uint64_t pair_id = 0;
  double detuning_rad = 0.0;
  double emission_ns = 0.0;
  PhotonTruth signal;
  PhotonTruth idler;
};

struct BackgroundPhoton {
  double x_mm = 0.0;
  double y_mm = 0.0;
  double energy_kev = 0.0;
  double time_ns = 0.0;
};

enum class BackgroundLaw { Uniform, OneOverR };

struct SimulationConfig {
  ExperimentGeometry geom;
  ResponseModel response;
  double pair_rate_per_hour = 6300.0;
  double background_ratio = 0.0;  // background photons per SPDC photon
  double duration_hours = 1.0;
  int slices_per_hour = 60;
  AngleMode mode = AngleMode::Exact;
  BackgroundLaw background_law = BackgroundLaw::Uniform;
  std::vector<TransmissionMask> masks;
  std::uint64_t seed = 1;

  int slice_count() const;
  double slice_length_ns() const;
  void validate() const;
};

/// Kinematic sampling only; emission_ns is left at zero for the caller.
BiphotonTruth sample_pair(RngStream& rng, const SimulationConfig& config);

std::vector<BackgroundPhoton> sample_background(RngStream& rng,
                                                const SimulationConfig& config,
                                                double window_start_ns,
                                                double window_length_ns);

/// Marks signal photons absorbed with probability 1 - t(x, y). Consumes
/// exactly one uniform draw per pair.
void apply_masks(std::span<BiphotonTruth> truths,
                 std::span<const TransmissionMask> masks, RngStream& rng);

struct SimResult {
  std::vector<BiphotonTruth> truths;
  std::vector<BackgroundPhoton> background;
  std::vector<RawHit> hits;
  std::uint64_t absorbed_count = 0;
};

/// Full run: slices execute independently (in parallel when requested)
/// on RNG streams derived from (seed, slice); the merged output is
/// identical either way.
SimResult run_simulation(const SimulationConfig& config,
                         const DetectorLayout& layout,
                         const ToTCalibration& calib, bool parallel = true);

void sort_hits_canonical(std::vector<RawHit>& hits);

void write_truth_csv(const std::filesystem::path& path,
                     std::span<const BiphotonTruth> truths,
                     const csv::Meta& meta);
std::vector<BiphotonTruth> read_truth_csv(const std::filesystem::path& path);

}  // namespace spdc
