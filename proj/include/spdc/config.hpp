#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spdc/coincidence.hpp"
#include "spdc/identify.hpp"
#include "spdc/pipeline.hpp"
#include "spdc/simulator.hpp"

namespace spdc {

/// Declarative absorber: rasterized into a TransmissionMask on build.
struct MaskSpec {
  std::string shape;  // "rect" | "disk" | "annulus"
  double transmission = 0.0;
  double cell_mm = DetectorLayout::kPitchMm;
  // rect bounds
  double x0_mm = 0.0, y0_mm = 0.0, x1_mm = 0.0, y1_mm = 0.0;
  // disk / annulus
  double cx_mm = 0.0, cy_mm = 0.0, r_in_mm = 0.0, r_out_mm = 0.0;

  void validate() const;
  TransmissionMask build() const;
};

struct ImagingConfig {
  int rebin = 1;
  bool rotate_idler = false;  // display transform on idler PGMs
  std::vector<double> contour_energies_kev = {6.0, 7.5, 9.0};
  double grid_spacing_mm = 1.0;
  double grid_r_lo_mm = 9.0;
  double grid_r_hi_mm = 14.5;

  void validate() const;
};

enum class SpectrumChoice { Degenerate, Band };

struct IdentifyConfig {
  SpectrumChoice spectrum = SpectrumChoice::Degenerate;
  double sigma_ns = kDefaultSpectrumSigmaNs;
  double beta_lo = 1.0, beta_hi = 1e6;
  int beta_n = 20;
  double zeta_lo = 0.5, zeta_hi = 4.0;
  int zeta_n = 20;
  SsnConfig ssn;

  void validate() const;
  SpectrumModel spdc_model(const ExperimentGeometry& geom,
                           const ToTCalibration& calib) const;
  SpectrumModel pump_model(const ExperimentGeometry& geom,
                           const ToTCalibration& calib) const;
};

/// Input files consumed by the process and image commands.
struct InputPaths {
  std::string events;
  std::string pairs;
  std::string clusters;
};

struct RunConfig {
  std::string run_name = "run";
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  int threads = 0;  // 0 keeps the environment default

  SimulationConfig sim;
  ToTCalibration calib;
  double hot_fraction = 0.0;
  std::vector<MaskSpec> mask_specs;
  InputPaths inputs;

  ReadOptions read;
  ClusteringConfig cluster;
  BandFilter band;
  PairFilterConfig pair_filter;
  double dt_bin_ns = 25.0;

  ImagingConfig imaging;
  IdentifyConfig identify;

  void validate() const;
  /// Canonical serialization of the effective physics configuration;
  /// excludes seed, out_dir, and threads so reruns elsewhere keep the
  /// same digest.
  std::string canonical_json() const;
  std::uint64_t digest() const;
  csv::Meta meta() const;
};

/// Parses a JSON document; unknown keys are rejected. Throws ParseError
/// on syntax errors, ConfigError on invalid values.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

}  // namespace spdc
