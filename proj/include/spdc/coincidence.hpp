#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "spdc/kinematics.hpp"
#include "spdc/pipeline.hpp"

namespace spdc {

/// Raw-ToT coincidence box: cluster ToT sums must fall inside.
struct TotBox {
  double signal_lo_ns = 0.0;
  double signal_hi_ns = 0.0;
  double idler_lo_ns = 0.0;
  double idler_hi_ns = 0.0;
};

struct PairFilterConfig {
  double time_window_ns = 200.0;
  /// Bound on |azimuth_s - azimuth_i - pi| (wrapped).
  double azimuth_tolerance_rad = 0.05;
  /// Bound on |E_s + E_i - E_pump| for position-reconstructed energies.
  double energy_tolerance_kev = 1.5;
  std::optional<TotBox> tot_box;

  void validate() const;
};

struct CandidatePair {
  ClusterEvent signal;
  ClusterEvent idler;
  double dt_ns = 0.0;  // signal.toa - idler.toa
  double r_s_mm = 0.0;
  double r_i_mm = 0.0;
  double azimuth_s_rad = 0.0;
  double azimuth_i_rad = 0.0;
  double e_s_pos_kev = 0.0;
  double e_i_pos_kev = 0.0;
  double detuning_calc_rad = 0.0;
  bool passed = false;
};

struct MatchResult {
  std::vector<CandidatePair> pairs;
  std::vector<ClusterEvent> single_signal;
  std::vector<ClusterEvent> single_idler;
};

/// Greedy one-to-one matching in signal time order: each signal takes
/// the unconsumed idler with the smallest |dt| within the window (ties
/// to the earlier idler). Unmatched events are reported as singles.
MatchResult match_pairs(std::span<const ClusterEvent> signal_events,
                        std::span<const ClusterEvent> idler_events,
                        const PairFilterConfig& cfg = {});

/// Fills the geometric fields of each pair and sets the passed flag from
/// the anti-collinearity, energy-conservation, and optional ToT-box
/// predicates. Throws DegenerateGeometry if an event coincides with the
/// ring center.
void spatial_filter(std::span<CandidatePair> pairs,
                    const ExperimentGeometry& geom,
                    const PairFilterConfig& cfg = {});

struct Histogram {
  double lo = 0.0;
  double bin_width = 1.0;
  std::vector<std::uint64_t> counts;
  std::uint64_t n = 0;
  double mean = 0.0;
  double rms = 0.0;
};

/// Histogram of dt over passed pairs.
Histogram dt_histogram(std::span<const CandidatePair> pairs, double bin_ns);

struct GaussianFit {
  double mean = 0.0;
  double sigma = 0.0;
};

struct DetuningResult {
  Histogram hist;
  GaussianFit fit;
};

/// Per-pair detuning estimates with a Gaussian moment fit (3-sigma
/// clipped). Throws FitError below 100 passed pairs.
DetuningResult detuning_histogram(std::span<const CandidatePair> pairs,
                                  const ExperimentGeometry& geom);

struct ScatterRow {
  double alpha_s_rad = 0.0;
  double alpha_i_rad = 0.0;
  double e_s_kev = 0.0;
  double e_i_kev = 0.0;
  /// Partner angle predicted from alpha_s at the nominal detuning.
  double alpha_i_nominal_rad = 0.0;
};

std::vector<ScatterRow> emission_scatter(std::span<const CandidatePair> pairs,
                                         const ExperimentGeometry& geom);

void write_pairs_csv(const std::filesystem::path& path,
                     std::span<const CandidatePair> pairs,
                     const csv::Meta& meta);
/// Rebuilds the positional fields; radii and azimuths are recomputed
/// from the given geometry.
std::vector<CandidatePair> read_pairs_csv(const std::filesystem::path& path,
                                          const ExperimentGeometry& geom);
void write_histogram_csv(const std::filesystem::path& path,
                         const Histogram& hist, const csv::Meta& meta);
void write_scatter_csv(const std::filesystem::path& path,
                       std::span<const ScatterRow> rows, const csv::Meta& meta);

}  // namespace spdc
