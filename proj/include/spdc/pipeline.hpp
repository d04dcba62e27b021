#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "spdc/detector.hpp"

namespace spdc {

struct ReadOptions {
  /// Hits may arrive out of order by at most this many positions; the
  /// reader restores order through a bounded min-heap.
  std::size_t reorder_buffer = 4096;
  /// Quanta validated on ingest; zero disables the check.
  double toa_quantum_ns = 25.0 / 16.0;
  double tot_quantum_ns = 25.0;
};

/// Reads an event file into a time-ordered hit vector. Throws ParseError
/// (with line number) on malformed rows or quantum violations and
/// OrderError when disorder exceeds the reorder buffer.
std::vector<RawHit> read_events(const std::filesystem::path& path,
                                const ReadOptions& opts = {});

/// Centroided photon candidate reconstructed from one hit group.
struct ClusterEvent {
  Arm arm = Arm::Signal;
  double x_mm = 0.0;
  double y_mm = 0.0;
  double energy_kev = 0.0;
  double toa_ns = 0.0;  // minimum over members
  int n_pixels = 0;
  // Seed = highest-ToT member; carries the arm and the raw-ToT filter.
  int seed_col = 0;
  int seed_row = 0;
  double seed_tot_ns = 0.0;
  double tot_sum_ns = 0.0;
};

struct ClusteringConfig {
  double time_window_ns = 100.0;
};

/// Groups hits transitively by 8-connectivity in pixel space within the
/// time window, then emits ToT-weighted centroids sorted by
/// (toa, x, y, energy). Hits must be time-ordered. The parallel path
/// splits the stream at gaps longer than the window, which cannot break
/// a cluster, so its output is identical to the serial one.
std::vector<ClusterEvent> cluster_hits(std::span<const RawHit> hits,
                                       const DetectorLayout& layout,
                                       const ToTCalibration& calib,
                                       const ClusteringConfig& cfg = {},
                                       bool parallel = true);

enum class BandMode { Calibrated, RawTot };

struct BandFilter {
  double e_min_kev = 4.0;
  double e_max_kev = 11.0;
  /// RawTot keeps clusters whose seed ToT is below the seed pixel's
  /// cutoff, mirroring a per-pixel hardware selection.
  BandMode mode = BandMode::Calibrated;
};

std::vector<ClusterEvent> select_spdc_singles(
    std::span<const ClusterEvent> clusters, const BandFilter& band,
    const ToTCalibration& calib);

void write_clusters_csv(const std::filesystem::path& path,
                        std::span<const ClusterEvent> clusters,
                        const csv::Meta& meta);
std::vector<ClusterEvent> read_clusters_csv(const std::filesystem::path& path);

}  // namespace spdc
