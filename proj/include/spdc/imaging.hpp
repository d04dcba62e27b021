#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "spdc/coincidence.hpp"
#include "spdc/detector.hpp"
#include "spdc/kinematics.hpp"

namespace spdc {

/// Count image over the physical detector raster (514x514 at rebin 1).
struct CorrelationImage {
  Arm arm = Arm::Signal;
  int rebin = 1;
  int nx = DetectorLayout::kPhysicalBins;
  int ny = DetectorLayout::kPhysicalBins;
  double exposure_hours = 0.0;
  std::vector<std::uint64_t> counts;  // row-major, [y * nx + x]
  std::uint64_t total = 0;

  std::uint64_t at(int bx, int by) const;
  void add(double x_mm, double y_mm);
  /// Center of an image bin in detector coordinates.
  std::pair<double, double> bin_center(int bx, int by) const;
};

CorrelationImage make_image(Arm arm, int rebin = 1,
                            double exposure_hours = 0.0);

/// Signal and idler images over passed pairs; totals are equal.
std::pair<CorrelationImage, CorrelationImage> accumulate(
    std::span<const CandidatePair> pairs, int rebin = 1,
    double exposure_hours = 0.0, bool parallel = true);

/// Singles map over all clusters (the classical reference image).
CorrelationImage accumulate_clusters(std::span<const ClusterEvent> clusters,
                                     int rebin = 1,
                                     double exposure_hours = 0.0);

/// Idler position rescaled by the per-pair detuning estimate: the radius
/// becomes L*tan((detuning_nominal/detuning_calc)*alpha_i) with the
/// azimuth kept. Throws DegenerateGeometry if detuning_calc <= 0.
std::pair<double, double> corrected_idler_position(
    const CandidatePair& pair, const ExperimentGeometry& geom);

std::vector<std::pair<double, double>> corrected_idler_positions(
    std::span<const CandidatePair> pairs, const ExperimentGeometry& geom);

CorrelationImage accumulate_corrected_idler(
    std::span<const CandidatePair> pairs, const ExperimentGeometry& geom,
    int rebin = 1, double exposure_hours = 0.0);

/// Ring radius carrying photon energy E (inverse of the radial energy
/// map). Throws DomainError unless 0 < E < pump energy.
double contour_radius(double energy_kev, const ExperimentGeometry& geom);

std::vector<double> energy_contours(const ExperimentGeometry& geom,
                                    std::span<const double> energies_kev);

struct MappedPoint {
  double xs_mm = 0.0;
  double ys_mm = 0.0;
  double xi_mm = 0.0;
  double yi_mm = 0.0;
};

/// Maps signal-arm points through the conjugate transform: radius to
/// conjugate_radius, azimuth to azimuth + pi about the ring center.
std::vector<MappedPoint> grid_mapping(
    std::span<const std::pair<double, double>> signal_points,
    const ExperimentGeometry& geom);

/// Square lattice of signal-half points with ring radius in [r_lo, r_hi].
std::vector<std::pair<double, double>> square_grid_points(
    const ExperimentGeometry& geom, double spacing_mm, double r_lo_mm,
    double r_hi_mm);

/// Radial window holding a single edge, optionally restricted to an
/// azimuth wedge, profiled about (cx, cy).
struct EdgeSpec {
  double cx_mm = 0.0;
  double cy_mm = 0.0;
  double r_lo_mm = 0.0;
  double r_hi_mm = 0.0;
  double bin_mm = 0.05;
  double phi_lo_rad = -kPi;
  double phi_hi_rad = kPi;
};

/// Edge-spread sigma from an error-function fit to the radial density
/// profile of the given points. Throws FitError when no edge can be fit.
double radial_edge_sigma(std::span<const std::pair<double, double>> points,
                         const EdgeSpec& spec);

/// Image-based variant; bin counts are area-normalized and structural
/// gap bins are excluded at rebin 1.
double sharpness_metric(const CorrelationImage& image, const EdgeSpec& spec);

struct LineFit {
  double nx = 0.0, ny = 0.0, c = 0.0;  // unit normal form nx*x + ny*y = c
  double rms = 0.0;
};

struct CircleFit {
  double cx = 0.0, cy = 0.0, r = 0.0;
  double rms = 0.0;
};

LineFit fit_line_tls(std::span<const std::pair<double, double>> points);
CircleFit fit_circle_kasa(std::span<const std::pair<double, double>> points);

enum class DisplayTransform { None, Rotate180, Rotate180Mirror };

void write_pgm(const std::filesystem::path& path, const CorrelationImage& img,
               DisplayTransform transform = DisplayTransform::None);
/// Sparse lossless dump: zero bins implied, gap bins flagged in the
/// metadata comment.
void write_image_csv(const std::filesystem::path& path,
                     const CorrelationImage& img, const csv::Meta& meta);
void write_contours_csv(const std::filesystem::path& path,
                        std::span<const double> energies_kev,
                        std::span<const double> radii_mm,
                        const csv::Meta& meta);
void write_gridmap_csv(const std::filesystem::path& path,
                       std::span<const MappedPoint> points,
                       const csv::Meta& meta);

}  // namespace spdc
