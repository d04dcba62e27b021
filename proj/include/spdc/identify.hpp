#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "spdc/csv.hpp"
#include "spdc/detector.hpp"
#include "spdc/kinematics.hpp"

namespace spdc {

enum class SpectrumKind { Gaussian, Empirical };

/// ToT spectrum model for the Bayesian classifier. Gaussian mode is a
/// mixture with a common width; empirical mode is a histogram density.
/// resolution_factor (zeta) divides the width about the spectrum mean.
struct SpectrumModel {
  SpectrumKind kind = SpectrumKind::Gaussian;
  /// Mixture components (mean ToT ns, weight); weights sum to 1.
  std::vector<std::pair<double, double>> components;
  double sigma_ns = 94.0;
  double resolution_factor = 1.0;

  // Empirical mode: uniform-bin density over [hist_lo_ns, hist_lo_ns + n*bin).
  double hist_lo_ns = 0.0;
  double hist_bin_ns = 0.0;
  std::vector<double> density;
  double empirical_mean_ns = 0.0;

  double effective_sigma_ns() const { return sigma_ns / resolution_factor; }
  double density_at(double tot_ns) const;
  /// Interval carrying all but a negligible fraction of the mass.
  std::pair<double, double> support() const;
  SpectrumModel with_zeta(double zeta) const;
  void validate() const;
};

/// Single Gaussian at the given ToT mean.
SpectrumModel gaussian_spectrum(double mean_tot_ns, double sigma_ns);
/// Histogram density; counts are normalized to unit integral.
SpectrumModel empirical_spectrum(double lo_ns, double bin_ns,
                                 std::span<const double> counts);
/// Mixture over the energy band [b_min, b_max]*E_pump weighted by b(1-b),
/// mapped to ToT with the calibration's global response.
SpectrumModel spdc_band_spectrum(const ExperimentGeometry& geom,
                                 const ToTCalibration& calib, double sigma_ns,
                                 int n_components = 141);

// Band-integrated effective width at the default calibration (2.35 keV at
// 40 ns/keV) and the calibrated band centers for 7.5 and 15 keV.
constexpr double kDefaultSpectrumSigmaNs = 94.0;
SpectrumModel default_spdc_spectrum();
SpectrumModel default_pump_spectrum();

/// h(t) / (h(t) + beta*g(t)); 0 where the denominator vanishes.
double posterior(double tot_ns, const SpectrumModel& h, const SpectrumModel& g,
                 double beta);

/// Integral of h(t)*posterior(t) over the joint support, adaptive
/// trapezoid. zeta divides both spectra's widths first. Throws
/// IntegrationError if the grid cannot capture h's mass.
double aggregate_probability(const SpectrumModel& h, const SpectrumModel& g,
                             double beta, double zeta = 1.0);

struct SurfaceResult {
  std::vector<double> beta;   // columns
  std::vector<double> zeta;   // rows
  std::vector<double> p;      // row-major, zeta index major
  /// Aggregate probability at the (beta=1e5, zeta=1) reference point.
  double reference_p = 0.0;
  /// Row-wise 0.95 iso-contour: (zeta, beta at crossing).
  std::vector<std::pair<double, double>> contour95;

  double at(std::size_t iz, std::size_t ib) const;
};

SurfaceResult probability_surface(const SpectrumModel& h,
                                  const SpectrumModel& g,
                                  std::span<const double> beta_grid,
                                  std::span<const double> zeta_grid,
                                  bool parallel = true);

std::vector<double> linspace(double lo, double hi, int n);
std::vector<double> logspace(double lo, double hi, int n);

struct SsnConfig {
  double mean_flux = 100.0;       // photons per frame
  double transmission = 0.5;      // ground truth t
  long long n_frames = 100000;
  double heralding_efficiency = 1.0;

  void validate() const;
};

struct SsnReport {
  double var_classical = 0.0;
  double var_heralded = 0.0;
  double ratio = 0.0;
  double stderr_ratio = 0.0;
  long long frames_heralded = 0;  // frames with a nonzero denominator
};

/// Transmission-variance comparison: classical Poisson estimate against
/// the heralded estimate. At full heralding efficiency the variance
/// ratio approaches 1 - t; at efficiency 0 it approaches 1.
SsnReport ssn_experiment(const SsnConfig& cfg, std::uint64_t seed);

void write_surface_csv(const std::filesystem::path& path,
                       const SurfaceResult& surface, const csv::Meta& meta);
void write_contour_csv(const std::filesystem::path& path,
                       const SurfaceResult& surface, const csv::Meta& meta);
void write_ssn_json(const std::filesystem::path& path, const SsnReport& report,
                    const csv::Meta& meta);

}  // namespace spdc
