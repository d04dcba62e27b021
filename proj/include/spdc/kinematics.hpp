#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "spdc/csv.hpp"

namespace spdc {

constexpr double kPi = 3.14159265358979323846;

constexpr double deg_to_rad(double deg) { return deg * kPi / 180.0; }
constexpr double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

struct BeamStop {
  double x_mm = 0.0;
  double y_mm = 0.0;
  double radius_mm = 0.0;

  bool contains(double x, double y) const {
    double dx = x - x_mm, dy = y - y_mm;
    return dx * dx + dy * dy < radius_mm * radius_mm;
  }
};

/// Beam/crystal/detector geometry. Angles are stored in radians; degree
/// values are converted at the configuration boundary only.
struct ExperimentGeometry {
  double pump_energy_kev = 15.0;
  double bragg_angle_rad = deg_to_rad(11.576);
  double detuning_rad = deg_to_rad(0.021);
  double detuning_sigma_rad = deg_to_rad(0.0014);
  double crystal_to_detector_mm = 683.0;
  double ring_center_col = 260.0;  // logical pixel coordinates
  double ring_center_row = 256.0;
  BeamStop beamstop;
  // Energy-fraction validity window. Outside it the exact-angle arccos
  // argument can leave [-1,1] and the approximate form degrades.
  double b_min = 0.05;
  double b_max = 0.95;

  double sin_two_theta() const;
  /// Phase-matching constant c = 1 - detuning * sin(2*theta).
  double phase_matching_c() const;
  /// 2 * detuning * sin(2*theta); the combination every radial formula uses.
  double ring_coefficient() const;

  /// Throws ConfigError when any invariant fails.
  void validate() const;
};

enum class AngleMode { Exact, Approximate };

/// One point on the emission ring: fraction, emission angle, detector
/// radius and photon energy, mutually consistent.
struct KinematicPoint {
  double b;
  double alpha_rad;
  double r_mm;
  double energy_kev;
};

/// Emission angle between an SPDC photon of energy fraction b and the
/// diffracted pump, for an arbitrary detuning. Exact mode solves the
/// momentum-conservation triangle; approximate mode uses the small-angle
/// closed form sqrt(2*dtheta*sin2theta*(1-b)/b).
double emission_angle(double b, double detuning_rad, double sin_two_theta,
                      AngleMode mode);

/// Same, with the window check b in [geom.b_min, geom.b_max].
double emission_angle(double b, const ExperimentGeometry& geom, AngleMode mode);

double radius_from_b(double b, const ExperimentGeometry& geom, AngleMode mode);

/// Photon energy from its radial distance to the ring center; total on
/// r >= 0 and monotonically decreasing.
double energy_from_radius(double r_mm, const ExperimentGeometry& geom);

/// Radial position of the idler counterpart of a photon detected at
/// radius r. Exact involution: conjugate(conjugate(r)) == r.
double conjugate_radius(double r_mm, const ExperimentGeometry& geom);

/// Per-pair detuning from the two measured emission angles,
/// alpha_s*alpha_i / (2 sin 2theta).
double detuning_from_angles(double alpha_s_rad, double alpha_i_rad,
                            double bragg_angle_rad);

/// Unnormalized pair-generation weight b*(1-b).
double pair_probability(double b);

KinematicPoint kinematic_point(double b, const ExperimentGeometry& geom,
                               AngleMode mode = AngleMode::Exact);

struct RingProfileRow {
  double b;
  double energy_kev;
  double alpha_rad;
  double r_mm;
  double weight;
};

std::vector<RingProfileRow> ring_profile(const ExperimentGeometry& geom,
                                         std::span<const double> b_grid,
                                         AngleMode mode = AngleMode::Exact);

void write_ring_profile_csv(const std::filesystem::path& path,
                            std::span<const RingProfileRow> rows,
                            const csv::Meta& meta);

}  // namespace spdc
