#include "spdc/kinematics.hpp"

#include <cmath>

#include "spdc/errors.hpp"

namespace spdc {

double ExperimentGeometry::sin_two_theta() const {
  return std::sin(2.0 * bragg_angle_rad);
}

double ExperimentGeometry::phase_matching_c() const {
  return 1.0 - detuning_rad * sin_two_theta();
}

double ExperimentGeometry::ring_coefficient() const {
  return 2.0 * detuning_rad * sin_two_theta();
}

void ExperimentGeometry::validate() const {
  if (!(pump_energy_kev > 0)) throw ConfigError("pump energy must be positive");
  if (!(bragg_angle_rad > 0) || !(bragg_angle_rad < kPi / 2))
    throw ConfigError("Bragg angle must lie in (0, pi/2)");
  if (!(detuning_rad > 0)) throw ConfigError("detuning must be positive");
  if (!(detuning_sigma_rad >= 0))
    throw ConfigError("detuning spread must be non-negative");
  if (!(crystal_to_detector_mm > 0))
    throw ConfigError("crystal-detector distance must be positive");
  if (!(beamstop.radius_mm >= 0))
    throw ConfigError("beamstop radius must be non-negative");
  if (!(b_min > 0) || !(b_max < 1) || !(b_min < b_max))
    throw ConfigError("b window must satisfy 0 < b_min < b_max < 1");
  double c = phase_matching_c();
  if (!(c > 0) || !(c < 1))
    throw ConfigError("phase-matching constant outside (0, 1)");
}

double emission_angle(double b, double detuning_rad, double sin_two_theta,
                      AngleMode mode) {
  if (!(b > 0) || !(b < 1))
    throw DomainError("energy fraction outside (0, 1)");
  if (mode == AngleMode::Approximate)
    return std::sqrt(2.0 * detuning_rad * sin_two_theta * (1.0 - b) / b);
  double c = 1.0 - detuning_rad * sin_two_theta;
  double arg = (c * c + 2.0 * b - 1.0) / (2.0 * c * b);
  // Rounding can push the argument marginally past 1 near the ring center.
  if (arg > 1.0 && arg < 1.0 + 1e-12) arg = 1.0;
  if (arg < -1.0 || arg > 1.0)
    throw DomainError("no phase-matched emission angle for this fraction");
  return std::acos(arg);
}

double emission_angle(double b, const ExperimentGeometry& geom,
                      AngleMode mode) {
  if (!(b >= geom.b_min) || !(b <= geom.b_max))
    throw DomainError("energy fraction outside validity window");
  return emission_angle(b, geom.detuning_rad, geom.sin_two_theta(), mode);
}

double radius_from_b(double b, const ExperimentGeometry& geom, AngleMode mode) {
  return geom.crystal_to_detector_mm * std::tan(emission_angle(b, geom, mode));
}

double energy_from_radius(double r_mm, const ExperimentGeometry& geom) {
  if (!(r_mm >= 0)) throw DomainError("radius must be non-negative");
  double alpha = std::atan(r_mm / geom.crystal_to_detector_mm);
  return geom.pump_energy_kev /
         (alpha * alpha / geom.ring_coefficient() + 1.0);
}

double conjugate_radius(double r_mm, const ExperimentGeometry& geom) {
  if (!(r_mm > 0)) throw DomainError("radius must be positive");
  double alpha = std::atan(r_mm / geom.crystal_to_detector_mm);
  double conj = geom.ring_coefficient() / alpha;
  // Radii this close to the pump axis conjugate to backward angles that
  // never reach the detector plane.
  if (conj >= kPi / 2)
    throw DomainError("conjugate angle beyond the detector half-space");
  return geom.crystal_to_detector_mm * std::tan(conj);
}

double detuning_from_angles(double alpha_s_rad, double alpha_i_rad,
                            double bragg_angle_rad) {
  if (!(alpha_s_rad > 0) || !(alpha_i_rad > 0))
    throw DomainError("emission angles must be positive");
  return alpha_s_rad * alpha_i_rad / (2.0 * std::sin(2.0 * bragg_angle_rad));
}

double pair_probability(double b) {
  if (!(b > 0) || !(b < 1))
    throw DomainError("energy fraction outside (0, 1)");
  return b * (1.0 - b);
}

KinematicPoint kinematic_point(double b, const ExperimentGeometry& geom,
                               AngleMode mode) {
  KinematicPoint p;
  p.b = b;
  p.alpha_rad = emission_angle(b, geom, mode);
  p.r_mm = geom.crystal_to_detector_mm * std::tan(p.alpha_rad);
  p.energy_kev = b * geom.pump_energy_kev;
  return p;
}

std::vector<RingProfileRow> ring_profile(const ExperimentGeometry& geom,
                                         std::span<const double> b_grid,
                                         AngleMode mode) {
  std::vector<RingProfileRow> rows;
  rows.reserve(b_grid.size());
  for (double b : b_grid) {
    KinematicPoint p = kinematic_point(b, geom, mode);
    rows.push_back({p.b, p.energy_kev, p.alpha_rad, p.r_mm,
                    pair_probability(b)});
  }
  return rows;
}

void write_ring_profile_csv(const std::filesystem::path& path,
                            std::span<const RingProfileRow> rows,
                            const csv::Meta& meta) {
  csv::Writer out(path, meta, "b,energy_keV,alpha_rad,r_mm,weight");
  for (const auto& r : rows)
    out.row("%.9f,%.6f,%.9f,%.6f,%.9f", r.b, r.energy_kev, r.alpha_rad, r.r_mm,
            r.weight);
}

}  // namespace spdc
