#include "spdc/identify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "spdc/errors.hpp"
#include "spdc/rng.hpp"

namespace spdc {

namespace {

constexpr std::uint64_t kSaltSsnClassical = 5;
constexpr std::uint64_t kSaltSsnHeralded = 6;

constexpr double kInvSqrt2Pi = 0.3989422804014327;

double gauss(double x, double mu, double sigma) {
  const double z = (x - mu) / sigma;
  return kInvSqrt2Pi / sigma * std::exp(-0.5 * z * z);
}

}  // namespace

double SpectrumModel::density_at(double tot_ns) const {
  if (kind == SpectrumKind::Gaussian) {
    const double s = effective_sigma_ns();
    double d = 0.0;
    for (auto [mu, w] : components) d += w * gauss(tot_ns, mu, s);
    return d;
  }
  // Empirical density narrowed about its mean by the resolution factor.
  const double z = resolution_factor;
  const double t = empirical_mean_ns + (tot_ns - empirical_mean_ns) * z;
  const double u = (t - hist_lo_ns) / hist_bin_ns;
  if (u < 0.0 || u >= static_cast<double>(density.size())) return 0.0;
  return z * density[static_cast<std::size_t>(u)];
}

std::pair<double, double> SpectrumModel::support() const {
  if (kind == SpectrumKind::Gaussian) {
    const double s = effective_sigma_ns();
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (auto [mu, w] : components) {
      (void)w;
      lo = std::min(lo, mu - 12.0 * s);
      hi = std::max(hi, mu + 12.0 * s);
    }
    return {lo, hi};
  }
  const double z = resolution_factor;
  const double raw_hi = hist_lo_ns + hist_bin_ns * density.size();
  const double lo = empirical_mean_ns + (hist_lo_ns - empirical_mean_ns) / z;
  const double hi = empirical_mean_ns + (raw_hi - empirical_mean_ns) / z;
  return {lo, hi};
}

SpectrumModel SpectrumModel::with_zeta(double zeta) const {
  if (!(zeta > 0.0)) throw DomainError("resolution factor must be positive");
  SpectrumModel out = *this;
  out.resolution_factor *= zeta;
  return out;
}

void SpectrumModel::validate() const {
  if (!(resolution_factor > 0.0))
    throw ConfigError("spectrum resolution factor must be positive");
  if (kind == SpectrumKind::Gaussian) {
    if (components.empty())
      throw ConfigError("gaussian spectrum needs at least one component");
    if (!(sigma_ns > 0.0))
      throw ConfigError("gaussian spectrum width must be positive");
    double wsum = 0.0;
    for (auto [mu, w] : components) {
      (void)mu;
      if (!(w >= 0.0)) throw ConfigError("spectrum weight must be >= 0");
      wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-6)
      throw ConfigError("spectrum weights must sum to 1");
    return;
  }
  if (density.empty() || !(hist_bin_ns > 0.0))
    throw ConfigError("empirical spectrum needs a nonempty histogram");
  double mass = 0.0;
  for (double d : density) {
    if (!(d >= 0.0)) throw ConfigError("spectrum density must be >= 0");
    mass += d * hist_bin_ns;
  }
  if (std::abs(mass - 1.0) > 1e-6)
    throw ConfigError("empirical spectrum must integrate to 1");
}

SpectrumModel gaussian_spectrum(double mean_tot_ns, double sigma_ns) {
  SpectrumModel m;
  m.kind = SpectrumKind::Gaussian;
  m.components = {{mean_tot_ns, 1.0}};
  m.sigma_ns = sigma_ns;
  m.validate();
  return m;
}

SpectrumModel empirical_spectrum(double lo_ns, double bin_ns,
                                 std::span<const double> counts) {
  if (counts.empty() || !(bin_ns > 0.0))
    throw ConfigError("empirical spectrum needs a nonempty histogram");
  double total = 0.0;
  for (double c : counts) {
    if (!(c >= 0.0)) throw ConfigError("spectrum counts must be >= 0");
    total += c;
  }
  if (!(total > 0.0)) throw ConfigError("empirical spectrum is empty");
  SpectrumModel m;
  m.kind = SpectrumKind::Empirical;
  m.hist_lo_ns = lo_ns;
  m.hist_bin_ns = bin_ns;
  m.density.resize(counts.size());
  double mean = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    m.density[i] = counts[i] / (total * bin_ns);
    mean += (lo_ns + (i + 0.5) * bin_ns) * counts[i] / total;
  }
  m.empirical_mean_ns = mean;
  m.validate();
  return m;
}

SpectrumModel spdc_band_spectrum(const ExperimentGeometry& geom,
                                 const ToTCalibration& calib, double sigma_ns,
                                 int n_components) {
  if (n_components < 1)
    throw ConfigError("band spectrum needs at least one component");
  SpectrumModel m;
  m.kind = SpectrumKind::Gaussian;
  m.sigma_ns = sigma_ns;
  double wsum = 0.0;
  for (int i = 0; i < n_components; ++i) {
    const double frac = n_components == 1
                            ? 0.5
                            : static_cast<double>(i) / (n_components - 1);
    const double b = geom.b_min + (geom.b_max - geom.b_min) * frac;
    const double tot =
        calib.energy_to_tot_mean(b * geom.pump_energy_kev, 0, 0);
    m.components.emplace_back(tot, pair_probability(b));
    wsum += pair_probability(b);
  }
  for (auto& [mu, w] : m.components) {
    (void)mu;
    w /= wsum;
  }
  m.validate();
  return m;
}

SpectrumModel default_spdc_spectrum() {
  ToTCalibration calib;
  // Degenerate band center, 7.5 keV at the default calibration.
  const double mean = calib.energy_to_tot_mean(7.5, 0, 0);
  return gaussian_spectrum(mean, kDefaultSpectrumSigmaNs);
}

SpectrumModel default_pump_spectrum() {
  ToTCalibration calib;
  const double mean = calib.energy_to_tot_mean(15.0, 0, 0);
  return gaussian_spectrum(mean, kDefaultSpectrumSigmaNs);
}

double posterior(double tot_ns, const SpectrumModel& h, const SpectrumModel& g,
                 double beta) {
  if (!(beta >= 0.0)) throw DomainError("beta must be >= 0");
  const double hv = h.density_at(tot_ns);
  const double denom = hv + beta * g.density_at(tot_ns);
  if (denom <= 0.0) return 0.0;  // no evidence at this ToT
  return hv / denom;
}

double aggregate_probability(const SpectrumModel& h0, const SpectrumModel& g0,
                             double beta, double zeta) {
  if (!(beta >= 0.0)) throw DomainError("beta must be >= 0");
  h0.validate();
  g0.validate();
  if (!(zeta > 0.0)) throw DomainError("zeta must be positive");
  // Without background the posterior is identically 1 on h's support.
  if (beta == 0.0) return 1.0;
  const SpectrumModel h = h0.with_zeta(zeta);
  const SpectrumModel g = g0.with_zeta(zeta);
  auto [hlo, hhi] = h.support();
  auto [glo, ghi] = g.support();
  const double lo = std::min(hlo, glo);
  const double hi = std::max(hhi, ghi);
  if (!(hi > lo)) throw IntegrationError("degenerate integration interval");

  double prev = std::numeric_limits<double>::quiet_NaN();
  for (int n = 1024; n <= (1 << 21); n *= 2) {
    const double dt = (hi - lo) / n;
    double integral = 0.0, mass = 0.0;
    for (int i = 0; i <= n; ++i) {
      const double t = lo + dt * i;
      const double hv = h.density_at(t);
      const double w = (i == 0 || i == n) ? 0.5 : 1.0;
      mass += w * hv;
      if (hv > 0.0) {
        const double denom = hv + beta * g.density_at(t);
        integral += w * hv * (hv / denom);
      }
    }
    integral *= dt;
    mass *= dt;
    if (mass >= 1.0 - 1e-6 && std::isfinite(prev) &&
        std::abs(integral - prev) < 5e-8)
      return std::clamp(integral, 0.0, 1.0);
    prev = integral;
  }
  throw IntegrationError("aggregate probability grid did not converge");
}

double SurfaceResult::at(std::size_t iz, std::size_t ib) const {
  if (iz >= zeta.size() || ib >= beta.size())
    throw IndexError("surface index out of range");
  return p[iz * beta.size() + ib];
}

SurfaceResult probability_surface(const SpectrumModel& h,
                                  const SpectrumModel& g,
                                  std::span<const double> beta_grid,
                                  std::span<const double> zeta_grid,
                                  bool parallel) {
  if (beta_grid.empty() || zeta_grid.empty())
    throw ConfigError("surface grids must be nonempty");
  SurfaceResult out;
  out.beta.assign(beta_grid.begin(), beta_grid.end());
  out.zeta.assign(zeta_grid.begin(), zeta_grid.end());
  const std::ptrdiff_t nb = static_cast<std::ptrdiff_t>(out.beta.size());
  const std::ptrdiff_t nz = static_cast<std::ptrdiff_t>(out.zeta.size());
  out.p.assign(static_cast<std::size_t>(nb * nz), 0.0);
  h.validate();
  g.validate();
  for (double b : out.beta)
    if (!(b >= 0.0)) throw DomainError("beta grid must be >= 0");
  for (double z : out.zeta)
    if (!(z > 0.0)) throw DomainError("zeta grid must be positive");
  // Exceptions cannot cross the parallel region; capture and rethrow.
  std::exception_ptr error;
#pragma omp parallel for collapse(2) schedule(dynamic) if (parallel)
  for (std::ptrdiff_t iz = 0; iz < nz; ++iz)
    for (std::ptrdiff_t ib = 0; ib < nb; ++ib) {
      try {
        out.p[static_cast<std::size_t>(iz * nb + ib)] =
            aggregate_probability(h, g, out.beta[ib], out.zeta[iz]);
      } catch (...) {
#pragma omp critical
        if (!error) error = std::current_exception();
      }
    }
  if (error) std::rethrow_exception(error);
  out.reference_p = aggregate_probability(h, g, 1e5, 1.0);

  // Row-wise 0.95 crossing; probability is nonincreasing along beta.
  for (std::ptrdiff_t iz = 0; iz < nz; ++iz) {
    for (std::ptrdiff_t ib = 1; ib < nb; ++ib) {
      const double p0 = out.p[static_cast<std::size_t>(iz * nb + ib - 1)];
      const double p1 = out.p[static_cast<std::size_t>(iz * nb + ib)];
      if (p0 >= 0.95 && p1 < 0.95) {
        const double f = (p0 - 0.95) / (p0 - p1);
        const double b0 = out.beta[ib - 1], b1 = out.beta[ib];
        double bc;
        if (b0 > 0.0 && b1 > 0.0) {
          bc = std::exp(std::log(b0) + f * (std::log(b1) - std::log(b0)));
        } else {
          bc = b0 + f * (b1 - b0);
        }
        out.contour95.emplace_back(out.zeta[iz], bc);
        break;
      }
    }
  }
  return out;
}

std::vector<double> linspace(double lo, double hi, int n) {
  if (n < 1) throw ConfigError("linspace needs n >= 1");
  std::vector<double> v(n);
  for (int i = 0; i < n; ++i)
    v[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
  return v;
}

std::vector<double> logspace(double lo, double hi, int n) {
  if (!(lo > 0.0) || !(hi > 0.0))
    throw ConfigError("logspace endpoints must be positive");
  if (n < 1) throw ConfigError("logspace needs n >= 1");
  std::vector<double> v(n);
  const double llo = std::log(lo), lhi = std::log(hi);
  for (int i = 0; i < n; ++i)
    v[i] = std::exp(n == 1 ? llo : llo + (lhi - llo) * i / (n - 1));
  return v;
}

void SsnConfig::validate() const {
  if (!(mean_flux > 0.0)) throw ConfigError("ssn mean flux must be positive");
  if (transmission < 0.0 || transmission > 1.0)
    throw ConfigError("ssn transmission must lie in [0, 1]");
  if (n_frames < 1) throw ConfigError("ssn needs at least one frame");
  if (heralding_efficiency < 0.0 || heralding_efficiency > 1.0)
    throw ConfigError("ssn heralding efficiency must lie in [0, 1]");
}

SsnReport ssn_experiment(const SsnConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const double lambda = cfg.mean_flux;
  const double t = cfg.transmission;
  const double eta = cfg.heralding_efficiency;
  RngStream classical(seed, 0, kSaltSsnClassical);
  RngStream heralded(seed, 0, kSaltSsnHeralded);

  // Streaming mean/variance (Welford).
  struct Acc {
    long long n = 0;
    double mean = 0.0, m2 = 0.0;
    void push(double x) {
      ++n;
      const double d = x - mean;
      mean += d / n;
      m2 += d * (x - mean);
    }
    double variance() const { return n > 1 ? m2 / (n - 1) : 0.0; }
  } acc_c, acc_h;

  for (long long i = 0; i < cfg.n_frames; ++i) {
    const auto n_meas = classical.poisson(t * lambda);
    acc_c.push(static_cast<double>(n_meas) / lambda);
  }
  for (long long i = 0; i < cfg.n_frames; ++i) {
    const auto n_inc = heralded.poisson(lambda);
    const auto n_her = heralded.binomial(n_inc, eta);
    const auto m_her = heralded.binomial(n_her, t);
    const auto m_unh = heralded.binomial(n_inc - n_her, t);
    // Heralded photons contribute binomial statistics; the unheralded
    // remainder is estimated classically against its expected flux. The
    // combined variance ratio approaches 1 - eta*t.
    const double denom = static_cast<double>(n_her) + (1.0 - eta) * lambda;
    if (denom <= 0.0) continue;  // no herald and no classical flux share
    acc_h.push(static_cast<double>(m_her + m_unh) / denom);
  }

  SsnReport rep;
  rep.var_classical = acc_c.variance();
  rep.var_heralded = acc_h.variance();
  rep.frames_heralded = acc_h.n;
  rep.ratio = rep.var_classical > 0.0 ? rep.var_heralded / rep.var_classical
                                      : 0.0;
  // Gaussian approximation: each sample variance has relative standard
  // error sqrt(2/(n-1)); the two streams are independent.
  if (acc_c.n > 1 && acc_h.n > 1 && rep.ratio > 0.0) {
    rep.stderr_ratio =
        rep.ratio * std::sqrt(2.0 / (acc_c.n - 1) + 2.0 / (acc_h.n - 1));
  }
  return rep;
}

void write_surface_csv(const std::filesystem::path& path,
                       const SurfaceResult& surface, const csv::Meta& meta) {
  std::string header = "zeta\\beta";
  char cell[48];
  for (double b : surface.beta) {
    std::snprintf(cell, sizeof(cell), ",%.6e", b);
    header += cell;
  }
  csv::Writer w(path, meta, header);
  std::snprintf(cell, sizeof(cell), "# reference beta=1e+05 zeta=1 p=%.9f",
                surface.reference_p);
  w.raw_line(cell);
  for (std::size_t iz = 0; iz < surface.zeta.size(); ++iz) {
    std::string line;
    std::snprintf(cell, sizeof(cell), "%.6f", surface.zeta[iz]);
    line += cell;
    for (std::size_t ib = 0; ib < surface.beta.size(); ++ib) {
      std::snprintf(cell, sizeof(cell), ",%.9f", surface.at(iz, ib));
      line += cell;
    }
    w.raw_line(line);
  }
}

void write_contour_csv(const std::filesystem::path& path,
                       const SurfaceResult& surface, const csv::Meta& meta) {
  csv::Writer w(path, meta, "zeta,beta95");
  for (auto [z, b] : surface.contour95) w.row("%.6f,%.6e", z, b);
}

void write_ssn_json(const std::filesystem::path& path, const SsnReport& report,
                    const csv::Meta& meta) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  std::fprintf(f,
               "{\n"
               "  \"seed\": %llu,\n"
               "  \"config\": \"%016llx\",\n"
               "  \"var_classical\": %.9e,\n"
               "  \"var_heralded\": %.9e,\n"
               "  \"ratio\": %.9f,\n"
               "  \"stderr\": %.9f,\n"
               "  \"frames_heralded\": %lld\n"
               "}\n",
               static_cast<unsigned long long>(meta.seed),
               static_cast<unsigned long long>(meta.config_digest),
               report.var_classical, report.var_heralded, report.ratio,
               report.stderr_ratio, report.frames_heralded);
  std::fclose(f);
}

}  // namespace spdc
