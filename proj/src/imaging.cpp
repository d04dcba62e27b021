#include "spdc/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "spdc/errors.hpp"
#include "spdc/simulator.hpp"

namespace spdc {

namespace {

constexpr double kAxisExtentMm =
    DetectorLayout::kPhysicalBins * DetectorLayout::kPitchMm;
// Below this many pairs, per-thread partial images cost more than they save.
constexpr std::ptrdiff_t kParallelThreshold = 4096;

int image_bins(int rebin) {
  return (DetectorLayout::kPhysicalBins + rebin - 1) / rebin;
}

void merge_into(CorrelationImage& dst, const CorrelationImage& src) {
  for (std::size_t k = 0; k < dst.counts.size(); ++k)
    dst.counts[k] += src.counts[k];
  dst.total += src.total;
}

std::pair<double, double> ring_center(const ExperimentGeometry& geom) {
  return pixel_position(geom.ring_center_col, geom.ring_center_row);
}

bool in_wedge(double phi, double lo, double hi) {
  if (hi - lo >= 2.0 * kPi) return true;  // full circle
  auto wrap = [](double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a < 0.0) a += 2.0 * kPi;
    return a - kPi;
  };
  phi = wrap(phi);
  lo = wrap(lo);
  hi = wrap(hi);
  if (lo <= hi) return phi >= lo && phi <= hi;
  return phi >= lo || phi <= hi;  // interval crosses the branch cut
}

struct ErfFit {
  double x0 = 0.0;
  double sigma = 0.0;
  double a = 0.0;
  double b = 0.0;
  double sse = 0.0;
};

/// Least-squares a + b*erf((x-x0)/(sigma*sqrt(2))) with (a, b) solved in
/// closed form at each (x0, sigma) grid node, then one refinement pass.
ErfFit fit_erf_profile(const std::vector<double>& xs,
                       const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  if (n < 8) throw FitError("edge profile has fewer than 8 usable bins");
  double ymin = ys[0], ymax = ys[0];
  for (double y : ys) {
    ymin = std::min(ymin, y);
    ymax = std::max(ymax, y);
  }
  if (!(ymax > ymin))
    throw FitError("edge profile is flat; no edge to fit");

  const double span = xs.back() - xs.front();
  const double bin = span / static_cast<double>(n - 1);
  ErfFit best;
  best.sse = std::numeric_limits<double>::infinity();

  auto evaluate = [&](double x0, double sigma) {
    double se = 0.0, see = 0.0, sy = 0.0, sye = 0.0;
    const double inv = 1.0 / (sigma * std::sqrt(2.0));
    std::vector<double> e(n);
    for (std::size_t i = 0; i < n; ++i) {
      e[i] = std::erf((xs[i] - x0) * inv);
      se += e[i];
      see += e[i] * e[i];
      sy += ys[i];
      sye += ys[i] * e[i];
    }
    const double nn = static_cast<double>(n);
    const double denom = nn * see - se * se;
    if (std::abs(denom) < 1e-12) return;
    const double b = (nn * sye - se * sy) / denom;
    const double a = (sy - b * se) / nn;
    double sse = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double r = ys[i] - a - b * e[i];
      sse += r * r;
    }
    if (sse < best.sse) best = {x0, sigma, a, b, sse};
  };

  const double sig_lo = bin / 4.0;
  const double sig_hi = span / 2.0;
  for (std::size_t i = 0; i < n; ++i)
    for (int j = 0; j <= 48; ++j)
      evaluate(xs[i], sig_lo * std::pow(sig_hi / sig_lo, j / 48.0));
  if (!std::isfinite(best.sse))
    throw FitError("erf fit failed on the coarse grid");

  const double cx0 = best.x0, csig = best.sigma;
  for (int i = -16; i <= 16; ++i)
    for (int j = -16; j <= 16; ++j)
      evaluate(cx0 + bin * i / 16.0, csig * std::pow(1.6, j / 16.0));

  if (std::abs(best.b) < 1e-12 * (std::abs(ymax) + 1.0))
    throw FitError("erf fit found no step amplitude");
  return best;
}

double fit_profile_sigma(std::vector<double>& xs, std::vector<double>& ys) {
  return fit_erf_profile(xs, ys).sigma;
}

}  // namespace

std::uint64_t CorrelationImage::at(int bx, int by) const {
  if (bx < 0 || bx >= nx || by < 0 || by >= ny)
    throw IndexError("image bin out of range");
  return counts[static_cast<std::size_t>(by) * nx + bx];
}

void CorrelationImage::add(double x_mm, double y_mm) {
  const int px = DetectorLayout::physical_bin(x_mm);
  const int py = DetectorLayout::physical_bin(y_mm);
  const int bx = std::min(px / rebin, nx - 1);
  const int by = std::min(py / rebin, ny - 1);
  ++counts[static_cast<std::size_t>(by) * nx + bx];
  ++total;
}

std::pair<double, double> CorrelationImage::bin_center(int bx, int by) const {
  auto axis = [this](int b) {
    const double lo = b * rebin * DetectorLayout::kPitchMm;
    const double hi =
        std::min((b + 1) * rebin, DetectorLayout::kPhysicalBins) *
        DetectorLayout::kPitchMm;
    return 0.5 * (lo + hi);
  };
  return {axis(bx), axis(by)};
}

CorrelationImage make_image(Arm arm, int rebin, double exposure_hours) {
  if (rebin < 1 || rebin > DetectorLayout::kPhysicalBins)
    throw ConfigError("image rebin factor out of range");
  CorrelationImage img;
  img.arm = arm;
  img.rebin = rebin;
  img.nx = image_bins(rebin);
  img.ny = image_bins(rebin);
  img.exposure_hours = exposure_hours;
  img.counts.assign(static_cast<std::size_t>(img.nx) * img.ny, 0);
  return img;
}

std::pair<CorrelationImage, CorrelationImage> accumulate(
    std::span<const CandidatePair> pairs, int rebin, double exposure_hours,
    bool parallel) {
  CorrelationImage sig = make_image(Arm::Signal, rebin, exposure_hours);
  CorrelationImage idl = make_image(Arm::Idler, rebin, exposure_hours);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(pairs.size());
  if (!parallel || n < kParallelThreshold) {
    for (const CandidatePair& p : pairs) {
      if (!p.passed) continue;
      sig.add(p.signal.x_mm, p.signal.y_mm);
      idl.add(p.idler.x_mm, p.idler.y_mm);
    }
    return {std::move(sig), std::move(idl)};
  }
#pragma omp parallel
  {
    CorrelationImage ls = make_image(Arm::Signal, rebin, exposure_hours);
    CorrelationImage li = make_image(Arm::Idler, rebin, exposure_hours);
#pragma omp for schedule(static) nowait
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      if (!pairs[i].passed) continue;
      ls.add(pairs[i].signal.x_mm, pairs[i].signal.y_mm);
      li.add(pairs[i].idler.x_mm, pairs[i].idler.y_mm);
    }
#pragma omp critical
    {
      merge_into(sig, ls);
      merge_into(idl, li);
    }
  }
  return {std::move(sig), std::move(idl)};
}

CorrelationImage accumulate_clusters(std::span<const ClusterEvent> clusters,
                                     int rebin, double exposure_hours) {
  CorrelationImage img = make_image(Arm::Signal, rebin, exposure_hours);
  for (const ClusterEvent& c : clusters) img.add(c.x_mm, c.y_mm);
  return img;
}

std::pair<double, double> corrected_idler_position(
    const CandidatePair& pair, const ExperimentGeometry& geom) {
  if (!(pair.detuning_calc_rad > 0.0))
    throw DegenerateGeometry("per-pair detuning is not positive");
  auto [cx, cy] = ring_center(geom);
  const double dx = pair.idler.x_mm - cx;
  const double dy = pair.idler.y_mm - cy;
  const double r = std::hypot(dx, dy);
  if (!(r > 0.0))
    throw DegenerateGeometry("idler event coincides with the ring center");
  const double alpha = std::atan(r / geom.crystal_to_detector_mm);
  const double scaled = geom.detuning_rad / pair.detuning_calc_rad * alpha;
  if (scaled >= kPi / 2.0)
    throw DomainError("corrected emission angle reaches pi/2");
  const double rc = geom.crystal_to_detector_mm * std::tan(scaled);
  return {cx + rc * dx / r, cy + rc * dy / r};
}

std::vector<std::pair<double, double>> corrected_idler_positions(
    std::span<const CandidatePair> pairs, const ExperimentGeometry& geom) {
  std::vector<std::pair<double, double>> out;
  out.reserve(pairs.size());
  for (const CandidatePair& p : pairs)
    if (p.passed) out.push_back(corrected_idler_position(p, geom));
  return out;
}

CorrelationImage accumulate_corrected_idler(
    std::span<const CandidatePair> pairs, const ExperimentGeometry& geom,
    int rebin, double exposure_hours) {
  CorrelationImage img = make_image(Arm::Idler, rebin, exposure_hours);
  for (const CandidatePair& p : pairs) {
    if (!p.passed) continue;
    auto [x, y] = corrected_idler_position(p, geom);
    img.add(x, y);
  }
  return img;
}

double contour_radius(double energy_kev, const ExperimentGeometry& geom) {
  if (!(energy_kev > 0.0) || !(energy_kev < geom.pump_energy_kev))
    throw DomainError("contour energy must lie strictly inside (0, E_pump)");
  const double alpha = std::sqrt(geom.ring_coefficient() *
                                 (geom.pump_energy_kev - energy_kev) /
                                 energy_kev);
  if (alpha >= kPi / 2.0)
    throw DomainError("contour emission angle reaches pi/2");
  return geom.crystal_to_detector_mm * std::tan(alpha);
}

std::vector<double> energy_contours(const ExperimentGeometry& geom,
                                    std::span<const double> energies_kev) {
  std::vector<double> radii;
  radii.reserve(energies_kev.size());
  for (double e : energies_kev) radii.push_back(contour_radius(e, geom));
  return radii;
}

std::vector<MappedPoint> grid_mapping(
    std::span<const std::pair<double, double>> signal_points,
    const ExperimentGeometry& geom) {
  auto [cx, cy] = ring_center(geom);
  std::vector<MappedPoint> out;
  out.reserve(signal_points.size());
  for (auto [x, y] : signal_points) {
    const double dx = x - cx;
    const double dy = y - cy;
    const double r = std::hypot(dx, dy);
    const double rc = conjugate_radius(r, geom);
    // azimuth + pi: the unit vector flips sign.
    out.push_back({x, y, cx - rc * dx / r, cy - rc * dy / r});
  }
  return out;
}

std::vector<std::pair<double, double>> square_grid_points(
    const ExperimentGeometry& geom, double spacing_mm, double r_lo_mm,
    double r_hi_mm) {
  if (!(spacing_mm > 0.0) || !(r_lo_mm >= 0.0) || !(r_hi_mm > r_lo_mm))
    throw ConfigError("invalid grid spec");
  auto [cx, cy] = ring_center(geom);
  const int n = static_cast<int>(std::ceil(r_hi_mm / spacing_mm));
  std::vector<std::pair<double, double>> pts;
  for (int iy = -n; iy < 0; ++iy) {  // signal half: below the ring center
    for (int ix = -n; ix <= n; ++ix) {
      const double x = cx + ix * spacing_mm;
      const double y = cy + iy * spacing_mm;
      const double r = std::hypot(x - cx, y - cy);
      if (r < r_lo_mm || r > r_hi_mm) continue;
      if (x < 0.0 || x >= kAxisExtentMm || y < 0.0 || y >= kAxisExtentMm)
        continue;
      pts.emplace_back(x, y);
    }
  }
  return pts;
}

double radial_edge_sigma(std::span<const std::pair<double, double>> points,
                         const EdgeSpec& spec) {
  if (!(spec.r_hi_mm > spec.r_lo_mm) || !(spec.bin_mm > 0.0))
    throw ConfigError("invalid edge spec");
  const int m = std::max<int>(
      1, static_cast<int>(std::llround((spec.r_hi_mm - spec.r_lo_mm) /
                                       spec.bin_mm)));
  std::vector<double> counts(m, 0.0);
  for (auto [x, y] : points) {
    const double dx = x - spec.cx_mm;
    const double dy = y - spec.cy_mm;
    const double r = std::hypot(dx, dy);
    if (r < spec.r_lo_mm || r >= spec.r_hi_mm) continue;
    if (!in_wedge(std::atan2(dy, dx), spec.phi_lo_rad, spec.phi_hi_rad))
      continue;
    const int k = std::min(
        m - 1, static_cast<int>((r - spec.r_lo_mm) / spec.bin_mm));
    counts[k] += 1.0;
  }
  std::vector<double> xs(m), ys(m);
  for (int k = 0; k < m; ++k) {
    xs[k] = spec.r_lo_mm + (k + 0.5) * spec.bin_mm;
    ys[k] = counts[k] / xs[k];  // annular area grows linearly with r
  }
  return fit_profile_sigma(xs, ys);
}

double sharpness_metric(const CorrelationImage& image, const EdgeSpec& spec) {
  if (!(spec.r_hi_mm > spec.r_lo_mm) || !(spec.bin_mm > 0.0))
    throw ConfigError("invalid edge spec");
  const int m = std::max<int>(
      1, static_cast<int>(std::llround((spec.r_hi_mm - spec.r_lo_mm) /
                                       spec.bin_mm)));
  std::vector<double> counts(m, 0.0), area(m, 0.0);
  const double cell =
      DetectorLayout::kPitchMm * image.rebin * DetectorLayout::kPitchMm *
      image.rebin;
  for (int by = 0; by < image.ny; ++by) {
    for (int bx = 0; bx < image.nx; ++bx) {
      if (image.rebin == 1 && (DetectorLayout::is_gap_bin(bx) ||
                               DetectorLayout::is_gap_bin(by)))
        continue;  // structural zeros would bias the density
      auto [x, y] = image.bin_center(bx, by);
      const double dx = x - spec.cx_mm;
      const double dy = y - spec.cy_mm;
      const double r = std::hypot(dx, dy);
      if (r < spec.r_lo_mm || r >= spec.r_hi_mm) continue;
      if (!in_wedge(std::atan2(dy, dx), spec.phi_lo_rad, spec.phi_hi_rad))
        continue;
      const int k = std::min(
          m - 1, static_cast<int>((r - spec.r_lo_mm) / spec.bin_mm));
      counts[k] += static_cast<double>(image.at(bx, by));
      area[k] += cell;
    }
  }
  std::vector<double> xs, ys;
  xs.reserve(m);
  ys.reserve(m);
  for (int k = 0; k < m; ++k) {
    if (area[k] <= 0.0) continue;
    xs.push_back(spec.r_lo_mm + (k + 0.5) * spec.bin_mm);
    ys.push_back(counts[k] / area[k]);
  }
  return fit_profile_sigma(xs, ys);
}

LineFit fit_line_tls(std::span<const std::pair<double, double>> points) {
  const std::size_t n = points.size();
  if (n < 3) throw FitError("line fit needs at least 3 points");
  double mx = 0.0, my = 0.0;
  for (auto [x, y] : points) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (auto [x, y] : points) {
    const double dx = x - mx, dy = y - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  const double half = 0.5 * (sxx + syy);
  const double disc = std::sqrt(0.25 * (sxx - syy) * (sxx - syy) + sxy * sxy);
  const double lmin = half - disc;
  if (!(half > 0.0)) throw FitError("line fit points are coincident");
  // Eigenvector of the 2x2 scatter matrix for the smaller eigenvalue.
  double vx = sxy, vy = lmin - sxx;
  double ax = lmin - syy, ay = sxy;
  if (ax * ax + ay * ay > vx * vx + vy * vy) {
    vx = ax;
    vy = ay;
  }
  const double norm = std::hypot(vx, vy);
  LineFit fit;
  if (norm < 1e-300) {  // isotropic scatter: any normal is as good
    fit.nx = 1.0;
    fit.ny = 0.0;
  } else {
    fit.nx = vx / norm;
    fit.ny = vy / norm;
  }
  fit.c = fit.nx * mx + fit.ny * my;
  fit.rms = std::sqrt(std::max(0.0, lmin) / static_cast<double>(n));
  return fit;
}

CircleFit fit_circle_kasa(std::span<const std::pair<double, double>> points) {
  const std::size_t n = points.size();
  if (n < 3) throw FitError("circle fit needs at least 3 points");
  double mx = 0.0, my = 0.0;
  for (auto [x, y] : points) {
    mx += x;
    my += y;
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  // Kasa algebraic fit in the centroid frame: z = x^2 + y^2 regressed on
  // (x, y, 1).
  double sxx = 0.0, sxy = 0.0, syy = 0.0, sx = 0.0, sy = 0.0;
  double sxz = 0.0, syz = 0.0, sz = 0.0;
  for (auto [px, py] : points) {
    const double x = px - mx, y = py - my;
    const double z = x * x + y * y;
    sxx += x * x;
    sxy += x * y;
    syy += y * y;
    sx += x;
    sy += y;
    sxz += x * z;
    syz += y * z;
    sz += z;
  }
  const double nn = static_cast<double>(n);
  // Solve [sxx sxy sx; sxy syy sy; sx sy nn] * [a b c]^T = [sxz syz sz]^T.
  const double det = sxx * (syy * nn - sy * sy) - sxy * (sxy * nn - sy * sx) +
                     sx * (sxy * sy - syy * sx);
  if (std::abs(det) < 1e-12) throw FitError("circle fit is degenerate");
  const double da = sxz * (syy * nn - sy * sy) - sxy * (syz * nn - sy * sz) +
                    sx * (syz * sy - syy * sz);
  const double db = sxx * (syz * nn - sy * sz) - sxz * (sxy * nn - sx * sy) +
                    sx * (sxy * sz - syz * sx);
  const double dc = sxx * (syy * sz - syz * sy) - sxy * (sxy * sz - syz * sx) +
                    sxz * (sxy * sy - syy * sx);
  const double a = da / det, b = db / det, c = dc / det;
  const double ccx = a / 2.0, ccy = b / 2.0;
  const double r2 = c + ccx * ccx + ccy * ccy;
  if (!(r2 > 0.0)) throw FitError("circle fit radius is not positive");
  CircleFit fit;
  fit.cx = ccx + mx;
  fit.cy = ccy + my;
  fit.r = std::sqrt(r2);
  double sse = 0.0;
  for (auto [x, y] : points) {
    const double d = std::hypot(x - fit.cx, y - fit.cy) - fit.r;
    sse += d * d;
  }
  fit.rms = std::sqrt(sse / nn);
  return fit;
}

void write_pgm(const std::filesystem::path& path, const CorrelationImage& img,
               DisplayTransform transform) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw IoError("cannot open " + path.string() + " for writing");
  std::uint64_t maxc = 0;
  for (std::uint64_t c : img.counts) maxc = std::max(maxc, c);
  std::fprintf(f, "P5\n# spdcforge arm=%s rebin=%d total=%llu\n%d %d\n65535\n",
               arm_name(img.arm), img.rebin,
               static_cast<unsigned long long>(img.total), img.nx, img.ny);
  std::vector<unsigned char> row(static_cast<std::size_t>(img.nx) * 2);
  for (int oy = 0; oy < img.ny; ++oy) {
    for (int ox = 0; ox < img.nx; ++ox) {
      int sx = ox, sy = oy;
      if (transform == DisplayTransform::Rotate180) {
        sx = img.nx - 1 - ox;
        sy = img.ny - 1 - oy;
      } else if (transform == DisplayTransform::Rotate180Mirror) {
        sx = ox;  // rotation then mirror restores the x direction
        sy = img.ny - 1 - oy;
      }
      const std::uint64_t c = img.at(sx, sy);
      const std::uint64_t v = maxc == 0 ? 0 : c * 65535ull / maxc;
      row[2 * ox] = static_cast<unsigned char>(v >> 8);
      row[2 * ox + 1] = static_cast<unsigned char>(v & 0xff);
    }
    std::fwrite(row.data(), 1, row.size(), f);
  }
  std::fclose(f);
}

void write_image_csv(const std::filesystem::path& path,
                     const CorrelationImage& img, const csv::Meta& meta) {
  csv::Writer w(path, meta, "bin_x,bin_y,count");
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "# image arm=%s rebin=%d nx=%d ny=%d total=%llu "
                "gap_bins=255,257 exposure_hours=%.6f",
                arm_name(img.arm), img.rebin, img.nx, img.ny,
                static_cast<unsigned long long>(img.total),
                img.exposure_hours);
  w.raw_line(buf);
  for (int by = 0; by < img.ny; ++by)
    for (int bx = 0; bx < img.nx; ++bx) {
      const std::uint64_t c = img.at(bx, by);
      if (c == 0) continue;  // zero bins are implied
      w.row("%d,%d,%llu", bx, by, static_cast<unsigned long long>(c));
    }
}

void write_contours_csv(const std::filesystem::path& path,
                        std::span<const double> energies_kev,
                        std::span<const double> radii_mm,
                        const csv::Meta& meta) {
  if (energies_kev.size() != radii_mm.size())
    throw ConfigError("contour energy and radius arrays differ in length");
  csv::Writer w(path, meta, "energy_keV,r_mm");
  for (std::size_t i = 0; i < energies_kev.size(); ++i)
    w.row("%.6f,%.6f", energies_kev[i], radii_mm[i]);
}

void write_gridmap_csv(const std::filesystem::path& path,
                       std::span<const MappedPoint> points,
                       const csv::Meta& meta) {
  csv::Writer w(path, meta, "xs_mm,ys_mm,xi_mm,yi_mm");
  for (const MappedPoint& p : points)
    w.row("%.6f,%.6f,%.6f,%.6f", p.xs_mm, p.ys_mm, p.xi_mm, p.yi_mm);
}

}  // namespace spdc
