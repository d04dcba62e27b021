#include "spdc/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <tuple>
#include <unordered_map>

#include "spdc/errors.hpp"

namespace spdc {

namespace {

bool on_quantum(double value, double quantum) {
  if (quantum <= 0) return true;
  double n = value / quantum;
  return std::fabs(n - std::llround(n)) < 1e-6;
}

struct HitOrder {
  // Min-heap on the canonical (toa, col, row, tot, chip) key, so files
  // written in canonical order read back identically.
  bool operator()(const RawHit& a, const RawHit& b) const {
    return std::tie(a.toa_ns, a.col, a.row, a.tot_ns, a.chip) >
           std::tie(b.toa_ns, b.col, b.row, b.tot_ns, b.chip);
  }
};

/// Disjoint-set over hit indices.
class UnionFind {
 public:
  explicit UnionFind(std::size_t n) : parent_(n) {
    for (std::size_t i = 0; i < n; ++i) parent_[i] = i;
  }
  std::size_t find(std::size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

std::vector<ClusterEvent> cluster_range(std::span<const RawHit> hits,
                                        const DetectorLayout& layout,
                                        const ToTCalibration& calib,
                                        double window_ns) {
  const std::size_t n = hits.size();
  UnionFind uf(n);
  // Per-pixel hit indices in time order; scans run from the back and
  // stop once outside the window.
  std::unordered_map<std::uint32_t, std::vector<std::size_t>> by_pixel;
  by_pixel.reserve(n * 2);

  auto key = [](int col, int row) {
    return static_cast<std::uint32_t>(col) << 9 |
           static_cast<std::uint32_t>(row);
  };

  for (std::size_t i = 0; i < n; ++i) {
    const RawHit& h = hits[i];
    for (int dc = -1; dc <= 1; ++dc)
      for (int dr = -1; dr <= 1; ++dr) {
        int col = h.col + dc, row = h.row + dr;
        if (col < 0 || col >= DetectorLayout::kLogicalSize || row < 0 ||
            row >= DetectorLayout::kLogicalSize)
          continue;
        auto it = by_pixel.find(key(col, row));
        if (it == by_pixel.end()) continue;
        const auto& list = it->second;
        for (auto rit = list.rbegin(); rit != list.rend(); ++rit) {
          if (h.toa_ns - hits[*rit].toa_ns > window_ns) break;
          uf.unite(i, *rit);
        }
      }
    by_pixel[key(h.col, h.row)].push_back(i);
  }

  std::unordered_map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[uf.find(i)].push_back(i);

  std::vector<ClusterEvent> clusters;
  clusters.reserve(groups.size());
  for (auto& [root, members] : groups) {
    // Accumulate in a canonical member order so equal inputs in any
    // permutation produce bit-identical centroids.
    std::sort(members.begin(), members.end(),
              [&](std::size_t a, std::size_t b) {
                const RawHit &l = hits[a], &r = hits[b];
                return std::tie(l.toa_ns, l.col, l.row, l.tot_ns, l.chip) <
                       std::tie(r.toa_ns, r.col, r.row, r.tot_ns, r.chip);
              });
    ClusterEvent c;
    c.n_pixels = static_cast<int>(members.size());
    c.toa_ns = hits[members[0]].toa_ns;
    double wsum = 0, xsum = 0, ysum = 0;
    std::size_t seed = members[0];
    for (std::size_t m : members) {
      const RawHit& h = hits[m];
      c.toa_ns = std::min(c.toa_ns, h.toa_ns);
      c.energy_kev += calib.tot_to_energy(h.tot_ns, h.col, h.row);
      c.tot_sum_ns += h.tot_ns;
      auto [x, y] = layout.logical_to_physical(h.col, h.row);
      wsum += h.tot_ns;
      xsum += h.tot_ns * x;
      ysum += h.tot_ns * y;
      const RawHit& s = hits[seed];
      if (h.tot_ns > s.tot_ns ||
          (h.tot_ns == s.tot_ns &&
           std::pair(h.col, h.row) < std::pair(s.col, s.row)))
        seed = m;
    }
    if (wsum > 0) {
      c.x_mm = xsum / wsum;
      c.y_mm = ysum / wsum;
    } else {
      auto [x, y] = layout.logical_to_physical(hits[seed].col, hits[seed].row);
      c.x_mm = x;
      c.y_mm = y;
    }
    c.seed_col = hits[seed].col;
    c.seed_row = hits[seed].row;
    c.seed_tot_ns = hits[seed].tot_ns;
    c.arm = layout.arm_of(c.seed_col, c.seed_row);
    clusters.push_back(c);
  }
  return clusters;
}

void sort_clusters_canonical(std::vector<ClusterEvent>& clusters) {
  std::sort(clusters.begin(), clusters.end(),
            [](const ClusterEvent& a, const ClusterEvent& b) {
              return std::tie(a.toa_ns, a.x_mm, a.y_mm, a.energy_kev) <
                     std::tie(b.toa_ns, b.x_mm, b.y_mm, b.energy_kev);
            });
}

}  // namespace

std::vector<RawHit> read_events(const std::filesystem::path& path,
                                const ReadOptions& opts) {
  std::vector<RawHit> out;
  std::priority_queue<RawHit, std::vector<RawHit>, HitOrder> buffer;
  double last_emitted = -1e300;

  auto emit = [&](const RawHit& h, long line) {
    if (h.toa_ns < last_emitted)
      throw OrderError("hit disorder exceeds reorder buffer near line " +
                       std::to_string(line));
    last_emitted = h.toa_ns;
    out.push_back(h);
  };

  long last_line = 0;
  csv::for_each_row(
      path, "chip,col,row,toa_ns,tot_ns",
      [&](const std::vector<std::string>& f, long line) {
        last_line = line;
        if (f.size() != 5) throw ParseError("expected 5 fields", line);
        RawHit h;
        h.chip = csv::to_int(f[0], line);
        h.col = csv::to_int(f[1], line);
        h.row = csv::to_int(f[2], line);
        h.toa_ns = csv::to_double(f[3], line);
        h.tot_ns = csv::to_double(f[4], line);
        if (h.chip < 1 || h.chip > 4) throw ParseError("chip outside 1..4", line);
        if (h.col < 0 || h.col >= DetectorLayout::kLogicalSize || h.row < 0 ||
            h.row >= DetectorLayout::kLogicalSize)
          throw ParseError("pixel index out of range", line);
        if (h.tot_ns < 0 || h.toa_ns < 0)
          throw ParseError("negative time value", line);
        if (!on_quantum(h.toa_ns, opts.toa_quantum_ns))
          throw ParseError("toa not on its quantum grid", line);
        if (!on_quantum(h.tot_ns, opts.tot_quantum_ns))
          throw ParseError("tot not on its quantum grid", line);
        buffer.push(h);
        if (buffer.size() > opts.reorder_buffer) {
          emit(buffer.top(), line);
          buffer.pop();
        }
      });
  while (!buffer.empty()) {
    emit(buffer.top(), last_line);
    buffer.pop();
  }
  return out;
}

std::vector<ClusterEvent> cluster_hits(std::span<const RawHit> hits,
                                       const DetectorLayout& layout,
                                       const ToTCalibration& calib,
                                       const ClusteringConfig& cfg,
                                       bool parallel) {
  if (!(cfg.time_window_ns > 0))
    throw ConfigError("cluster time window must be positive");
  for (std::size_t i = 1; i < hits.size(); ++i)
    if (hits[i].toa_ns < hits[i - 1].toa_ns)
      throw OrderError("cluster input not time-ordered");

  // Chunk boundaries at inter-hit gaps wider than the window: no link
  // can cross them, so chunked and serial results coincide.
  std::vector<std::size_t> starts{0};
  if (parallel)
    for (std::size_t i = 1; i < hits.size(); ++i)
      if (hits[i].toa_ns - hits[i - 1].toa_ns > cfg.time_window_ns)
        starts.push_back(i);
  starts.push_back(hits.size());

  std::vector<std::vector<ClusterEvent>> parts(starts.size() - 1);
#pragma omp parallel for schedule(dynamic) if (parallel && parts.size() > 1)
  for (std::size_t k = 0; k < parts.size(); ++k)
    parts[k] = cluster_range(hits.subspan(starts[k], starts[k + 1] - starts[k]),
                             layout, calib, cfg.time_window_ns);

  std::vector<ClusterEvent> clusters;
  for (auto& p : parts)
    clusters.insert(clusters.end(), p.begin(), p.end());
  sort_clusters_canonical(clusters);
  return clusters;
}

std::vector<ClusterEvent> select_spdc_singles(
    std::span<const ClusterEvent> clusters, const BandFilter& band,
    const ToTCalibration& calib) {
  if (!(band.e_min_kev >= 0) || !(band.e_max_kev > band.e_min_kev))
    throw ConfigError("invalid energy band");
  std::vector<ClusterEvent> kept;
  kept.reserve(clusters.size());
  for (const auto& c : clusters) {
    bool pass;
    if (band.mode == BandMode::Calibrated)
      pass = c.energy_kev >= band.e_min_kev && c.energy_kev <= band.e_max_kev;
    else
      pass = c.seed_tot_ns <= calib.cutoff_ns(c.seed_col, c.seed_row);
    if (pass) kept.push_back(c);
  }
  return kept;
}

void write_clusters_csv(const std::filesystem::path& path,
                        std::span<const ClusterEvent> clusters,
                        const csv::Meta& meta) {
  csv::Writer out(path, meta, "arm,x_mm,y_mm,energy_keV,toa_ns,n_pixels");
  for (const auto& c : clusters)
    out.row("%s,%.6f,%.6f,%.6f,%.4f,%d", arm_name(c.arm), c.x_mm, c.y_mm,
            c.energy_kev, c.toa_ns, c.n_pixels);
}

std::vector<ClusterEvent> read_clusters_csv(const std::filesystem::path& path) {
  std::vector<ClusterEvent> clusters;
  csv::for_each_row(
      path, "arm,x_mm,y_mm,energy_keV,toa_ns,n_pixels",
      [&](const std::vector<std::string>& f, long line) {
        if (f.size() != 6) throw ParseError("expected 6 fields", line);
        ClusterEvent c;
        if (f[0] == "signal")
          c.arm = Arm::Signal;
        else if (f[0] == "idler")
          c.arm = Arm::Idler;
        else
          throw ParseError("arm must be signal or idler", line);
        c.x_mm = csv::to_double(f[1], line);
        c.y_mm = csv::to_double(f[2], line);
        c.energy_kev = csv::to_double(f[3], line);
        c.toa_ns = csv::to_double(f[4], line);
        c.n_pixels = csv::to_int(f[5], line);
        if (c.n_pixels < 1) throw ParseError("n_pixels must be >= 1", line);
        // Seed fields are not serialized; rebuild a plausible stand-in.
        c.seed_col = DetectorLayout::axis_index(
            std::clamp(c.x_mm, 0.0, DetectorLayout::width() - 1e-9));
        c.seed_row = DetectorLayout::axis_index(
            std::clamp(c.y_mm, 0.0, DetectorLayout::width() - 1e-9));
        clusters.push_back(c);
      });
  return clusters;
}

}  // namespace spdc
