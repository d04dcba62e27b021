// spdcforge: simulate | process | image | identify over a JSON config.
// Exit codes: 0 success, 2 configuration error, 3 I/O or parse error.
#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spdc/coincidence.hpp"
#include "spdc/config.hpp"
#include "spdc/errors.hpp"
#include "spdc/identify.hpp"
#include "spdc/imaging.hpp"
#include "spdc/pipeline.hpp"
#include "spdc/simulator.hpp"

namespace fs = std::filesystem;
using namespace spdc;

namespace {

// Disjoint from the simulator's per-slice salts (1..4) and the ssn
// streams (5, 6).
constexpr std::uint64_t kSaltHotMask = 7;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<int> threads;
};

RunConfig effective_config(const std::string& config_path,
                           const Overrides& ov) {
  RunConfig cfg = load_config(config_path);
  if (ov.seed) {
    cfg.seed = *ov.seed;
    cfg.sim.seed = *ov.seed;
  }
  if (ov.out_dir) cfg.out_dir = *ov.out_dir;
  if (ov.threads) cfg.threads = *ov.threads;
  cfg.validate();
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
  return cfg;
}

fs::path out_path(const RunConfig& cfg, const std::string& suffix) {
  return fs::path(cfg.out_dir) / (cfg.run_name + suffix);
}

void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + cfg.out_dir);
}

DetectorLayout make_layout(const RunConfig& cfg) {
  DetectorLayout layout;
  if (cfg.hot_fraction > 0.0) {
    RngStream rng(cfg.seed, 0, kSaltHotMask);
    layout.randomize_hot_pixels(cfg.hot_fraction, rng);
  }
  return layout;
}

int cmd_simulate(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  DetectorLayout layout = make_layout(cfg);
  SimResult res = run_simulation(cfg.sim, layout, cfg.calib);

  const csv::Meta meta = cfg.meta();
  const fs::path events = out_path(cfg, "_events.csv");
  const fs::path truth = out_path(cfg, "_truth.csv");
  write_events_csv(events, res.hits, meta);
  write_truth_csv(truth, res.truths, meta);

  const double hours = cfg.sim.duration_hours;
  std::printf("simulate: run=%s seed=%llu config=%016llx\n",
              cfg.run_name.c_str(),
              static_cast<unsigned long long>(cfg.seed),
              static_cast<unsigned long long>(meta.config_digest));
  std::printf(
      "simulate: pairs=%zu background=%zu absorbed=%llu hits=%zu\n",
      res.truths.size(), res.background.size(),
      static_cast<unsigned long long>(res.absorbed_count), res.hits.size());
  if (hours > 0.0)
    std::printf("simulate: pair_rate=%.1f/h over %.3f h\n",
                res.truths.size() / hours, hours);
  std::printf("simulate: wrote %s and %s\n", events.string().c_str(),
              truth.string().c_str());
  return 0;
}

int cmd_process(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  const fs::path events_path = cfg.inputs.events.empty()
                                   ? out_path(cfg, "_events.csv")
                                   : fs::path(cfg.inputs.events);

  std::vector<RawHit> hits = read_events(events_path, cfg.read);
  DetectorLayout layout = make_layout(cfg);
  std::vector<ClusterEvent> clusters =
      cluster_hits(hits, layout, cfg.calib, cfg.cluster);
  std::vector<ClusterEvent> singles =
      select_spdc_singles(clusters, cfg.band, cfg.calib);

  std::vector<ClusterEvent> signal, idler;
  for (const ClusterEvent& c : singles)
    (c.arm == Arm::Signal ? signal : idler).push_back(c);

  MatchResult mr = match_pairs(signal, idler, cfg.pair_filter);
  spatial_filter(mr.pairs, cfg.sim.geom, cfg.pair_filter);

  std::size_t passed = 0;
  for (const CandidatePair& p : mr.pairs)
    if (p.passed) ++passed;

  const csv::Meta meta = cfg.meta();
  write_clusters_csv(out_path(cfg, "_clusters.csv"), clusters, meta);
  write_pairs_csv(out_path(cfg, "_pairs.csv"), mr.pairs, meta);
  write_histogram_csv(out_path(cfg, "_dt_hist.csv"),
                      dt_histogram(mr.pairs, cfg.dt_bin_ns), meta);
  // The moment fit needs statistics; below that the file stays empty.
  Histogram detuning;
  if (passed >= 100)
    detuning = detuning_histogram(mr.pairs, cfg.sim.geom).hist;
  write_histogram_csv(out_path(cfg, "_detuning_hist.csv"), detuning, meta);
  write_scatter_csv(out_path(cfg, "_scatter.csv"),
                    emission_scatter(mr.pairs, cfg.sim.geom), meta);

  std::printf("process: run=%s seed=%llu config=%016llx\n",
              cfg.run_name.c_str(),
              static_cast<unsigned long long>(cfg.seed),
              static_cast<unsigned long long>(meta.config_digest));
  std::printf("process: hits=%zu clusters=%zu band_signal=%zu band_idler=%zu\n",
              hits.size(), clusters.size(), signal.size(), idler.size());
  std::printf("process: pairs=%zu passed=%zu\n", mr.pairs.size(), passed);
  return 0;
}

int cmd_image(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  const fs::path pairs_path = cfg.inputs.pairs.empty()
                                  ? out_path(cfg, "_pairs.csv")
                                  : fs::path(cfg.inputs.pairs);
  std::vector<CandidatePair> pairs =
      read_pairs_csv(pairs_path, cfg.sim.geom);

  const int rebin = cfg.imaging.rebin;
  const double hours = cfg.sim.duration_hours;
  auto [sig, idl] = accumulate(pairs, rebin, hours);
  CorrelationImage corr =
      accumulate_corrected_idler(pairs, cfg.sim.geom, rebin, hours);

  const csv::Meta meta = cfg.meta();
  const DisplayTransform idler_view = cfg.imaging.rotate_idler
                                          ? DisplayTransform::Rotate180Mirror
                                          : DisplayTransform::None;
  write_pgm(out_path(cfg, "_signal.pgm"), sig);
  write_image_csv(out_path(cfg, "_signal.csv"), sig, meta);
  write_pgm(out_path(cfg, "_idler.pgm"), idl, idler_view);
  write_image_csv(out_path(cfg, "_idler.csv"), idl, meta);
  write_pgm(out_path(cfg, "_idler_corrected.pgm"), corr, idler_view);
  write_image_csv(out_path(cfg, "_idler_corrected.csv"), corr, meta);

  std::vector<double> radii =
      energy_contours(cfg.sim.geom, cfg.imaging.contour_energies_kev);
  write_contours_csv(fs::path(cfg.out_dir) / "contours.csv",
                     cfg.imaging.contour_energies_kev, radii, meta);

  auto grid = square_grid_points(cfg.sim.geom, cfg.imaging.grid_spacing_mm,
                                 cfg.imaging.grid_r_lo_mm,
                                 cfg.imaging.grid_r_hi_mm);
  write_gridmap_csv(fs::path(cfg.out_dir) / "gridmap.csv",
                    grid_mapping(grid, cfg.sim.geom), meta);

  if (!cfg.inputs.clusters.empty()) {
    std::vector<ClusterEvent> clusters =
        read_clusters_csv(cfg.inputs.clusters);
    CorrelationImage singles = accumulate_clusters(clusters, rebin, hours);
    write_pgm(out_path(cfg, "_singles.pgm"), singles);
    write_image_csv(out_path(cfg, "_singles.csv"), singles, meta);
  }

  std::printf("image: run=%s seed=%llu config=%016llx\n",
              cfg.run_name.c_str(),
              static_cast<unsigned long long>(cfg.seed),
              static_cast<unsigned long long>(meta.config_digest));
  std::printf("image: pairs=%zu imaged=%llu rebin=%d grid_points=%zu\n",
              pairs.size(), static_cast<unsigned long long>(sig.total), rebin,
              grid.size());
  return 0;
}

int cmd_identify(const RunConfig& cfg) {
  ensure_out_dir(cfg);
  const SpectrumModel h = cfg.identify.spdc_model(cfg.sim.geom, cfg.calib);
  const SpectrumModel g = cfg.identify.pump_model(cfg.sim.geom, cfg.calib);
  std::vector<double> betas =
      logspace(cfg.identify.beta_lo, cfg.identify.beta_hi, cfg.identify.beta_n);
  std::vector<double> zetas =
      linspace(cfg.identify.zeta_lo, cfg.identify.zeta_hi, cfg.identify.zeta_n);
  SurfaceResult surface = probability_surface(h, g, betas, zetas);

  SsnReport ssn = ssn_experiment(cfg.identify.ssn, cfg.seed);

  const csv::Meta meta = cfg.meta();
  write_surface_csv(out_path(cfg, "_surface.csv"), surface, meta);
  write_contour_csv(fs::path(cfg.out_dir) / "contour95.csv", surface, meta);
  write_ssn_json(out_path(cfg, "_ssn.json"), ssn, meta);

  std::printf("identify: run=%s seed=%llu config=%016llx\n",
              cfg.run_name.c_str(),
              static_cast<unsigned long long>(cfg.seed),
              static_cast<unsigned long long>(meta.config_digest));
  std::printf("identify: reference_p=%.6f surface=%zux%zu contour95=%zu\n",
              surface.reference_p, surface.zeta.size(), surface.beta.size(),
              surface.contour95.size());
  std::printf(
      "identify: ssn ratio=%.6f +- %.6f (classical=%.6e heralded=%.6e)\n",
      ssn.ratio, ssn.stderr_ratio, ssn.var_classical, ssn.var_heralded);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"x-ray SPDC simulation, reconstruction, and analysis"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;
  std::uint64_t seed_arg = 0;
  std::string out_arg;
  int threads_arg = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON configuration file")
        ->required();
    cmd->add_option("--seed", seed_arg, "Override the configured seed")
        ->each([&](const std::string& v) { ov.seed = std::stoull(v); });
    cmd->add_option("--out", out_arg, "Override the output directory")
        ->each([&](const std::string& v) { ov.out_dir = v; });
    cmd->add_option("--threads", threads_arg, "Cap worker threads (0 = auto)")
        ->each([&](const std::string& v) { ov.threads = std::stoi(v); });
  };

  CLI::App* simulate =
      app.add_subcommand("simulate", "Generate detector events + truth");
  CLI::App* process =
      app.add_subcommand("process", "Events -> clusters -> pairs -> histograms");
  CLI::App* image =
      app.add_subcommand("image", "Pairs -> correlation images + contours");
  CLI::App* identify =
      app.add_subcommand("identify", "Probability surface + ssn report");
  for (CLI::App* cmd : {simulate, process, image, identify}) add_common(cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    RunConfig cfg = effective_config(config_path, ov);
    if (simulate->parsed()) return cmd_simulate(cfg);
    if (process->parsed()) return cmd_process(cfg);
    if (image->parsed()) return cmd_image(cfg);
    return cmd_identify(cfg);
  } catch (const IoError& e) {
    std::fprintf(stderr, "spdcforge: %s\n", e.what());
    return 3;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "spdcforge: %s\n", e.what());
    return 3;
  } catch (const OrderError& e) {
    std::fprintf(stderr, "spdcforge: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    std::fprintf(stderr, "spdcforge: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "spdcforge: %s\n", e.what());
    return 2;
  }
}
