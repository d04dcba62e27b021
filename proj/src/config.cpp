#include "spdc/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "json.hpp"
#include "spdc/errors.hpp"

namespace spdc {

namespace {

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const char* section) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("unknown key '" + it.key() + "' in " + section);
  }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("bad value for '" + std::string(key) + "': " + e.what());
  }
}

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  if (!j.contains(key)) return empty;
  const json& s = j.at(key);
  if (!s.is_object())
    throw ConfigError("section '" + std::string(key) + "' must be an object");
  return s;
}

AngleMode parse_angle_mode(const std::string& s) {
  if (s == "exact") return AngleMode::Exact;
  if (s == "approximate") return AngleMode::Approximate;
  throw ConfigError("angle_mode must be 'exact' or 'approximate'");
}

BackgroundLaw parse_background_law(const std::string& s) {
  if (s == "uniform") return BackgroundLaw::Uniform;
  if (s == "one_over_r") return BackgroundLaw::OneOverR;
  throw ConfigError("background_law must be 'uniform' or 'one_over_r'");
}

BandMode parse_band_mode(const std::string& s) {
  if (s == "calibrated") return BandMode::Calibrated;
  if (s == "raw_tot") return BandMode::RawTot;
  throw ConfigError("band mode must be 'calibrated' or 'raw_tot'");
}

SpectrumChoice parse_spectrum_choice(const std::string& s) {
  if (s == "degenerate") return SpectrumChoice::Degenerate;
  if (s == "band") return SpectrumChoice::Band;
  throw ConfigError("spectrum must be 'degenerate' or 'band'");
}

MaskSpec parse_mask(const json& j) {
  check_keys(j,
             {"shape", "transmission", "cell_mm", "x0_mm", "y0_mm", "x1_mm",
              "y1_mm", "cx_mm", "cy_mm", "radius_mm", "r_in_mm", "r_out_mm"},
             "mask");
  MaskSpec m;
  m.shape = get_or<std::string>(j, "shape", "");
  m.transmission = get_or(j, "transmission", 0.0);
  m.cell_mm = get_or(j, "cell_mm", DetectorLayout::kPitchMm);
  m.x0_mm = get_or(j, "x0_mm", 0.0);
  m.y0_mm = get_or(j, "y0_mm", 0.0);
  m.x1_mm = get_or(j, "x1_mm", 0.0);
  m.y1_mm = get_or(j, "y1_mm", 0.0);
  m.cx_mm = get_or(j, "cx_mm", 0.0);
  m.cy_mm = get_or(j, "cy_mm", 0.0);
  m.r_in_mm = get_or(j, "r_in_mm", 0.0);
  m.r_out_mm = get_or(j, "r_out_mm", get_or(j, "radius_mm", 0.0));
  m.validate();
  return m;
}

json mask_to_json(const MaskSpec& m) {
  json j;
  j["shape"] = m.shape;
  j["transmission"] = m.transmission;
  j["cell_mm"] = m.cell_mm;
  if (m.shape == "rect") {
    j["x0_mm"] = m.x0_mm;
    j["y0_mm"] = m.y0_mm;
    j["x1_mm"] = m.x1_mm;
    j["y1_mm"] = m.y1_mm;
  } else {
    j["cx_mm"] = m.cx_mm;
    j["cy_mm"] = m.cy_mm;
    if (m.shape == "annulus") j["r_in_mm"] = m.r_in_mm;
    j["r_out_mm"] = m.r_out_mm;
  }
  return j;
}

}  // namespace

void MaskSpec::validate() const {
  if (shape != "rect" && shape != "disk" && shape != "annulus")
    throw ConfigError("mask shape must be 'rect', 'disk' or 'annulus'");
  if (!(transmission >= 0.0) || transmission > 1.0)
    throw ConfigError("mask transmission must lie in [0, 1]");
  if (!(cell_mm > 0.0)) throw ConfigError("mask cell size must be positive");
  if (shape == "rect") {
    if (!(x1_mm > x0_mm) || !(y1_mm > y0_mm))
      throw ConfigError("rect mask needs x1 > x0 and y1 > y0");
  } else if (shape == "disk") {
    if (!(r_out_mm > 0.0)) throw ConfigError("disk mask needs a radius");
  } else {
    if (!(r_out_mm > r_in_mm) || r_in_mm < 0.0)
      throw ConfigError("annulus mask needs 0 <= r_in < r_out");
  }
}

TransmissionMask MaskSpec::build() const {
  validate();
  const double t = transmission;
  if (shape == "rect") {
    return TransmissionMask::from_function(
        x0_mm, y0_mm, x1_mm, y1_mm, cell_mm,
        [t](double, double) { return t; });
  }
  const double cx = cx_mm, cy = cy_mm;
  const double ri = shape == "disk" ? 0.0 : r_in_mm;
  const double ro = r_out_mm;
  return TransmissionMask::from_function(
      cx - ro, cy - ro, cx + ro, cy + ro, cell_mm,
      [=](double x, double y) {
        const double r = std::hypot(x - cx, y - cy);
        return (r >= ri && r <= ro) ? t : 1.0;
      });
}

void ImagingConfig::validate() const {
  if (rebin < 1 || rebin > DetectorLayout::kPhysicalBins)
    throw ConfigError("imaging rebin out of range");
  if (!(grid_spacing_mm > 0.0) || grid_r_lo_mm < 0.0 ||
      !(grid_r_hi_mm > grid_r_lo_mm))
    throw ConfigError("invalid gridmap window");
}

void IdentifyConfig::validate() const {
  if (!(sigma_ns > 0.0))
    throw ConfigError("identify sigma_ns must be positive");
  if (!(beta_lo > 0.0) || !(beta_hi >= beta_lo))
    throw ConfigError("identify beta grid must satisfy 0 < lo <= hi");
  if (!(zeta_lo > 0.0) || !(zeta_hi >= zeta_lo))
    throw ConfigError("identify zeta grid must satisfy 0 < lo <= hi");
  if (beta_n < 1 || zeta_n < 1)
    throw ConfigError("identify grids need at least one point");
  ssn.validate();
}

SpectrumModel IdentifyConfig::spdc_model(const ExperimentGeometry& geom,
                                         const ToTCalibration& calib) const {
  if (spectrum == SpectrumChoice::Band)
    return spdc_band_spectrum(geom, calib, sigma_ns);
  const double mean =
      calib.energy_to_tot_mean(geom.pump_energy_kev / 2.0, 0, 0);
  return gaussian_spectrum(mean, sigma_ns);
}

SpectrumModel IdentifyConfig::pump_model(const ExperimentGeometry& geom,
                                         const ToTCalibration& calib) const {
  return gaussian_spectrum(
      calib.energy_to_tot_mean(geom.pump_energy_kev, 0, 0), sigma_ns);
}

void RunConfig::validate() const {
  if (run_name.empty()) throw ConfigError("run_name must not be empty");
  if (run_name.find('/') != std::string::npos ||
      run_name.find('\\') != std::string::npos)
    throw ConfigError("run_name must not contain path separators");
  if (threads < 0) throw ConfigError("threads must be >= 0");
  if (hot_fraction < 0.0 || hot_fraction > 0.01)
    throw ConfigError("hot_fraction must lie in [0, 0.01]");
  if (!(dt_bin_ns > 0.0)) throw ConfigError("dt_bin_ns must be positive");
  sim.validate();
  pair_filter.validate();
  imaging.validate();
  identify.validate();
  for (const MaskSpec& m : mask_specs) m.validate();
  for (double e : imaging.contour_energies_kev)
    if (!(e > 0.0) || !(e < sim.geom.pump_energy_kev))
      throw ConfigError("contour energies must lie inside (0, E_pump)");
}

std::string RunConfig::canonical_json() const {
  json j;
  j["run_name"] = run_name;

  json geom;
  geom["pump_energy_kev"] = sim.geom.pump_energy_kev;
  geom["bragg_angle_deg"] = rad_to_deg(sim.geom.bragg_angle_rad);
  geom["detuning_deg"] = rad_to_deg(sim.geom.detuning_rad);
  geom["detuning_sigma_deg"] = rad_to_deg(sim.geom.detuning_sigma_rad);
  geom["crystal_to_detector_mm"] = sim.geom.crystal_to_detector_mm;
  geom["ring_center_col"] = sim.geom.ring_center_col;
  geom["ring_center_row"] = sim.geom.ring_center_row;
  geom["b_min"] = sim.geom.b_min;
  geom["b_max"] = sim.geom.b_max;
  geom["beamstop"] = {{"x_mm", sim.geom.beamstop.x_mm},
                      {"y_mm", sim.geom.beamstop.y_mm},
                      {"radius_mm", sim.geom.beamstop.radius_mm}};
  j["geometry"] = geom;

  json s;
  s["pair_rate_per_hour"] = sim.pair_rate_per_hour;
  s["background_ratio"] = sim.background_ratio;
  s["duration_hours"] = sim.duration_hours;
  s["slices_per_hour"] = sim.slices_per_hour;
  s["angle_mode"] =
      sim.mode == AngleMode::Exact ? "exact" : "approximate";
  s["background_law"] =
      sim.background_law == BackgroundLaw::Uniform ? "uniform" : "one_over_r";
  json masks = json::array();
  for (const MaskSpec& m : mask_specs) masks.push_back(mask_to_json(m));
  s["masks"] = masks;
  j["simulation"] = s;

  json r;
  r["jitter_rms_ns"] = sim.response.timing.jitter_rms_ns;
  r["timewalk_max_ns"] = sim.response.timing.timewalk_max_ns;
  r["timewalk_tot_ref_ns"] = sim.response.timing.timewalk_tot_ref_ns;
  r["toa_quantum_ns"] = sim.response.timing.toa_quantum_ns;
  r["tot_quantum_ns"] = sim.response.timing.tot_quantum_ns;
  r["sharing_radius_mm"] = sim.response.sharing_radius_mm;
  j["response"] = r;

  json c;
  c["gain_ns_per_kev"] = calib.global.gain_ns_per_kev;
  c["offset_ns"] = calib.global.offset_ns;
  c["cutoff_ns"] = calib.global.cutoff_ns;
  c["energy_resolution_fwhm_kev"] = calib.energy_resolution_fwhm_kev;
  c["hot_fraction"] = hot_fraction;
  j["calibration"] = c;

  json p;
  p["reorder_buffer"] = read.reorder_buffer;
  p["toa_quantum_ns"] = read.toa_quantum_ns;
  p["tot_quantum_ns"] = read.tot_quantum_ns;
  p["time_window_ns"] = cluster.time_window_ns;
  p["band_e_min_kev"] = band.e_min_kev;
  p["band_e_max_kev"] = band.e_max_kev;
  p["band_mode"] = band.mode == BandMode::Calibrated ? "calibrated" : "raw_tot";
  j["pipeline"] = p;

  json co;
  co["time_window_ns"] = pair_filter.time_window_ns;
  co["azimuth_tolerance_rad"] = pair_filter.azimuth_tolerance_rad;
  co["energy_tolerance_kev"] = pair_filter.energy_tolerance_kev;
  co["dt_bin_ns"] = dt_bin_ns;
  if (pair_filter.tot_box) {
    co["tot_box"] = {{"signal_lo_ns", pair_filter.tot_box->signal_lo_ns},
                     {"signal_hi_ns", pair_filter.tot_box->signal_hi_ns},
                     {"idler_lo_ns", pair_filter.tot_box->idler_lo_ns},
                     {"idler_hi_ns", pair_filter.tot_box->idler_hi_ns}};
  }
  j["coincidence"] = co;

  json im;
  im["rebin"] = imaging.rebin;
  im["rotate_idler"] = imaging.rotate_idler;
  im["contour_energies_kev"] = imaging.contour_energies_kev;
  im["grid_spacing_mm"] = imaging.grid_spacing_mm;
  im["grid_r_lo_mm"] = imaging.grid_r_lo_mm;
  im["grid_r_hi_mm"] = imaging.grid_r_hi_mm;
  j["imaging"] = im;

  json id;
  id["spectrum"] =
      identify.spectrum == SpectrumChoice::Degenerate ? "degenerate" : "band";
  id["sigma_ns"] = identify.sigma_ns;
  id["beta_lo"] = identify.beta_lo;
  id["beta_hi"] = identify.beta_hi;
  id["beta_n"] = identify.beta_n;
  id["zeta_lo"] = identify.zeta_lo;
  id["zeta_hi"] = identify.zeta_hi;
  id["zeta_n"] = identify.zeta_n;
  id["ssn"] = {{"mean_flux", identify.ssn.mean_flux},
               {"transmission", identify.ssn.transmission},
               {"n_frames", identify.ssn.n_frames},
               {"heralding_efficiency", identify.ssn.heralding_efficiency}};
  j["identify"] = id;

  json in;
  in["events"] = inputs.events;
  in["pairs"] = inputs.pairs;
  in["clusters"] = inputs.clusters;
  j["inputs"] = in;

  return j.dump();
}

std::uint64_t RunConfig::digest() const { return csv::fnv1a64(canonical_json()); }

csv::Meta RunConfig::meta() const { return {seed, digest()}; }

RunConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    long line = 1;
    for (std::size_t i = 0; i < e.byte && i < text.size(); ++i)
      if (text[i] == '\n') ++line;
    throw ParseError(std::string("config JSON: ") + e.what(), line);
  }
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  check_keys(j,
             {"run_name", "seed", "out_dir", "threads", "geometry",
              "simulation", "response", "calibration", "pipeline",
              "coincidence", "imaging", "identify", "inputs"},
             "config root");

  RunConfig cfg;
  cfg.run_name = get_or<std::string>(j, "run_name", cfg.run_name);
  cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
  cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir);
  cfg.threads = get_or(j, "threads", cfg.threads);

  const json& g = section(j, "geometry");
  check_keys(g,
             {"pump_energy_kev", "bragg_angle_deg", "detuning_deg",
              "detuning_sigma_deg", "crystal_to_detector_mm",
              "ring_center_col", "ring_center_row", "b_min", "b_max",
              "beamstop"},
             "geometry");
  ExperimentGeometry& geom = cfg.sim.geom;
  geom.pump_energy_kev = get_or(g, "pump_energy_kev", geom.pump_energy_kev);
  geom.bragg_angle_rad =
      deg_to_rad(get_or(g, "bragg_angle_deg", rad_to_deg(geom.bragg_angle_rad)));
  geom.detuning_rad =
      deg_to_rad(get_or(g, "detuning_deg", rad_to_deg(geom.detuning_rad)));
  geom.detuning_sigma_rad = deg_to_rad(
      get_or(g, "detuning_sigma_deg", rad_to_deg(geom.detuning_sigma_rad)));
  geom.crystal_to_detector_mm =
      get_or(g, "crystal_to_detector_mm", geom.crystal_to_detector_mm);
  geom.ring_center_col = get_or(g, "ring_center_col", geom.ring_center_col);
  geom.ring_center_row = get_or(g, "ring_center_row", geom.ring_center_row);
  geom.b_min = get_or(g, "b_min", geom.b_min);
  geom.b_max = get_or(g, "b_max", geom.b_max);
  if (g.contains("beamstop")) {
    const json& bs = g.at("beamstop");
    check_keys(bs, {"x_mm", "y_mm", "radius_mm"}, "beamstop");
    geom.beamstop.x_mm = get_or(bs, "x_mm", 0.0);
    geom.beamstop.y_mm = get_or(bs, "y_mm", 0.0);
    geom.beamstop.radius_mm = get_or(bs, "radius_mm", 0.0);
  }

  const json& s = section(j, "simulation");
  check_keys(s,
             {"pair_rate_per_hour", "background_ratio", "duration_hours",
              "slices_per_hour", "angle_mode", "background_law",
              "ideal_detector", "masks"},
             "simulation");
  cfg.sim.pair_rate_per_hour =
      get_or(s, "pair_rate_per_hour", cfg.sim.pair_rate_per_hour);
  cfg.sim.background_ratio =
      get_or(s, "background_ratio", cfg.sim.background_ratio);
  cfg.sim.duration_hours = get_or(s, "duration_hours", cfg.sim.duration_hours);
  cfg.sim.slices_per_hour =
      get_or(s, "slices_per_hour", cfg.sim.slices_per_hour);
  cfg.sim.mode =
      parse_angle_mode(get_or<std::string>(s, "angle_mode", "exact"));
  cfg.sim.background_law = parse_background_law(
      get_or<std::string>(s, "background_law", "uniform"));
  if (s.contains("masks")) {
    const json& arr = s.at("masks");
    if (!arr.is_array()) throw ConfigError("simulation.masks must be an array");
    for (const json& mj : arr) {
      MaskSpec spec = parse_mask(mj);
      cfg.mask_specs.push_back(spec);
      cfg.sim.masks.push_back(spec.build());
    }
  }

  const json& r = section(j, "response");
  check_keys(r,
             {"jitter_rms_ns", "timewalk_max_ns", "timewalk_tot_ref_ns",
              "toa_quantum_ns", "tot_quantum_ns", "sharing_radius_mm"},
             "response");
  TimingModel& tm = cfg.sim.response.timing;
  tm.jitter_rms_ns = get_or(r, "jitter_rms_ns", tm.jitter_rms_ns);
  tm.timewalk_max_ns = get_or(r, "timewalk_max_ns", tm.timewalk_max_ns);
  tm.timewalk_tot_ref_ns =
      get_or(r, "timewalk_tot_ref_ns", tm.timewalk_tot_ref_ns);
  tm.toa_quantum_ns = get_or(r, "toa_quantum_ns", tm.toa_quantum_ns);
  tm.tot_quantum_ns = get_or(r, "tot_quantum_ns", tm.tot_quantum_ns);
  cfg.sim.response.sharing_radius_mm =
      get_or(r, "sharing_radius_mm", cfg.sim.response.sharing_radius_mm);

  const json& c = section(j, "calibration");
  check_keys(c,
             {"gain_ns_per_kev", "offset_ns", "cutoff_ns",
              "energy_resolution_fwhm_kev", "hot_fraction"},
             "calibration");
  cfg.calib.global.gain_ns_per_kev =
      get_or(c, "gain_ns_per_kev", cfg.calib.global.gain_ns_per_kev);
  cfg.calib.global.offset_ns =
      get_or(c, "offset_ns", cfg.calib.global.offset_ns);
  if (c.contains("cutoff_ns")) {
    cfg.calib.global.cutoff_ns = get_or(c, "cutoff_ns", 0.0);
  } else {
    cfg.calib.global.cutoff_ns =
        ToTCalibration::default_cutoff(cfg.calib.global);
  }
  cfg.calib.energy_resolution_fwhm_kev = get_or(
      c, "energy_resolution_fwhm_kev", cfg.calib.energy_resolution_fwhm_kev);
  cfg.hot_fraction = get_or(c, "hot_fraction", cfg.hot_fraction);

  // ideal_detector collapses every stochastic response term.
  if (get_or(s, "ideal_detector", false)) {
    tm.jitter_rms_ns = 0.0;
    tm.timewalk_max_ns = 0.0;
    cfg.sim.response.sharing_radius_mm = 0.0;
    cfg.calib.energy_resolution_fwhm_kev = 0.0;
  }

  const json& p = section(j, "pipeline");
  check_keys(p,
             {"reorder_buffer", "toa_quantum_ns", "tot_quantum_ns",
              "time_window_ns", "band_e_min_kev", "band_e_max_kev",
              "band_mode"},
             "pipeline");
  cfg.read.reorder_buffer = get_or(p, "reorder_buffer", cfg.read.reorder_buffer);
  cfg.read.toa_quantum_ns = get_or(p, "toa_quantum_ns", cfg.read.toa_quantum_ns);
  cfg.read.tot_quantum_ns = get_or(p, "tot_quantum_ns", cfg.read.tot_quantum_ns);
  cfg.cluster.time_window_ns =
      get_or(p, "time_window_ns", cfg.cluster.time_window_ns);
  cfg.band.e_min_kev = get_or(p, "band_e_min_kev", cfg.band.e_min_kev);
  cfg.band.e_max_kev = get_or(p, "band_e_max_kev", cfg.band.e_max_kev);
  cfg.band.mode =
      parse_band_mode(get_or<std::string>(p, "band_mode", "calibrated"));

  const json& co = section(j, "coincidence");
  check_keys(co,
             {"time_window_ns", "azimuth_tolerance_rad",
              "energy_tolerance_kev", "dt_bin_ns", "tot_box"},
             "coincidence");
  cfg.pair_filter.time_window_ns =
      get_or(co, "time_window_ns", cfg.pair_filter.time_window_ns);
  cfg.pair_filter.azimuth_tolerance_rad =
      get_or(co, "azimuth_tolerance_rad", cfg.pair_filter.azimuth_tolerance_rad);
  cfg.pair_filter.energy_tolerance_kev =
      get_or(co, "energy_tolerance_kev", cfg.pair_filter.energy_tolerance_kev);
  cfg.dt_bin_ns = get_or(co, "dt_bin_ns", cfg.dt_bin_ns);
  if (co.contains("tot_box") && !co.at("tot_box").is_null()) {
    const json& tb = co.at("tot_box");
    check_keys(tb, {"signal_lo_ns", "signal_hi_ns", "idler_lo_ns",
                    "idler_hi_ns"},
               "tot_box");
    TotBox box;
    box.signal_lo_ns = get_or(tb, "signal_lo_ns", 0.0);
    box.signal_hi_ns = get_or(tb, "signal_hi_ns", 0.0);
    box.idler_lo_ns = get_or(tb, "idler_lo_ns", 0.0);
    box.idler_hi_ns = get_or(tb, "idler_hi_ns", 0.0);
    cfg.pair_filter.tot_box = box;
  }

  const json& im = section(j, "imaging");
  check_keys(im,
             {"rebin", "rotate_idler", "contour_energies_kev",
              "grid_spacing_mm", "grid_r_lo_mm", "grid_r_hi_mm"},
             "imaging");
  cfg.imaging.rebin = get_or(im, "rebin", cfg.imaging.rebin);
  cfg.imaging.rotate_idler =
      get_or(im, "rotate_idler", cfg.imaging.rotate_idler);
  cfg.imaging.contour_energies_kev = get_or(
      im, "contour_energies_kev", cfg.imaging.contour_energies_kev);
  cfg.imaging.grid_spacing_mm =
      get_or(im, "grid_spacing_mm", cfg.imaging.grid_spacing_mm);
  cfg.imaging.grid_r_lo_mm = get_or(im, "grid_r_lo_mm", cfg.imaging.grid_r_lo_mm);
  cfg.imaging.grid_r_hi_mm = get_or(im, "grid_r_hi_mm", cfg.imaging.grid_r_hi_mm);

  const json& id = section(j, "identify");
  check_keys(id,
             {"spectrum", "sigma_ns", "beta_lo", "beta_hi", "beta_n",
              "zeta_lo", "zeta_hi", "zeta_n", "ssn"},
             "identify");
  cfg.identify.spectrum = parse_spectrum_choice(
      get_or<std::string>(id, "spectrum", "degenerate"));
  cfg.identify.sigma_ns = get_or(id, "sigma_ns", cfg.identify.sigma_ns);
  cfg.identify.beta_lo = get_or(id, "beta_lo", cfg.identify.beta_lo);
  cfg.identify.beta_hi = get_or(id, "beta_hi", cfg.identify.beta_hi);
  cfg.identify.beta_n = get_or(id, "beta_n", cfg.identify.beta_n);
  cfg.identify.zeta_lo = get_or(id, "zeta_lo", cfg.identify.zeta_lo);
  cfg.identify.zeta_hi = get_or(id, "zeta_hi", cfg.identify.zeta_hi);
  cfg.identify.zeta_n = get_or(id, "zeta_n", cfg.identify.zeta_n);
  if (id.contains("ssn")) {
    const json& sn = id.at("ssn");
    check_keys(sn, {"mean_flux", "transmission", "n_frames",
                    "heralding_efficiency"},
               "ssn");
    cfg.identify.ssn.mean_flux =
        get_or(sn, "mean_flux", cfg.identify.ssn.mean_flux);
    cfg.identify.ssn.transmission =
        get_or(sn, "transmission", cfg.identify.ssn.transmission);
    cfg.identify.ssn.n_frames =
        get_or(sn, "n_frames", cfg.identify.ssn.n_frames);
    cfg.identify.ssn.heralding_efficiency = get_or(
        sn, "heralding_efficiency", cfg.identify.ssn.heralding_efficiency);
  }

  const json& in = section(j, "inputs");
  check_keys(in, {"events", "pairs", "clusters"}, "inputs");
  cfg.inputs.events = get_or<std::string>(in, "events", "");
  cfg.inputs.pairs = get_or<std::string>(in, "pairs", "");
  cfg.inputs.clusters = get_or<std::string>(in, "clusters", "");

  cfg.sim.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  json j = json::parse(cfg.canonical_json());
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["threads"] = cfg.threads;
  out << j.dump(2) << "\n";
}

}  // namespace spdc
