#include "nvsim/scan.hpp"

#include "nvsim/io.hpp"
#include "nvsim/kernels.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <numeric>
#include <stdexcept>

namespace nvsim {

// ---------------------------------------------------------------------------
// Config

void ScanConfig::validate() const {
  if (grid.spacing <= 0.0 || grid.nx < 1 || grid.ny < 1 ||
      grid.depths.empty() || grid.depthAxisScale <= 0.0)
    throw std::invalid_argument("ScanConfig: bad grid");
  if (tau1 <= 0.0 || tPi <= 0.0 || contrast <= 0.0 || fi <= 0.0)
    throw std::invalid_argument("ScanConfig: bad sequence parameters");
  if (nSwaps < 2 || nSwaps % 2 != 0)
    throw std::invalid_argument("ScanConfig: nSwaps must be even and >= 2");
  if (repRate <= 0.0 || durationPerPoint <= 0.0)
    throw std::invalid_argument("ScanConfig: bad acquisition timing");
  if (!seedSet) throw std::invalid_argument("ScanConfig: seed not set");
  if (opticalPower <= 0.0 || pixelFlux <= 0.0 || fovSizeUm <= 0.0)
    throw std::invalid_argument("ScanConfig: bad power/flux");
  if (servoGain <= 0.0 || servoGain > 1.0)
    throw std::invalid_argument("ScanConfig: servoGain outside (0, 1]");
  if (odmrPoints < 16 || odmrLinewidth <= 0.0 || odmrSpanHz <= 0.0)
    throw std::invalid_argument("ScanConfig: bad ODMR settings");
  ensemble.validate();
  apd.validate();
  camera.validate();
}

namespace {

double get_num(const nlohmann::json& j, const char* key, double fallback) {
  return j.contains(key) ? j.at(key).get<double>() : fallback;
}
long get_int(const nlohmann::json& j, const char* key, long fallback) {
  return j.contains(key) ? j.at(key).get<long>() : fallback;
}
bool get_bool(const nlohmann::json& j, const char* key, bool fallback) {
  return j.contains(key) ? j.at(key).get<bool>() : fallback;
}

}  // namespace

ScanConfig load_scan_config(const nlohmann::json& j) {
  ScanConfig c;
  require_keys(j,
               {"scene", "grid", "sequence", "acquisition", "ensemble", "psf",
                "instrument", "apd", "camera", "qdm", "gradiometry", "odmr",
                "seed", "output_dir"},
               "config");

  if (j.contains("scene")) c.scenePath = j.at("scene").get<std::string>();
  if (j.contains("output_dir"))
    c.outputDir = j.at("output_dir").get<std::string>();
  if (j.contains("seed")) {
    c.seed = j.at("seed").get<std::uint64_t>();
    c.seedSet = true;
  }

  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    require_keys(g,
                 {"origin_x_um", "origin_y_um", "spacing_um", "nx", "ny",
                  "depths_um", "depth_axis_scale"},
                 "config.grid");
    c.grid.originX = get_num(g, "origin_x_um", c.grid.originX);
    c.grid.originY = get_num(g, "origin_y_um", c.grid.originY);
    c.grid.spacing = get_num(g, "spacing_um", c.grid.spacing);
    c.grid.nx = static_cast<int>(get_int(g, "nx", c.grid.nx));
    c.grid.ny = static_cast<int>(get_int(g, "ny", c.grid.ny));
    c.grid.depthAxisScale =
        get_num(g, "depth_axis_scale", c.grid.depthAxisScale);
    if (g.contains("depths_um"))
      c.grid.depths = g.at("depths_um").get<std::vector<double>>();
  }

  if (j.contains("sequence")) {
    const auto& s = j.at("sequence");
    require_keys(s,
                 {"tau1_s", "n_swaps", "delta_cm_hz", "delta_diff_hz",
                  "t_pi_s", "contrast", "fi_v"},
                 "config.sequence");
    c.tau1 = get_num(s, "tau1_s", c.tau1);
    c.nSwaps = static_cast<int>(get_int(s, "n_swaps", c.nSwaps));
    c.deltaCM = get_num(s, "delta_cm_hz", c.deltaCM);
    c.deltaDiff = get_num(s, "delta_diff_hz", c.deltaDiff);
    c.tPi = get_num(s, "t_pi_s", c.tPi);
    c.contrast = get_num(s, "contrast", c.contrast);
    c.fi = get_num(s, "fi_v", c.fi);
  }

  if (j.contains("acquisition")) {
    const auto& a = j.at("acquisition");
    require_keys(a,
                 {"rep_rate_hz", "duration_per_point_s", "optical_power_w",
                  "noise"},
                 "config.acquisition");
    c.repRate = get_num(a, "rep_rate_hz", c.repRate);
    c.durationPerPoint =
        get_num(a, "duration_per_point_s", c.durationPerPoint);
    c.opticalPower = get_num(a, "optical_power_w", c.opticalPower);
    c.noise = get_bool(a, "noise", c.noise);
  }

  if (j.contains("ensemble")) {
    const auto& e = j.at("ensemble");
    require_keys(e, {"td_s", "tmag_s", "hyperfine_hz", "strata"},
                 "config.ensemble");
    c.ensemble.TD = get_num(e, "td_s", c.ensemble.TD);
    c.ensemble.Tmag = get_num(e, "tmag_s", c.ensemble.Tmag);
    c.ensemble.hyperfine = get_num(e, "hyperfine_hz", c.ensemble.hyperfine);
    c.ensemble.strata =
        static_cast<int>(get_int(e, "strata", c.ensemble.strata));
  }

  if (j.contains("psf")) {
    const auto& p = j.at("psf");
    require_keys(p, {"sx_um", "sy_um", "sz_um"}, "config.psf");
    c.psf.sx = get_num(p, "sx_um", c.psf.sx);
    c.psf.sy = get_num(p, "sy_um", c.psf.sy);
    c.psf.sz = get_num(p, "sz_um", c.psf.sz);
  }

  if (j.contains("instrument")) {
    const auto& i = j.at("instrument");
    require_keys(i,
                 {"mw_depth_scale_um", "laser_center_x_um",
                  "laser_center_y_um", "laser_sigma_um",
                  "temp_drift_k_per_hour", "d_dt_hz_per_k", "temp_sine_amp_k",
                  "temp_sine_period_s"},
                 "config.instrument");
    c.instrument.mwDepthScale =
        get_num(i, "mw_depth_scale_um", c.instrument.mwDepthScale);
    c.instrument.laserCenterX =
        get_num(i, "laser_center_x_um", c.instrument.laserCenterX);
    c.instrument.laserCenterY =
        get_num(i, "laser_center_y_um", c.instrument.laserCenterY);
    c.instrument.laserSigma =
        get_num(i, "laser_sigma_um", c.instrument.laserSigma);
    c.instrument.tempDriftRate =
        get_num(i, "temp_drift_k_per_hour", c.instrument.tempDriftRate);
    c.instrument.dDdT = get_num(i, "d_dt_hz_per_k", c.instrument.dDdT);
    c.instrument.tempSineAmpK =
        get_num(i, "temp_sine_amp_k", c.instrument.tempSineAmpK);
    c.instrument.tempSinePeriod =
        get_num(i, "temp_sine_period_s", c.instrument.tempSinePeriod);
  }

  if (j.contains("apd")) {
    const auto& a = j.at("apd");
    require_keys(a,
                 {"responsivity_a_per_w", "gain", "excess_noise",
                  "transimpedance_v_per_a", "bandwidth_hz",
                  "dark_surface_a", "dark_bulk_a", "temperature_k"},
                 "config.apd");
    c.apd.responsivityM1 =
        get_num(a, "responsivity_a_per_w", c.apd.responsivityM1);
    c.apd.gainM = get_num(a, "gain", c.apd.gainM);
    c.apd.excessNoiseF = get_num(a, "excess_noise", c.apd.excessNoiseF);
    c.apd.transimpedance =
        get_num(a, "transimpedance_v_per_a", c.apd.transimpedance);
    c.apd.bandwidth = get_num(a, "bandwidth_hz", c.apd.bandwidth);
    c.apd.darkSurface = get_num(a, "dark_surface_a", c.apd.darkSurface);
    c.apd.darkBulk = get_num(a, "dark_bulk_a", c.apd.darkBulk);
    c.apd.temperature = get_num(a, "temperature_k", c.apd.temperature);
  }

  if (j.contains("camera")) {
    const auto& cam = j.at("camera");
    require_keys(cam,
                 {"f_demod_hz", "n_demod", "full_scale", "adc_gain",
                  "shot_noise"},
                 "config.camera");
    c.camera.fDemod = get_num(cam, "f_demod_hz", c.camera.fDemod);
    c.camera.nDemod =
        static_cast<int>(get_int(cam, "n_demod", c.camera.nDemod));
    c.camera.fullScale =
        static_cast<int>(get_int(cam, "full_scale", c.camera.fullScale));
    c.camera.adcGain = get_num(cam, "adc_gain", c.camera.adcGain);
    c.camera.shotNoise = get_bool(cam, "shot_noise", c.camera.shotNoise);
  }

  if (j.contains("qdm")) {
    const auto& q = j.at("qdm");
    require_keys(q, {"fov_um", "pixel_flux"}, "config.qdm");
    c.fovSizeUm = get_num(q, "fov_um", c.fovSizeUm);
    c.pixelFlux = get_num(q, "pixel_flux", c.pixelFlux);
  }

  if (j.contains("gradiometry")) {
    const auto& g = j.at("gradiometry");
    require_keys(g, {"ref_x_um", "ref_y_um", "ref_z_um", "servo_gain"},
                 "config.gradiometry");
    c.refX = get_num(g, "ref_x_um", c.refX);
    c.refY = get_num(g, "ref_y_um", c.refY);
    c.refZ = get_num(g, "ref_z_um", c.refZ);
    c.servoGain = get_num(g, "servo_gain", c.servoGain);
  }

  if (j.contains("odmr")) {
    const auto& o = j.at("odmr");
    require_keys(o,
                 {"bz_aligned_t", "bz_projection_t", "linewidth_hz",
                  "contrast", "span_hz", "points", "noise_sigma"},
                 "config.odmr");
    c.odmrBzAligned = get_num(o, "bz_aligned_t", c.odmrBzAligned);
    c.odmrBzProjection = get_num(o, "bz_projection_t", c.odmrBzProjection);
    c.odmrLinewidth = get_num(o, "linewidth_hz", c.odmrLinewidth);
    c.odmrContrast = get_num(o, "contrast", c.odmrContrast);
    c.odmrSpanHz = get_num(o, "span_hz", c.odmrSpanHz);
    c.odmrPoints = static_cast<int>(get_int(o, "points", c.odmrPoints));
    c.odmrNoise = get_num(o, "noise_sigma", c.odmrNoise);
  }

  return c;
}

nlohmann::json scan_config_to_json(const ScanConfig& c) {
  nlohmann::json j;
  j["scene"] = c.scenePath;
  j["output_dir"] = c.outputDir;
  j["seed"] = c.seed;
  j["grid"] = {{"origin_x_um", c.grid.originX},
               {"origin_y_um", c.grid.originY},
               {"spacing_um", c.grid.spacing},
               {"nx", c.grid.nx},
               {"ny", c.grid.ny},
               {"depths_um", c.grid.depths},
               {"depth_axis_scale", c.grid.depthAxisScale}};
  j["sequence"] = {{"tau1_s", c.tau1},       {"n_swaps", c.nSwaps},
                   {"delta_cm_hz", c.deltaCM}, {"delta_diff_hz", c.deltaDiff},
                   {"t_pi_s", c.tPi},        {"contrast", c.contrast},
                   {"fi_v", c.fi}};
  j["acquisition"] = {{"rep_rate_hz", c.repRate},
                      {"duration_per_point_s", c.durationPerPoint},
                      {"optical_power_w", c.opticalPower},
                      {"noise", c.noise}};
  j["ensemble"] = {{"td_s", c.ensemble.TD},
                   {"tmag_s", c.ensemble.Tmag},
                   {"hyperfine_hz", c.ensemble.hyperfine},
                   {"strata", c.ensemble.strata}};
  j["psf"] = {{"sx_um", c.psf.sx}, {"sy_um", c.psf.sy}, {"sz_um", c.psf.sz}};
  j["instrument"] = {{"mw_depth_scale_um", c.instrument.mwDepthScale},
                     {"laser_center_x_um", c.instrument.laserCenterX},
                     {"laser_center_y_um", c.instrument.laserCenterY},
                     {"laser_sigma_um", c.instrument.laserSigma},
                     {"temp_drift_k_per_hour", c.instrument.tempDriftRate},
                     {"d_dt_hz_per_k", c.instrument.dDdT},
                     {"temp_sine_amp_k", c.instrument.tempSineAmpK},
                     {"temp_sine_period_s", c.instrument.tempSinePeriod}};
  j["apd"] = {{"responsivity_a_per_w", c.apd.responsivityM1},
              {"gain", c.apd.gainM},
              {"excess_noise", c.apd.excessNoiseF},
              {"transimpedance_v_per_a", c.apd.transimpedance},
              {"bandwidth_hz", c.apd.bandwidth},
              {"dark_surface_a", c.apd.darkSurface},
              {"dark_bulk_a", c.apd.darkBulk},
              {"temperature_k", c.apd.temperature}};
  j["camera"] = {{"f_demod_hz", c.camera.fDemod},
                 {"n_demod", c.camera.nDemod},
                 {"full_scale", c.camera.fullScale},
                 {"adc_gain", c.camera.adcGain},
                 {"shot_noise", c.camera.shotNoise}};
  j["qdm"] = {{"fov_um", c.fovSizeUm}, {"pixel_flux", c.pixelFlux}};
  j["gradiometry"] = {{"ref_x_um", c.refX},
                      {"ref_y_um", c.refY},
                      {"ref_z_um", c.refZ},
                      {"servo_gain", c.servoGain}};
  j["odmr"] = {{"bz_aligned_t", c.odmrBzAligned},
               {"bz_projection_t", c.odmrBzProjection},
               {"linewidth_hz", c.odmrLinewidth},
               {"contrast", c.odmrContrast},
               {"span_hz", c.odmrSpanHz},
               {"points", c.odmrPoints},
               {"noise_sigma", c.odmrNoise}};
  return j;
}

// ---------------------------------------------------------------------------
// Shared measurement machinery

namespace {

constexpr double kTwoPi = 2.0 * M_PI;

// Ensemble-averaged fringe phasor sum_m w_m exp(i 2pi (deltaCM - cm_m) tau).
std::complex<double> ensemble_phasor(const Ensemble& e, double deltaCM,
                                     double tau) {
  std::vector<double> f(e.size()), w(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) {
    f[i] = deltaCM - e[i].cmOffset;
    w[i] = e[i].weight;
  }
  return kernels::active().phasor_sum(f.data(), w.data(), f.size(), tau, 0.0);
}

struct PointModel {
  std::complex<double> z;  // fringe phasor, |z| <= 1
  double fiEff = 0.0;      // laser-scaled per-channel signal, V
  double ampFactor = 0.0;  // contrast * MW falloff
  NoiseBudget budget;
};

PointModel point_model(const ScanConfig& cfg, const StrainField& field,
                       double x, double y, double apparentDepth,
                       std::uint64_t seed) {
  const double depth = apparentDepth * cfg.grid.depthAxisScale;
  const Ensemble e = voxel_ensemble({x, y, depth}, cfg.psf, field,
                                    cfg.ensemble, seed, 16, {}, false);
  PointModel m;
  m.z = ensemble_phasor(e, cfg.deltaCM, cfg.tau1);
  const double laser = cfg.instrument.laserPower(x, y);
  m.fiEff = cfg.fi * laser;
  m.ampFactor = cfg.contrast * cfg.instrument.mwAmplitude(depth);
  m.budget = apd_noise(cfg.apd, cfg.opticalPower * laser);
  return m;
}

// One dwell of interleaved four-phase readout -> quadrature Mz estimate.
// driftHz shifts the fringe phase like an extra common-mode detuning error.
MzReading measure_point(const ScanConfig& cfg, const PointModel& m,
                        double duration, double driftHz,
                        std::mt19937_64& rng) {
  const double phi = std::arg(m.z) - kTwoPi * driftHz * cfg.tau1;
  const double mag = std::abs(m.z);
  const double fSin = m.ampFactor * mag * std::sin(phi);
  const double fCos = m.ampFactor * mag * std::cos(phi);
  double means[4] = {m.fiEff * (1.0 + fSin), m.fiEff * (1.0 - fSin),
                     m.fiEff * (1.0 + fCos), m.fiEff * (1.0 - fCos)};

  const long shots = std::max<long>(
      1, std::lround(cfg.repRate * duration / 4.0));  // per channel
  double r[4];
  for (int k = 0; k < 4; ++k)
    r[k] = cfg.noise ? sample_reading(means[k], m.budget, shots, rng)
                     : means[k];

  const double dX = r[0] - r[1];
  const double dY = r[2] - r[3];
  const double sigmaD =
      cfg.noise ? std::sqrt(2.0) * m.budget.vTotal() / std::sqrt((double)shots)
                : 0.0;
  const double amp = 2.0 * m.fiEff * m.ampFactor * std::max(mag, 1e-12);
  const double phiRef = kTwoPi * cfg.deltaCM * cfg.tau1;
  return phase_to_mz(dX, dY, cfg.tau1, phiRef, sigmaD, amp);
}

nlohmann::json base_metadata(const ScanConfig& cfg, const char* mode) {
  nlohmann::json meta;
  meta["mode"] = mode;
  meta["seed"] = cfg.seed;
  meta["units"] = {{"position", "um"}, {"mz", "Hz"}, {"strain", "1"},
                   {"amplitude", "V"}};
  meta["grid"] = {{"origin_x_um", cfg.grid.originX},
                  {"origin_y_um", cfg.grid.originY},
                  {"spacing_um", cfg.grid.spacing},
                  {"nx", cfg.grid.nx},
                  {"ny", cfg.grid.ny},
                  {"depths_um", cfg.grid.depths},
                  {"depth_axis_scale", cfg.grid.depthAxisScale}};
  meta["tau1_s"] = cfg.tau1;
  meta["kernels"] = kernels::active().name;
  meta["config_hash"] = config_hash(scan_config_to_json(cfg).dump());
  return meta;
}

StrainMap blank_map(const ScanConfig& cfg, double depth) {
  StrainMap map;
  map.nx = cfg.grid.nx;
  map.ny = cfg.grid.ny;
  map.originX = cfg.grid.originX;
  map.originY = cfg.grid.originY;
  map.spacing = cfg.grid.spacing;
  map.depth = depth;
  map.mz.assign(map.size(), 0.0);
  map.strain.assign(map.size(), 0.0);
  map.sigma.assign(map.size(), 0.0);
  map.amplitude.assign(map.size(), 0.0);
  map.mask.assign(map.size(), 1);
  return map;
}

void store_reading(StrainMap& map, std::size_t i, const MzReading& r,
                   double amplitude) {
  const SpinStrainCouplings cpl;
  map.mz[i] = r.mzShift;
  map.strain[i] = strain_from_mz(r.mzShift, cpl);
  map.sigma[i] = r.sigma / cpl.weighted;
  map.amplitude[i] = amplitude;
  map.mask[i] = (r.outOfRange || r.ambiguous) ? 0 : 1;
}

}  // namespace

// ---------------------------------------------------------------------------
// Confocal

ScanResult run_confocal_scan(const ScanConfig& cfg, const StrainField& field) {
  cfg.validate();
  ScanResult res;
  std::uint64_t point = 0;
  for (double depth : cfg.grid.depths) {
    StrainMap map = blank_map(cfg, depth);
    for (int iy = 0; iy < cfg.grid.ny; ++iy)
      for (int ix = 0; ix < cfg.grid.nx; ++ix, ++point) {
        const double x = cfg.grid.originX + ix * cfg.grid.spacing;
        const double y = cfg.grid.originY + iy * cfg.grid.spacing;
        const std::uint64_t s = derive_seed(cfg.seed, point);
        const PointModel m = point_model(cfg, field, x, y, depth, s);
        std::mt19937_64 rng(derive_seed(s, 1));
        const MzReading r =
            measure_point(cfg, m, cfg.durationPerPoint, 0.0, rng);
        store_reading(map, map.index(ix, iy), r,
                      2.0 * m.fiEff * m.ampFactor * std::abs(m.z));
      }
    apply_amplitude_mask(map);
    res.maps.push_back(std::move(map));
  }

  res.metadata = base_metadata(cfg, "confocal");
  res.metadata["seconds_per_point"] = cfg.durationPerPoint;
  res.metadata["shots_per_point"] =
      std::lround(cfg.repRate * cfg.durationPerPoint);
  res.metadata["virtual_acquisition_seconds"] =
      cfg.durationPerPoint * double(point);
  return res;
}

// ---------------------------------------------------------------------------
// Gradiometry

GradiometryResult run_gradiometry_scan(const ScanConfig& cfg,
                                       const StrainField& field) {
  cfg.validate();
  const double halfDwell = 0.5 * cfg.durationPerPoint;

  const std::uint64_t refSeed = derive_seed(cfg.seed, 0xFEF);
  const PointModel refModel =
      point_model(cfg, field, cfg.refX, cfg.refY, cfg.refZ, refSeed);

  GradiometryResult res;
  double t = 0.0;
  double servo = 0.0;
  bool servoInit = false;
  double refBaseline = 0.0;
  std::uint64_t point = 0;

  for (double depth : cfg.grid.depths) {
    StrainMap map = blank_map(cfg, depth);
    for (int iy = 0; iy < cfg.grid.ny; ++iy)
      for (int ix = 0; ix < cfg.grid.nx; ++ix, ++point) {
        const double x = cfg.grid.originX + ix * cfg.grid.spacing;
        const double y = cfg.grid.originY + iy * cfg.grid.spacing;
        const std::uint64_t s = derive_seed(cfg.seed, point);
        std::mt19937_64 rng(derive_seed(s, 1));

        // closed loop: the synthesizer is retuned by the servo value, so the
        // reference always reads the residual drift and never leaves its
        // fringe even when the accumulated drift exceeds 1/(2 tau1)
        const double driftRef = d_shift(t, cfg.instrument);
        const MzReading refR =
            measure_point(cfg, refModel, halfDwell, driftRef - servo, rng);
        if (!std::isfinite(refR.mzShift) || refR.outOfRange)
          throw std::runtime_error("gradiometry: reference fringe lost");
        if (!servoInit) {
          refBaseline = refR.mzShift;
          servoInit = true;
        }
        servo += cfg.servoGain * (refR.mzShift - refBaseline);
        t += halfDwell;

        const PointModel m = point_model(cfg, field, x, y, depth, s);
        const double driftScan = d_shift(t, cfg.instrument);
        const MzReading scanR =
            measure_point(cfg, m, halfDwell, driftScan - servo, rng);
        t += halfDwell;

        MzReading corrected = scanR;  // drift already removed in hardware
        corrected.sigma = std::hypot(scanR.sigma, refR.sigma * cfg.servoGain);
        store_reading(map, map.index(ix, iy), corrected,
                      2.0 * m.fiEff * m.ampFactor * std::abs(m.z));

        res.driftLog.x.push_back(t);
        res.driftLog.y.push_back(servo);
      }
    apply_amplitude_mask(map);
    res.maps.push_back(std::move(map));
  }

  res.metadata = base_metadata(cfg, "gradiometry");
  res.metadata["seconds_per_point"] = cfg.durationPerPoint;
  res.metadata["reference_position_um"] = {cfg.refX, cfg.refY, cfg.refZ};
  res.metadata["virtual_acquisition_seconds"] = t;
  return res;
}

GradiometrySeries run_gradiometry_series(const ScanConfig& cfg,
                                         const StrainField& field,
                                         double totalTime) {
  cfg.validate();
  if (totalTime <= 0.0)
    throw std::invalid_argument("run_gradiometry_series: totalTime <= 0");
  const double dwell = cfg.durationPerPoint;
  const long n = std::lround(totalTime / dwell);
  if (n < 4)
    throw std::invalid_argument("run_gradiometry_series: too short");

  const double x = cfg.grid.originX, y = cfg.grid.originY;
  const double depth = cfg.grid.depths.front();
  const PointModel scanModel =
      point_model(cfg, field, x, y, depth, derive_seed(cfg.seed, 0x5CA));
  const PointModel refModel = point_model(cfg, field, cfg.refX, cfg.refY,
                                          cfg.refZ, derive_seed(cfg.seed, 0xFEF));

  GradiometrySeries out;
  out.sampleInterval = dwell;
  std::mt19937_64 rngSingle(derive_seed(cfg.seed, 2));
  std::mt19937_64 rngGrad(derive_seed(cfg.seed, 3));

  double servo = 0.0;
  bool servoInit = false;
  double refBaseline = 0.0;
  for (long i = 0; i < n; ++i) {
    const double t0 = i * dwell;
    const double driftMid = d_shift(t0 + 0.5 * dwell, cfg.instrument);

    // channel 1: the whole dwell at the scan position
    const MzReading single =
        measure_point(cfg, scanModel, dwell, driftMid, rngSingle);
    out.singleMz.push_back(single.mzShift);

    // channel 2: half dwell at the reference, half at the scan position,
    // with the synthesizer retuned by the servo value (closed loop)
    const MzReading refR = measure_point(
        cfg, refModel, 0.5 * dwell,
        d_shift(t0 + 0.25 * dwell, cfg.instrument) - servo, rngGrad);
    if (!servoInit) {
      refBaseline = refR.mzShift;
      servoInit = true;
    }
    servo += cfg.servoGain * (refR.mzShift - refBaseline);
    const MzReading scanR = measure_point(
        cfg, scanModel, 0.5 * dwell,
        d_shift(t0 + 0.75 * dwell, cfg.instrument) - servo, rngGrad);
    out.gradioMz.push_back(scanR.mzShift);
    out.driftLog.x.push_back(t0 + dwell);
    out.driftLog.y.push_back(servo);
  }
  return out;
}

// ---------------------------------------------------------------------------
// QDM widefield imaging

QdmResult run_qdm_imaging(const ScanConfig& cfg, const StrainField& field) {
  cfg.validate();
  const int nx = cfg.grid.nx, ny = cfg.grid.ny;
  const std::size_t nPix = static_cast<std::size_t>(nx) * ny;
  const double pix = cfg.fovSizeUm / nx;
  const double depth = cfg.grid.depths.front();

  // footprint of one camera pixel: "across a pixel" = the 1/e diameter
  ConfocalPSF pixelPsf;
  pixelPsf.sx = pixelPsf.sy = pix / std::sqrt(2.0);
  pixelPsf.sz = cfg.psf.sz;

  const double delta1 = cfg.deltaCM;
  const double delta2 = cfg.deltaCM + 0.5 / cfg.tau1;  // half a fringe away

  // deterministic per-pixel fringe model
  std::vector<std::complex<double>> z(nPix);
  std::vector<double> laser(nPix);
  for (int iy = 0; iy < ny; ++iy)
    for (int ix = 0; ix < nx; ++ix) {
      const std::size_t i = static_cast<std::size_t>(iy) * nx + ix;
      const double x = cfg.grid.originX + (ix + 0.5) * pix;
      const double y = cfg.grid.originY + (iy + 0.5) * pix;
      const Ensemble e =
          voxel_ensemble({x, y, depth * cfg.grid.depthAxisScale}, pixelPsf,
                         field, cfg.ensemble, derive_seed(cfg.seed, i), 16,
                         {}, false);
      z[i] = ensemble_phasor(e, delta1, cfg.tau1);
      laser[i] = cfg.instrument.laserPower(x, y);
    }

  // fixed per-pixel capacitor-bank offsets, identical at both frequencies
  LockInCameraConfig cam = cfg.camera;
  cam.shotNoise = cfg.noise && cfg.camera.shotNoise;
  cam.offsetsSlot1.resize(nPix);
  cam.offsetsSlot2.resize(nPix);
  std::mt19937_64 offRng(derive_seed(cfg.seed, 0x0FF5E7));
  std::uniform_int_distribution<int> offDist(-40, 40);
  for (std::size_t i = 0; i < nPix; ++i) {
    cam.offsetsSlot1[i] = offDist(offRng);
    cam.offsetsSlot2[i] = offDist(offRng);
  }

  const double perFreqSeconds = 0.5 * cfg.durationPerPoint;
  const int nFrames =
      std::max(1, (int)std::lround(perFreqSeconds * cam.frameRate()));

  // exposure means per drive frequency
  auto exposure_means = [&](double extraPhase) {
    std::array<std::vector<double>, 4> f;
    for (auto& v : f) v.resize(nPix);
    for (std::size_t i = 0; i < nPix; ++i) {
      const double phi = std::arg(z[i]) + extraPhase;
      const double mag = std::abs(z[i]);
      const double F = cfg.pixelFlux * laser[i];
      const double s = cfg.contrast * mag * std::sin(phi);
      const double c = cfg.contrast * mag * std::cos(phi);
      f[0][i] = F * (1.0 + s);
      f[1][i] = F * (1.0 - s);
      f[2][i] = F * (1.0 + c);
      f[3][i] = F * (1.0 - c);
    }
    return f;
  };
  const auto mean1 = exposure_means(0.0);
  const auto mean2 = exposure_means(M_PI);  // delta2 adds pi per member

  std::mt19937_64 rng(derive_seed(cfg.seed, 0xCA3));
  std::vector<std::vector<double>> nxSeries(nPix), nySeries(nPix);
  std::vector<double> nxSum(nPix, 0.0), nySum(nPix, 0.0);
  for (int frame = 0; frame < nFrames; ++frame) {
    const DifferenceFrame a =
        lockin_acquire(mean1[0], mean1[1], mean1[2], mean1[3], cam, rng);
    const DifferenceFrame b =
        lockin_acquire(mean2[0], mean2[1], mean2[2], mean2[3], cam, rng);
    for (std::size_t i = 0; i < nPix; ++i) {
      const double dx = a.slot1[i] - b.slot1[i];  // offsets cancel exactly
      const double dy = a.slot2[i] - b.slot2[i];
      nxSeries[i].push_back(dx);
      nySeries[i].push_back(dy);
      nxSum[i] += dx;
      nySum[i] += dy;
    }
  }

  QdmResult res;
  res.map = blank_map(cfg, depth);
  res.map.spacing = pix;
  res.map.originX = cfg.grid.originX;
  res.map.originY = cfg.grid.originY;
  const double phiRef = kTwoPi * delta1 * cfg.tau1;
  const double tauSample = 2.0 / cam.frameRate();  // one frame per frequency
  const SpinStrainCouplings cpl;

  for (std::size_t i = 0; i < nPix; ++i) {
    const double Nx = nxSum[i] / nFrames;
    const double Ny = nySum[i] / nFrames;
    MzReading r = phase_to_mz(Nx, Ny, cfg.tau1, phiRef);

    // per-frame Mz series: scatter -> sigma and a 1 s Allan estimate
    std::vector<double> mzFrames(nFrames);
    for (int fIdx = 0; fIdx < nFrames; ++fIdx)
      mzFrames[fIdx] = phase_to_mz(nxSeries[i][fIdx], nySeries[i][fIdx],
                                   cfg.tau1, phiRef)
                           .mzShift;
    double var = 0.0;
    for (double v : mzFrames) {
      const double d = v - r.mzShift;
      var += d * d;
    }
    var /= std::max(1, nFrames - 1);
    r.sigma = std::sqrt(var / nFrames);
    store_reading(res.map, i, r, std::hypot(Nx, Ny));

    if (nFrames >= 4) {
      const AllanResult ar =
          allan_deviation(mzFrames, tauSample, {tauSample});
      // white-noise extrapolation of the frame-rate Allan point to 1 s
      res.allanAt1s.push_back(ar.sigma[0] * std::sqrt(tauSample) /
                              cpl.weighted);
    }
  }
  apply_amplitude_mask(res.map);

  res.metadata = base_metadata(cfg, "qdm");
  res.metadata["fov_um"] = cfg.fovSizeUm;
  res.metadata["frame_rate_hz"] = cam.frameRate();
  res.metadata["frames_per_frequency"] = nFrames;
  res.metadata["seconds_per_drive_frequency"] = perFreqSeconds;
  res.metadata["acquisition_seconds_per_fov"] = cfg.durationPerPoint;
  res.metadata["realized_seconds_per_fov"] = 2.0 * nFrames / cam.frameRate();
  res.metadata["survey_rate_um2_per_s"] =
      cfg.fovSizeUm * cfg.fovSizeUm / cfg.durationPerPoint;
  return res;
}

// ---------------------------------------------------------------------------
// CW-ODMR imaging

void synth_odmr_spectrum(const ScanConfig& cfg, double mz, std::uint64_t seed,
                         std::vector<double>& freq,
                         std::vector<double>& signal) {
  const NVParams base;
  const double D = base.D;
  const double gamma = base.gamma;

  freq.resize(cfg.odmrPoints);
  for (int i = 0; i < cfg.odmrPoints; ++i)
    freq[i] = D - cfg.odmrSpanHz +
              2.0 * cfg.odmrSpanHz * i / (cfg.odmrPoints - 1.0);

  std::vector<ODMRLine> lines;
  const auto add_pair = [&](double bz, double depthScale) {
    ODMRLine ln;
    ln.width = cfg.odmrLinewidth;
    ln.depth = cfg.odmrContrast * depthScale;
    ln.center = D + mz + gamma * bz;
    lines.push_back(ln);
    ln.center = D + mz - gamma * bz;
    lines.push_back(ln);
  };
  add_pair(cfg.odmrBzAligned, 1.0);
  add_pair(cfg.odmrBzProjection, 3.0);  // three degenerate off-axis classes

  signal.resize(freq.size());
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (std::size_t i = 0; i < freq.size(); ++i) {
    signal[i] = odmr_model(freq[i], lines, cfg.ensemble.hyperfine);
    if (cfg.odmrNoise > 0.0) signal[i] += cfg.odmrNoise * unit(rng);
  }
}

OdmrResult run_odmr_imaging(const ScanConfig& cfg, const StrainField& field) {
  cfg.validate();
  const NVParams base;
  const double gamma = base.gamma;

  OdmrResult res;
  const double depth = cfg.grid.depths.front();
  res.map = blank_map(cfg, depth);

  // seed the fit with the configured bias-field line positions
  const std::vector<double> centers = {
      base.D - gamma * cfg.odmrBzAligned, base.D - gamma * cfg.odmrBzProjection,
      base.D + gamma * cfg.odmrBzProjection,
      base.D + gamma * cfg.odmrBzAligned};

  const SpinStrainCouplings cpl;
  std::vector<double> mzRaw(res.map.size(), 0.0);
  for (int iy = 0; iy < cfg.grid.ny; ++iy)
    for (int ix = 0; ix < cfg.grid.nx; ++ix) {
      const std::size_t i = res.map.index(ix, iy);
      const double x = cfg.grid.originX + ix * cfg.grid.spacing;
      const double y = cfg.grid.originY + iy * cfg.grid.spacing;
      const double mz = mz_from_strain(
          field.at(x, y, depth * cfg.grid.depthAxisScale), cpl);

      std::vector<double> freq, sig;
      synth_odmr_spectrum(cfg, mz, derive_seed(cfg.seed, i), freq, sig);
      const std::vector<double> guess(centers);
      const std::vector<double> noiseSigma(
          freq.size(), cfg.odmrNoise > 0.0 ? cfg.odmrNoise : 1.0);
      const ODMRSpectrum fit =
          fit_odmr(freq, sig, 4, cfg.ensemble.hyperfine, guess, noiseSigma);

      const ODMRPair pair = aligned_pair(fit);
      const MzBz maps = odmr_to_maps(pair.fPlus, pair.fMinus, base.D, gamma);
      mzRaw[i] = maps.mz;
      res.map.sigma[i] =
          0.5 * std::hypot(fit.lines.front().centerSigma,
                           fit.lines.back().centerSigma) /
          cpl.weighted;
      res.map.amplitude[i] = fit.lines.back().depth;
      res.map.mask[i] = fit.converged ? 1 : 0;
      res.chi2PerDof.push_back(fit.chi2PerDof());
    }

  // relative map: subtract the field-of-view mean
  double mean = 0.0;
  long nValid = 0;
  for (std::size_t i = 0; i < res.map.size(); ++i)
    if (res.map.mask[i]) {
      mean += mzRaw[i];
      ++nValid;
    }
  if (nValid > 0) mean /= nValid;
  for (std::size_t i = 0; i < res.map.size(); ++i) {
    res.map.mz[i] = mzRaw[i] - mean;
    res.map.strain[i] = strain_from_mz(res.map.mz[i], cpl);
  }

  res.metadata = base_metadata(cfg, "odmr");
  res.metadata["bz_aligned_t"] = cfg.odmrBzAligned;
  res.metadata["points_per_spectrum"] = cfg.odmrPoints;
  return res;
}

// ---------------------------------------------------------------------------
// Stitching

StitchResult stitch(const std::vector<StrainMap>& fovs,
                    double minOverlapFrac) {
  if (fovs.size() < 2)
    throw std::invalid_argument("stitch: need at least two fields of view");
  const int nf = static_cast<int>(fovs.size());
  const double sp = fovs[0].spacing;
  for (const auto& f : fovs) {
    f.validate();
    if (std::abs(f.spacing - sp) > 1e-9 * sp)
      throw std::invalid_argument("stitch: spacing mismatch");
    const double gx = (f.originX - fovs[0].originX) / sp;
    const double gy = (f.originY - fovs[0].originY) / sp;
    if (std::abs(gx - std::round(gx)) > 1e-6 ||
        std::abs(gy - std::round(gy)) > 1e-6)
      throw std::invalid_argument("stitch: grids not commensurate");
  }

  const auto cellX = [&](const StrainMap& f, int ix) {
    return (long)std::lround((f.originX - fovs[0].originX) / sp) + ix;
  };
  const auto cellY = [&](const StrainMap& f, int iy) {
    return (long)std::lround((f.originY - fovs[0].originY) / sp) + iy;
  };

  // world cell -> contributing (fov, value)
  struct Contribution {
    int fov;
    double strain, mzSigma, amplitude;
  };
  std::map<std::pair<long, long>, std::vector<Contribution>> world;
  for (int k = 0; k < nf; ++k)
    for (int iy = 0; iy < fovs[k].ny; ++iy)
      for (int ix = 0; ix < fovs[k].nx; ++ix) {
        const std::size_t i = fovs[k].index(ix, iy);
        if (!fovs[k].mask[i]) continue;
        world[{cellX(fovs[k], ix), cellY(fovs[k], iy)}].push_back(
            {k, fovs[k].strain[i], fovs[k].sigma[i], fovs[k].amplitude[i]});
      }

  // pairwise overlap statistics
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(nf, nf);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nf);
  std::vector<std::vector<long>> overlapCount(nf, std::vector<long>(nf, 0));
  for (const auto& [cell, list] : world)
    for (std::size_t a = 0; a + 1 < list.size(); ++a)
      for (std::size_t b = a + 1; b < list.size(); ++b) {
        const int i = list[a].fov, j = list[b].fov;
        ++overlapCount[i][j];
        ++overlapCount[j][i];
        lap(i, i) += 1.0;
        lap(j, j) += 1.0;
        lap(i, j) -= 1.0;
        lap(j, i) -= 1.0;
        const double d = list[a].strain - list[b].strain;
        rhs(i) += d;
        rhs(j) -= d;
      }

  // connectivity over qualifying overlaps (>= minOverlapFrac of a FOV)
  std::vector<int> parent(nf);
  std::iota(parent.begin(), parent.end(), 0);
  const std::function<int(int)> find = [&](int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  };
  for (int i = 0; i < nf; ++i)
    for (int j = i + 1; j < nf; ++j) {
      const long need = std::lround(
          minOverlapFrac * std::min(fovs[i].size(), fovs[j].size()));
      if (overlapCount[i][j] >= std::max<long>(1, need))
        parent[find(i)] = find(j);
    }
  for (int i = 1; i < nf; ++i)
    if (find(i) != find(0))
      throw std::runtime_error("stitch: disconnected field-of-view graph");

  // least-squares offsets, gauge fixed by c_0 = 0
  Eigen::MatrixXd lapR = lap.bottomRightCorner(nf - 1, nf - 1);
  Eigen::VectorXd rhsR = rhs.tail(nf - 1);
  Eigen::VectorXd cR = lapR.ldlt().solve(rhsR);
  StitchResult res;
  res.offsets.assign(nf, 0.0);
  for (int i = 1; i < nf; ++i) res.offsets[i] = cR(i - 1);

  // composite bounding box
  long minX = 0, minY = 0, maxX = 0, maxY = 0;
  bool first = true;
  for (const auto& [cell, list] : world) {
    if (first || cell.first < minX) minX = cell.first;
    if (first || cell.first > maxX) maxX = cell.first;
    if (first || cell.second < minY) minY = cell.second;
    if (first || cell.second > maxY) maxY = cell.second;
    first = false;
  }

  const SpinStrainCouplings cpl;
  StrainMap& out = res.composite;
  out.nx = static_cast<int>(maxX - minX + 1);
  out.ny = static_cast<int>(maxY - minY + 1);
  out.originX = fovs[0].originX + minX * sp;
  out.originY = fovs[0].originY + minY * sp;
  out.spacing = sp;
  out.depth = fovs[0].depth;
  out.mz.assign(out.size(), 0.0);
  out.strain.assign(out.size(), 0.0);
  out.sigma.assign(out.size(), 0.0);
  out.amplitude.assign(out.size(), 0.0);
  out.mask.assign(out.size(), 0);

  double seam = 0.0;
  for (const auto& [cell, list] : world) {
    const std::size_t i =
        out.index(static_cast<int>(cell.first - minX),
                  static_cast<int>(cell.second - minY));
    double sum = 0.0, sumSig = 0.0, sumAmp = 0.0;
    double lo = 0.0, hi = 0.0;
    for (std::size_t a = 0; a < list.size(); ++a) {
      const double v = list[a].strain - res.offsets[list[a].fov];
      sum += v;
      sumSig += list[a].mzSigma * list[a].mzSigma;
      sumAmp += list[a].amplitude;
      if (a == 0 || v < lo) lo = v;
      if (a == 0 || v > hi) hi = v;
    }
    if (list.size() > 1) seam = std::max(seam, hi - lo);
    const double k = static_cast<double>(list.size());
    out.strain[i] = sum / k;
    out.mz[i] = -out.strain[i] * cpl.weighted;
    out.sigma[i] = std::sqrt(sumSig) / k;
    out.amplitude[i] = sumAmp / k;
    out.mask[i] = 1;
  }
  res.seamResidual = seam;
  return res;
}

}  // namespace nvsim
