// nvscan: virtual NV strain-microscopy experiments from the command line.
//
// Verbs: simulate-confocal, simulate-gradiometry, simulate-qdm,
// simulate-odmr, calibrate, allan, noise-budget, stitch.
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include "nvsim/analysis.hpp"
#include "nvsim/io.hpp"
#include "nvsim/noise.hpp"
#include "nvsim/sample.hpp"
#include "nvsim/scan.hpp"
#include "nvsim/sequence.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

namespace {

using nvsim::ScanConfig;

struct CommonArgs {
  std::string configPath;
  std::uint64_t seed = 0;
  std::string outDir;
  std::string scene;
  // optional overrides; NaN / -1 mean "not set"
  double tau1 = -1.0, deltaCM = std::numeric_limits<double>::quiet_NaN();
  double duration = -1.0, spacing = -1.0;
  int nx = -1, ny = -1;
  std::vector<double> depths;
  bool noNoise = false;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool needsSeed = true) {
  cmd->add_option("--config", a.configPath, "JSON config file");
  auto* seed = cmd->add_option("--seed", a.seed, "RNG seed (decimal)");
  if (needsSeed) seed->required();
  cmd->add_option("--out", a.outDir, "output directory");
  cmd->add_option("--scene", a.scene, "scene JSON file");
  cmd->add_option("--tau1", a.tau1, "evolution time tau1 (s)");
  cmd->add_option("--delta-cm", a.deltaCM, "common-mode detuning (Hz)");
  cmd->add_option("--duration", a.duration, "seconds per point / FOV");
  cmd->add_option("--spacing", a.spacing, "grid spacing (um)");
  cmd->add_option("--nx", a.nx, "grid columns");
  cmd->add_option("--ny", a.ny, "grid rows");
  cmd->add_option("--depths", a.depths, "depth list (um)");
  cmd->add_flag("--no-noise", a.noNoise, "disable detector noise");
}

// Build the run config: file first, then command-line overrides.
ScanConfig make_config(const CommonArgs& a) {
  ScanConfig c;
  if (!a.configPath.empty())
    c = nvsim::load_scan_config(nvsim::read_json(a.configPath));
  c.seed = a.seed;
  c.seedSet = true;
  if (!a.outDir.empty()) c.outputDir = a.outDir;
  if (!a.scene.empty()) c.scenePath = a.scene;
  if (a.tau1 > 0.0) c.tau1 = a.tau1;
  if (!std::isnan(a.deltaCM)) c.deltaCM = a.deltaCM;
  if (a.duration > 0.0) c.durationPerPoint = a.duration;
  if (a.spacing > 0.0) c.grid.spacing = a.spacing;
  if (a.nx > 0) c.grid.nx = a.nx;
  if (a.ny > 0) c.grid.ny = a.ny;
  if (!a.depths.empty()) c.grid.depths = a.depths;
  if (a.noNoise) c.noise = false;
  c.validate();
  return c;
}

nvsim::StrainField load_field(const ScanConfig& c) {
  if (c.scenePath.empty()) return nvsim::StrainField{};
  return nvsim::load_scene(c.scenePath);
}

std::string out_path(const ScanConfig& c, const std::string& name) {
  std::filesystem::create_directories(c.outputDir);
  return (std::filesystem::path(c.outputDir) / name).string();
}

void write_maps(const ScanConfig& c, const std::vector<nvsim::StrainMap>& maps,
                nlohmann::json meta) {
  std::vector<std::string> files;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "map_%03zu.csv", i);
    nvsim::write_strain_map_csv(maps[i], out_path(c, name));
    files.push_back(name);
    std::snprintf(name, sizeof(name), "map_%03zu.pgm", i);
    nvsim::write_pgm16(maps[i], maps[i].strain, out_path(c, name));
  }
  meta["map_files"] = files;
  nvsim::write_json(meta, out_path(c, "run.json"));
}

int run_confocal(const CommonArgs& a) {
  const ScanConfig c = make_config(a);
  const auto res = nvsim::run_confocal_scan(c, load_field(c));
  write_maps(c, res.maps, res.metadata);
  std::cout << "confocal: " << res.maps.size() << " depth slice(s) -> "
            << c.outputDir << "\n";
  return 0;
}

int run_gradiometry(const CommonArgs& a) {
  const ScanConfig c = make_config(a);
  const auto res = nvsim::run_gradiometry_scan(c, load_field(c));
  nvsim::write_trace_csv(res.driftLog, out_path(c, "drift_log.csv"), "t_s",
                         "servo_hz");
  write_maps(c, res.maps, res.metadata);
  std::cout << "gradiometry: " << res.maps.size() << " depth slice(s) -> "
            << c.outputDir << "\n";
  return 0;
}

int run_qdm(const CommonArgs& a) {
  const ScanConfig c = make_config(a);
  const auto res = nvsim::run_qdm_imaging(c, load_field(c));
  nvsim::write_strain_map_csv(res.map, out_path(c, "map_000.csv"));
  nvsim::write_pgm16(res.map, res.map.strain, out_path(c, "map_000.pgm"));
  nvsim::write_pgm16(res.map, res.map.amplitude,
                     out_path(c, "amplitude_000.pgm"));
  {
    std::ofstream os(out_path(c, "allan_1s_histogram.csv"));
    os << "allan_strain_at_1s\n";
    for (double v : res.allanAt1s) os << nvsim::format_double(v) << '\n';
  }
  nlohmann::json meta = res.metadata;
  meta["map_files"] = {"map_000.csv"};
  nvsim::write_json(meta, out_path(c, "run.json"));
  std::cout << "qdm: " << res.map.nx << "x" << res.map.ny << " pixels -> "
            << c.outputDir << "\n";
  return 0;
}

int run_odmr(const CommonArgs& a) {
  const ScanConfig c = make_config(a);
  const auto res = nvsim::run_odmr_imaging(c, load_field(c));
  nvsim::write_strain_map_csv(res.map, out_path(c, "map_000.csv"));
  {
    std::ofstream os(out_path(c, "chi2_map.csv"));
    os << "chi2_per_dof\n";
    for (double v : res.chi2PerDof) os << nvsim::format_double(v) << '\n';
  }
  nlohmann::json meta = res.metadata;
  meta["map_files"] = {"map_000.csv"};
  nvsim::write_json(meta, out_path(c, "run.json"));
  std::cout << "odmr: " << res.map.nx << "x" << res.map.ny << " pixels -> "
            << c.outputDir << "\n";
  return 0;
}

int run_calibrate(const CommonArgs& a, double spanHz, int points) {
  const ScanConfig c = make_config(a);
  const nvsim::Ensemble e = nvsim::bath_ensemble(c.ensemble, false);

  nvsim::SequenceFamily fam;
  fam.kind = nvsim::SequenceFamily::Kind::strainCpmg;
  fam.nSwaps = c.nSwaps;
  fam.tPi = c.tPi;
  fam.deltaDiff = c.deltaDiff;

  nvsim::Trace trace;
  for (int i = 0; i < points; ++i) {
    const double d = -spanHz + 2.0 * spanHz * i / (points - 1.0);
    fam.deltaCM = d;
    const auto seq =
        nvsim::build_sequence(fam, c.tau1, nvsim::ReadoutPhase::Xplus);
    trace.x.push_back(d);
    trace.y.push_back(nvsim::ideal_visibility(seq, e, c.contrast));
  }
  const auto curve = nvsim::fit_calibration(trace, c.tau1);
  if (curve.amplitude < 0.05 * c.contrast)
    throw std::runtime_error(
        "calibrate: fringe amplitude collapsed (dephasing too strong for "
        "this tau1)");

  nvsim::write_trace_csv(trace, out_path(c, "calibration.csv"), "delta_cm_hz",
                         "visibility");
  nlohmann::json meta;
  meta["mode"] = "calibrate";
  meta["seed"] = c.seed;
  meta["tau1_s"] = c.tau1;
  meta["amplitude"] = curve.amplitude;
  meta["phi0_rad"] = curve.phi0;
  meta["period_hz"] = curve.period;
  meta["config_hash"] =
      nvsim::config_hash(nvsim::scan_config_to_json(c).dump());
  nvsim::write_json(meta, out_path(c, "calibration.json"));
  std::cout << "calibrate: amplitude " << curve.amplitude << ", period "
            << curve.period << " Hz -> " << c.outputDir << "\n";
  return 0;
}

int run_allan(const CommonArgs& a, double totalTime) {
  const ScanConfig c = make_config(a);
  const auto series =
      nvsim::run_gradiometry_series(c, load_field(c), totalTime);
  const auto taus =
      nvsim::default_allan_taus(series.singleMz.size(), series.sampleInterval);
  const auto single =
      nvsim::allan_deviation(series.singleMz, series.sampleInterval, taus);
  const auto gradio =
      nvsim::allan_deviation(series.gradioMz, series.sampleInterval, taus);
  nvsim::write_allan_csv(single, out_path(c, "allan_single.csv"));
  nvsim::write_allan_csv(gradio, out_path(c, "allan_gradiometry.csv"));
  nvsim::write_trace_csv(series.driftLog, out_path(c, "drift_log.csv"), "t_s",
                         "servo_hz");
  std::cout << "allan: " << taus.size() << " averaging times -> "
            << c.outputDir << "\n";
  return 0;
}

int run_noise_budget(const CommonArgs& a) {
  ScanConfig c;
  if (!a.configPath.empty())
    c = nvsim::load_scan_config(nvsim::read_json(a.configPath));
  c.seedSet = true;  // the report is deterministic; no RNG involved
  std::cout << nvsim::noise_budget_report(c.apd, c.opticalPower, c.fi, c.fi);
  const nvsim::NoiseBudget b = nvsim::apd_noise(c.apd, c.opticalPower);
  const double sigmaNu = nvsim::visibility_uncertainty(b, c.fi, c.fi);
  const double floorHz = nvsim::strain_noise_floor(
      sigmaNu, c.tau1, c.contrast, c.repRate, 1.0);
  const nvsim::SpinStrainCouplings cpl;
  std::cout << "  strain floor         "
            << floorHz / cpl.weighted << " /sqrt(Hz)\n";
  return 0;
}

int run_stitch(const std::vector<std::string>& files,
               const std::string& outDir) {
  std::vector<nvsim::StrainMap> fovs;
  for (const auto& f : files) fovs.push_back(nvsim::read_strain_map_csv(f));
  const auto res = nvsim::stitch(fovs);
  std::filesystem::create_directories(outDir);
  nvsim::write_strain_map_csv(
      res.composite, (std::filesystem::path(outDir) / "composite.csv").string());
  nlohmann::json meta;
  meta["mode"] = "stitch";
  meta["inputs"] = files;
  meta["offsets_strain"] = res.offsets;
  meta["seam_residual_strain"] = res.seamResidual;
  nvsim::write_json(meta,
                    (std::filesystem::path(outDir) / "stitch.json").string());
  std::cout << "stitch: " << files.size() << " FOVs, seam residual "
            << res.seamResidual << " -> " << outDir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"NV-diamond strain interferometry simulator"};
  app.require_subcommand(1);

  CommonArgs confocalA, gradioA, qdmA, odmrA, calibA, allanA, budgetA;
  double calibSpan = 60e3;
  int calibPoints = 121;
  double allanTime = 600.0;
  std::vector<std::string> stitchFiles;
  std::string stitchOut = ".";

  add_common(app.add_subcommand("simulate-confocal", "3D confocal strain scan"),
             confocalA);
  add_common(
      app.add_subcommand("simulate-gradiometry", "drift-rejecting scan"),
      gradioA);
  add_common(app.add_subcommand("simulate-qdm", "widefield lock-in imaging"),
             qdmA);
  add_common(app.add_subcommand("simulate-odmr", "CW-ODMR imaging"), odmrA);
  auto* calib =
      app.add_subcommand("calibrate", "visibility vs detuning calibration");
  add_common(calib, calibA);
  calib->add_option("--span", calibSpan, "detuning sweep half-width (Hz)");
  calib->add_option("--points", calibPoints, "sweep points");
  auto* allanCmd =
      app.add_subcommand("allan", "fixed-position stability series");
  add_common(allanCmd, allanA);
  allanCmd->add_option("--total-time", allanTime, "series length (s)");
  auto* budget = app.add_subcommand("noise-budget", "APD noise budget report");
  add_common(budget, budgetA, /*needsSeed=*/false);
  auto* st = app.add_subcommand("stitch", "merge overlapping FOV maps");
  st->add_option("--inputs", stitchFiles, "FOV map CSV files")->required();
  st->add_option("--out", stitchOut, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand("simulate-confocal")) return run_confocal(confocalA);
    if (app.got_subcommand("simulate-gradiometry"))
      return run_gradiometry(gradioA);
    if (app.got_subcommand("simulate-qdm")) return run_qdm(qdmA);
    if (app.got_subcommand("simulate-odmr")) return run_odmr(odmrA);
    if (app.got_subcommand("calibrate"))
      return run_calibrate(calibA, calibSpan, calibPoints);
    if (app.got_subcommand("allan")) return run_allan(allanA, allanTime);
    if (app.got_subcommand("noise-budget")) return run_noise_budget(budgetA);
    if (app.got_subcommand("stitch")) return run_stitch(stitchFiles, stitchOut);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    const bool configish = msg.find("unknown key") != std::string::npos ||
                           msg.find("cannot open") != std::string::npos ||
                           msg.find("config") != std::string::npos;
    std::cerr << (configish ? "config error: " : "numerical failure: ") << msg
              << "\n";
    return configish ? 2 : 3;
  }
  return 2;
}
