#pragma once

#include "nvsim/analysis.hpp"
#include "nvsim/noise.hpp"
#include "nvsim/sample.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

// Virtual experiments: confocal 3D scanning, gradiometry, widefield (lock-in
// camera) imaging, CW-ODMR imaging, and field-of-view stitching.  Every run
// is deterministic for a fixed config + seed; acquisition times in metadata
// are computed from sequence/camera timing, never wall clock.

namespace nvsim {

struct GridSpec {
  double originX = 0.0, originY = 0.0;  // um
  double spacing = 1.0;                 // um
  int nx = 16, ny = 16;
  std::vector<double> depths{0.0};      // um, apparent focus depths
  double depthAxisScale = 2.4;          // refraction: true depth / apparent
};

struct ScanConfig {
  std::string scenePath;
  GridSpec grid;

  // interferometry sequence
  double tau1 = 21e-6;     // s
  int nSwaps = 2;
  double deltaCM = 0.0;    // operating common-mode detuning, Hz
  double deltaDiff = 0.0;
  double tPi = 50e-9;      // s
  double contrast = 0.01;  // fringe contrast A
  double fi = 5.2e-3;      // per-channel fluorescence signal, V

  double repRate = 3.8e3;          // sequence repetitions / s
  double durationPerPoint = 1.0;   // s of acquisition per scan point
  bool noise = true;               // detector noise on/off
  std::uint64_t seed = 0;
  bool seedSet = false;
  std::string outputDir = ".";

  EnsembleSpec ensemble;
  ConfocalPSF psf;
  InstrumentProfiles instrument;
  APDConfig apd;
  double opticalPower = 0.46e-9;  // W reaching the APD

  // widefield camera
  LockInCameraConfig camera;
  double fovSizeUm = 150.0;
  double pixelFlux = 2000.0;  // photoelectrons / exposure at beam center

  // gradiometry
  double refX = 0.0, refY = 0.0, refZ = 0.0;  // um
  double servoGain = 0.1;                     // reference EMA weight

  // CW-ODMR
  double odmrBzAligned = 2.1e-3;     // T
  double odmrBzProjection = 0.75e-3; // T, the three other classes
  double odmrLinewidth = 1e6;        // Hz FWHM
  double odmrContrast = 0.02;
  double odmrSpanHz = 260e6;         // sweep half-width about D
  int odmrPoints = 601;
  double odmrNoise = 0.0;            // additive Gaussian sigma per point

  void validate() const;  // throws std::invalid_argument
};

// Strict-schema JSON config; unknown keys anywhere are an error.
ScanConfig load_scan_config(const nlohmann::json& j);
nlohmann::json scan_config_to_json(const ScanConfig& c);

struct ScanResult {
  std::vector<StrainMap> maps;  // one per depth
  nlohmann::json metadata;
};

// Per-point voxel ensemble -> interferometry fringes -> APD noise -> Mz via
// the quadrature (XY) phase.  Depth scans stay valid because the XY
// normalization removes the MW depth falloff from the signal amplitude.
ScanResult run_confocal_scan(const ScanConfig& cfg, const StrainField& field);

struct GradiometryResult {
  std::vector<StrainMap> maps;
  Trace driftLog;  // time vs servo correction, Hz
  nlohmann::json metadata;
};

// Alternating reference / scan-point measurements; the measured reference
// shift is servoed away, rejecting common temporal drift.
GradiometryResult run_gradiometry_scan(const ScanConfig& cfg,
                                       const StrainField& field);

struct GradiometrySeries {
  std::vector<double> singleMz;  // Hz, full dwell at the scan point
  std::vector<double> gradioMz;  // Hz, drift-corrected alternating scheme
  double sampleInterval = 0.0;   // s
  Trace driftLog;
};

// Fixed-position time series for stability analysis: a plain single-position
// channel and the gradiometry channel, equal wall-clock time per sample.
GradiometrySeries run_gradiometry_series(const ScanConfig& cfg,
                                         const StrainField& field,
                                         double totalTime);

struct QdmResult {
  StrainMap map;
  std::vector<double> allanAt1s;  // per-pixel estimate, masked cells skipped
  nlohmann::json metadata;
};

// Lock-in camera widefield imaging.  Frames are acquired at two drive
// frequencies half a fringe apart; subtracting them cancels the fixed
// per-pixel offsets bit-exactly and doubles the fringe signal.
QdmResult run_qdm_imaging(const ScanConfig& cfg, const StrainField& field);

struct OdmrResult {
  StrainMap map;                    // aligned-class Mz / strain, FOV-relative
  std::vector<double> chi2PerDof;   // per pixel
  nlohmann::json metadata;
};

OdmrResult run_odmr_imaging(const ScanConfig& cfg, const StrainField& field);

// Synthesize one CW-ODMR spectrum (all four NV classes, hyperfine triplets).
void synth_odmr_spectrum(const ScanConfig& cfg, double mz,
                         std::uint64_t seed, std::vector<double>& freq,
                         std::vector<double>& signal);

struct StitchResult {
  StrainMap composite;
  std::vector<double> offsets;  // removed per-FOV constants (strain units)
  double seamResidual = 0.0;    // max |overlap disagreement| after removal
};

// Estimate per-FOV constant offsets by least squares on overlapping cells
// (>= minOverlapFrac of a FOV area) and merge onto a common grid.  Grids
// must share spacing and be commensurate; a disconnected overlap graph is
// an error.
StitchResult stitch(const std::vector<StrainMap>& fovs,
                    double minOverlapFrac = 0.1);

}  // namespace nvsim
