#pragma once

#include "nvsim/fit.hpp"
#include "nvsim/sequence.hpp"

#include <optional>
#include <string>
#include <vector>

// Analysis chain from raw fluorescence to calibrated strain: visibility and
// XY normalization, envelope/calibration fitting, visibility -> Mz
// conversion, overlapping Allan deviation, and CW-ODMR line fitting.

namespace nvsim {

// --- visibility ------------------------------------------------------------

// nu = (f+ - f-)/(f+ + f-).
double visibility(double fPlus, double fMinus);

struct XYVisibility {
  double nu = 0.0;               // sin(phase) for ideal inputs
  double fringeAmplitude = 0.0;  // sqrt(dX^2 + dY^2) = 2 fi A e^{-tau/TD}
  bool measurable = true;        // false when the amplitude vanishes
};

// Amplitude-free normalization from the four readout phases.
XYVisibility xy_visibility(double fXplus, double fXminus, double fYplus,
                           double fYminus);

// --- trace fitting ---------------------------------------------------------

struct EnvelopeFit {
  double amplitude = 0.0;  // A
  double decayTime = 0.0;  // s
  double detuning = 0.0;   // Hz
  double phi0 = 0.0;       // rad
  FitResult fit;
};

// nu(tau) = A exp(-tau/T) sin(2 pi delta tau + phi0).  Multi-start over
// phase and a coarse frequency scan seed the optimizer.
EnvelopeFit fit_envelope(const Trace& trace);

struct CalibrationCurve {
  double amplitude = 0.0;  // A e^{-tau1/TD}
  double tau1 = 0.0;       // s
  double phi0 = 0.0;       // rad, phase at zero detuning
  double period = 0.0;     // Hz, fitted oscillation period (≈ 1/tau1)
  Eigen::MatrixXd fitCovariance;

  void validate() const;  // amplitude > 0, tau1 > 0
};

// nu(delta) at fixed tau1: sinusoid with period fixed to 1/tau1, refined
// within +/-2%.
CalibrationCurve fit_calibration(const Trace& trace, double tau1);

// --- visibility -> Mz ------------------------------------------------------

struct MzReading {
  double mzShift = 0.0;  // Hz relative to the reference
  double sigma = 0.0;    // Hz, propagated from sigmaNu when provided
  bool outOfRange = false;   // |nu| exceeded the calibration amplitude
  bool ambiguous = false;    // |shift| >= 1/(2 tau1): outside one fringe
};

// Invert nu through the calibration curve on the monotonic branch around
// the operating point (phase phi0 + 2 pi * reference * tau1).
MzReading visibility_to_mz(double nu, const CalibrationCurve& curve,
                           double reference = 0.0, double sigmaNu = 0.0);

// Quadrature path: delta Mz = -(phi - phiRef)/(2 pi tau1) from
// atan2(nuXY_sin, nuXY_cos); wraps are flagged, never silently unwrapped.
MzReading phase_to_mz(double dX, double dY, double tau1, double phiRef,
                      double sigmaNu = 0.0, double fringeAmplitude = 1.0);

// Two evolution times resolve the 2 pi ambiguity of the longer one: the
// shorter-tau reading selects the fringe index.
double disambiguate_mz(const MzReading& coarse, double tauCoarse,
                       const MzReading& fine, double tauFine);

// --- Allan deviation -------------------------------------------------------

struct AllanResult {
  std::vector<double> tau;       // s
  std::vector<double> sigma;     // overlapping Allan deviation
  std::vector<double> ciLower;   // 1-sigma chi^2 confidence bounds
  std::vector<double> ciUpper;
  std::vector<long> pairs;       // estimator count per tau
};

AllanResult allan_deviation(const std::vector<double>& series,
                            double sampleInterval,
                            const std::vector<double>& tauList);

// Default log-spaced tau grid (~10 per decade up to n/2 samples).
std::vector<double> default_allan_taus(std::size_t n, double sampleInterval);

// --- CW-ODMR ---------------------------------------------------------------

struct ODMRLine {
  double center = 0.0;  // Hz, hyperfine-triplet center
  double width = 0.0;   // Hz FWHM
  double depth = 0.0;   // fractional contrast per hyperfine component
  double centerSigma = 0.0;  // Hz, fit standard error of the center
};

struct ODMRSpectrum {
  std::vector<double> frequency;  // Hz, strictly ascending
  std::vector<double> signal;     // normalized fluorescence
  std::vector<ODMRLine> lines;    // fitted, sorted by center
  double chi2 = 0.0;
  int dof = 0;
  bool converged = false;
  bool overlapFlag = false;  // unresolved neighbouring lines

  double chi2PerDof() const { return dof > 0 ? chi2 / dof : chi2; }
  void validate() const;  // ascending frequencies, matched lengths
};

// Multi-Lorentzian fit: nTransitions triplet-split lines (hyperfine
// splitting fixed), centers seeded from the deepest local minima.
ODMRSpectrum fit_odmr(const std::vector<double>& frequency,
                      const std::vector<double>& signal, int nTransitions,
                      double hyperfine,
                      const std::vector<double>& centerGuess = {},
                      const std::vector<double>& sigma = {});

// Model evaluation for synthesis and residual checks.
double odmr_model(double f, const std::vector<ODMRLine>& lines,
                  double hyperfine);

// Aligned-class pair = widest splitting among fitted centers.
struct ODMRPair {
  double fPlus = 0.0, fMinus = 0.0;
};
ODMRPair aligned_pair(const ODMRSpectrum& spectrum);

// Mz = (f+ + f-)/2 - D;  Bz = (f+ - f-)/(2 gamma).
struct MzBz {
  double mz = 0.0;  // Hz
  double bz = 0.0;  // T
};
MzBz odmr_to_maps(double fPlus, double fMinus, double D,
                  double gamma = 28.024e9);

// --- spectra / peak counting ----------------------------------------------

// |DFT| of an evenly sampled trace at the given frequencies.
std::vector<double> amplitude_spectrum(const std::vector<double>& x,
                                       const std::vector<double>& y,
                                       const std::vector<double>& freqs);

// Strict local maxima above thresholdFrac * max(values).
int count_peaks(const std::vector<double>& values, double thresholdFrac = 0.2);

// --- maps ------------------------------------------------------------------

struct StrainMap {
  int nx = 0, ny = 0;
  double originX = 0.0, originY = 0.0;  // um
  double spacing = 0.0;                 // um
  double depth = 0.0;                   // um
  std::vector<double> mz;               // Hz, row-major y-outer
  std::vector<double> strain;
  std::vector<double> sigma;            // strain uncertainty
  std::vector<double> amplitude;        // fringe amplitude (nuXY denominator)
  std::vector<char> mask;               // 1 = valid cell

  std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }
  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * nx + ix;
  }
  void validate() const;
};

// Mask cells whose fringe amplitude is below frac * median(amplitude).
void apply_amplitude_mask(StrainMap& map, double frac = 0.2);

}  // namespace nvsim
