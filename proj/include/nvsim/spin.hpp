#pragma once

#include <Eigen/Dense>

#include <array>
#include <complex>
#include <utility>

// Ground-state NV spin: three levels ordered (|+1>, |0>, |-1>), propagated in
// the frame co-rotating with the two MW drive tones (counter-rotating terms
// dropped).  Frequencies are in Hz throughout, phases in radians.

namespace nvsim {

using Mat3c = Eigen::Matrix3cd;
using Vec3c = Eigen::Vector3cd;

struct SpinState {
  Vec3c amps;  // (c_{+1}, c_0, c_{-1})

  static SpinState ground() { return {{0.0, 1.0, 0.0}}; }
  std::array<double, 3> populations() const;
  double norm_error() const;  // | |c|^2 - 1 |
};

struct NVParams {
  double D = 2.870e9;        // zero-field splitting, Hz
  double Mz = 0.0;           // axial stress shift, Hz
  double gamma = 28.024e9;   // gyromagnetic ratio, Hz/T
  double Bz = 0.0;           // axial bias field, T
  double hyperfineOffset = 0.0;  // effective field shift of one hyperfine line, Hz

  void validate() const;  // throws std::invalid_argument
};

// (f+, f-) of the |0> -> |+1> and |0> -> |-1> transitions.
std::pair<double, double> transition_frequencies(const NVParams& p);

struct DriveTones {
  double ampPlus = 0.0;    // B+, field units (T)
  double ampMinus = 0.0;   // B-, field units (T)
  double phasePlus = 0.0;
  double phaseMinus = 0.0;
  double deltaCM = 0.0;    // common-mode detuning, Hz
  double deltaDiff = 0.0;  // differential detuning, Hz
};

// Effective Rabi rate omega_e/2pi = gamma*sqrt(B+^2+B-^2)/(2*sqrt(2)), Hz.
double effective_rabi(const DriveTones& tones, double gamma);

// Two-tone rotation through angle = omega_e * t (resonant closed form).
// Used directly by the sequence engine for idealized pulses.
Mat3c two_tone_rotation(double bPlus, double bMinus, double phasePlus,
                        double phaseMinus, double angle);

// Analytic resonant propagator.  Requires deltaCM == deltaDiff == 0.
Mat3c resonant_propagator(const DriveTones& tones, double gamma, double t);

// Free evolution in the drive rotating frame: c_{+1} -> exp(+i 2pi dPlus t),
// c_{-1} -> exp(+i 2pi dMinus t), with detunings d = (tone - transition).
Mat3c free_propagator(double deltaPlus, double deltaMinus, double t);

// Fixed-step propagator for arbitrary detunings; each step is the exact
// exponential of the piecewise-constant rotating-frame generator, so the
// result is unitary by construction.  Throws on step-size violation and on
// non-convergence (halving dt moves an element by more than 1e-8).
Mat3c numeric_propagator(const NVParams& p, const DriveTones& tones, double t,
                         double dt);
Mat3c numeric_propagator_unchecked(const NVParams& p, const DriveTones& tones,
                                   double t, double dt);

enum class Manifold { minus, plus };

// pi(-) pi(+) pi(-) swap triplet (mirrored for startManifold == plus).
// phaseSign = -1 adds pi to the phase of the middle tone, flipping the
// rotation axis of the swap.  tPi is the single-tone pi-pulse duration; the
// pulses are taken as resonant.
SpinState apply_swap(const SpinState& s, Manifold startManifold, int phaseSign,
                     double tPi);

}  // namespace nvsim
