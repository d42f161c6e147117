#pragma once

#include "nvsim/spin.hpp"

#include <vector>

// Pulse sequences (strain-CPMG, single-quantum Ramsey) and their ensemble
// simulation.  A sequence stores everything up to, but not including, the
// readout pi/2 pulse; simulate() applies the four readout phases to the same
// propagated state.

namespace nvsim {

enum class ReadoutPhase { Xplus, Xminus, Yplus, Yminus };

// Tone phase of the readout pi/2 pulse realizing Eq.-(2)-style fringes:
// +X -> fi(1 + A sin), -X -> fi(1 - A sin), +Y/-Y the cosine pair.
double readout_pulse_phase(ReadoutPhase r);

struct Segment {
  enum class Kind { pulse, freeEvolution };
  Kind kind = Kind::freeEvolution;
  Manifold tone = Manifold::minus;  // pulse only
  double duration = 0.0;            // s
  double phase = 0.0;               // pulse tone phase, rad
  double angle = 0.0;               // pulse rotation angle omega_e*t, rad
};

struct PulseSequence {
  std::vector<Segment> segments;
  ReadoutPhase readout = ReadoutPhase::Xplus;
  Manifold readoutTone = Manifold::minus;
  int nSwaps = 0;      // 0 for Ramsey
  double tau = 0.0;    // total free evolution, s
  double tPi = 0.0;    // single-tone pi-pulse duration, s
  double deltaCM = 0.0;
  double deltaDiff = 0.0;
};

PulseSequence build_strain_cpmg(int nSwaps, double tau, double deltaCM,
                                double deltaDiff, double tPi,
                                ReadoutPhase readout);
PulseSequence build_ramsey(double tau, double detuning, double tPi);

struct EnsembleMember {
  NVParams params;
  double weight = 1.0;
  double cmOffset = 0.0;    // common-mode (strain-like) detuning offset, Hz
  double diffOffset = 0.0;  // differential (magnetic-like) offset, Hz
};
using Ensemble = std::vector<EnsembleMember>;

void validate_ensemble(const Ensemble& e);  // weights sum to 1 within 1e-9

struct SimOptions {
  bool idealPulses = true;          // resonant, detuning-free pulses
  double pulseAmplitudeError = 0.0; // multiplicative Rabi error per pulse
  double pulseAmplitudeScale = 1.0; // MW field scale (e.g. depth falloff)
  double numericDtFactor = 5e-3;    // dt = factor / (frequency scale)
};

struct FluorescenceResult {
  double fXplus, fXminus, fYplus, fYminus;
  double fi;
};

FluorescenceResult simulate(const PulseSequence& seq, const Ensemble& ensemble,
                            double contrast, double fi,
                            const SimOptions& opt = {});

struct Trace {
  std::vector<double> x, y, sigma;
};

struct SequenceFamily {
  enum class Kind { strainCpmg, ramsey };
  Kind kind = Kind::strainCpmg;
  int nSwaps = 2;
  double deltaCM = 0.0;
  double deltaDiff = 0.0;
  double tPi = 50e-9;
};

PulseSequence build_sequence(const SequenceFamily& fam, double tau,
                             ReadoutPhase readout);

// Interlaced +X/-X visibility versus tau.
Trace visibility_trace(const SequenceFamily& fam,
                       const std::vector<double>& tauGrid,
                       const Ensemble& ensemble, double contrast, double fi,
                       const SimOptions& opt = {});

// Instantaneous-pulse closed form: the accumulated interferometric phase.
// Strain-CPMG: 2*pi*(deltaCM - cmOffset)*tau + phi0, independent of Bz and
// of differential offsets.  Ramsey: the full single-transition detuning.
double ideal_phase(const PulseSequence& seq, const EnsembleMember& m,
                   double phi0 = 0.0);

// Fast path: ensemble-averaged X visibility from the closed-form phases.
double ideal_visibility(const PulseSequence& seq, const Ensemble& ensemble,
                        double contrast, double phi0 = 0.0);

}  // namespace nvsim
