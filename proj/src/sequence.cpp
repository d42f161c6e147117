#include "nvsim/sequence.hpp"

#include "nvsim/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace nvsim {

namespace {
constexpr double kTwoPi = 2.0 * M_PI;
constexpr double kHalfPi = M_PI / 2.0;

Segment pulse(Manifold tone, double angle, double phase, double duration) {
  Segment s;
  s.kind = Segment::Kind::pulse;
  s.tone = tone;
  s.angle = angle;
  s.phase = phase;
  s.duration = duration;
  return s;
}

Segment free_seg(double duration) {
  Segment s;
  s.kind = Segment::Kind::freeEvolution;
  s.duration = duration;
  return s;
}

}  // namespace

double readout_pulse_phase(ReadoutPhase r) {
  switch (r) {
    case ReadoutPhase::Xplus: return -kHalfPi;
    case ReadoutPhase::Xminus: return kHalfPi;
    case ReadoutPhase::Yplus: return M_PI;
    case ReadoutPhase::Yminus: return 0.0;
  }
  return 0.0;
}

PulseSequence build_strain_cpmg(int nSwaps, double tau, double deltaCM,
                                double deltaDiff, double tPi,
                                ReadoutPhase readout) {
  if (nSwaps < 2 || nSwaps % 2 != 0)
    throw std::invalid_argument("build_strain_cpmg: nSwaps must be even, >= 2");
  if (tPi <= 0.0) throw std::invalid_argument("build_strain_cpmg: tPi <= 0");
  if (tau <= nSwaps * 3.0 * tPi)
    throw std::invalid_argument("build_strain_cpmg: tau too short for pulses");

  PulseSequence seq;
  seq.nSwaps = nSwaps;
  seq.tau = tau;
  seq.tPi = tPi;
  seq.deltaCM = deltaCM;
  seq.deltaDiff = deltaDiff;
  seq.readout = readout;
  seq.readoutTone = Manifold::minus;

  seq.segments.push_back(pulse(Manifold::minus, M_PI / 4.0, 0.0, tPi / 2.0));
  const double interval = tau / nSwaps;
  for (int k = 0; k < nSwaps; ++k) {
    seq.segments.push_back(free_seg(interval));
    // swap triplet leaving the manifold the spins were just evolving in
    const Manifold from = (k % 2 == 0) ? Manifold::minus : Manifold::plus;
    const Manifold other = (from == Manifold::minus) ? Manifold::plus
                                                     : Manifold::minus;
    seq.segments.push_back(pulse(from, kHalfPi, 0.0, tPi));
    seq.segments.push_back(pulse(other, kHalfPi, 0.0, tPi));
    seq.segments.push_back(pulse(from, kHalfPi, 0.0, tPi));
  }
  return seq;
}

PulseSequence build_ramsey(double tau, double detuning, double tPi) {
  if (tPi <= 0.0 || tau <= tPi)
    throw std::invalid_argument("build_ramsey: invalid durations");
  PulseSequence seq;
  seq.nSwaps = 0;
  seq.tau = tau;
  seq.tPi = tPi;
  seq.deltaCM = detuning;
  seq.deltaDiff = 0.0;
  seq.readout = ReadoutPhase::Xplus;
  seq.readoutTone = Manifold::plus;
  seq.segments.push_back(pulse(Manifold::plus, M_PI / 4.0, 0.0, tPi / 2.0));
  seq.segments.push_back(free_seg(tau));
  return seq;
}

PulseSequence build_sequence(const SequenceFamily& fam, double tau,
                             ReadoutPhase readout) {
  if (fam.kind == SequenceFamily::Kind::strainCpmg) {
    return build_strain_cpmg(fam.nSwaps, tau, fam.deltaCM, fam.deltaDiff,
                             fam.tPi, readout);
  }
  PulseSequence seq = build_ramsey(tau, fam.deltaCM, fam.tPi);
  seq.readout = readout;
  return seq;
}

void validate_ensemble(const Ensemble& e) {
  if (e.empty()) throw std::invalid_argument("ensemble is empty");
  double w = 0.0;
  for (const auto& m : e) w += m.weight;
  if (std::abs(w - 1.0) > 1e-9)
    throw std::invalid_argument("ensemble weights do not sum to 1");
}

namespace {

struct MemberDetunings {
  double deltaPlus, deltaMinus;
};

MemberDetunings member_detunings(const PulseSequence& seq,
                                 const EnsembleMember& m) {
  const double cm = seq.deltaCM - m.cmOffset;
  const double diff = seq.deltaDiff - m.diffOffset - m.params.hyperfineOffset;
  return {cm + diff, cm - diff};
}

Vec3c apply_pulse(const Vec3c& amps, const Segment& s,
                  const MemberDetunings& d, const EnsembleMember& m,
                  const SimOptions& opt) {
  const double scale = opt.pulseAmplitudeScale * (1.0 + opt.pulseAmplitudeError);
  if (opt.idealPulses) {
    const double bPlus = (s.tone == Manifold::plus) ? 1.0 : 0.0;
    const double phasePlus = (s.tone == Manifold::plus) ? s.phase : 0.0;
    const double phaseMinus = (s.tone == Manifold::minus) ? s.phase : 0.0;
    return two_tone_rotation(bPlus, 1.0 - bPlus, phasePlus, phaseMinus,
                             s.angle * scale) *
           amps;
  }
  // finite pulse: detunings act during the drive
  const double fe = s.angle / (kTwoPi * s.duration);  // Hz
  const double b = fe * 2.0 * std::sqrt(2.0) / m.params.gamma * scale;
  DriveTones tones;
  tones.deltaCM = 0.5 * (d.deltaPlus + d.deltaMinus);
  tones.deltaDiff = 0.5 * (d.deltaPlus - d.deltaMinus);
  if (s.tone == Manifold::plus) {
    tones.ampPlus = b;
    tones.phasePlus = s.phase;
  } else {
    tones.ampMinus = b;
    tones.phaseMinus = s.phase;
  }
  NVParams p = m.params;
  p.hyperfineOffset = 0.0;  // folded into the detunings above
  const double freqScale =
      std::max({std::abs(tones.deltaCM) + std::abs(tones.deltaDiff), fe, 1.0});
  const double dt = opt.numericDtFactor / freqScale;
  return numeric_propagator_unchecked(p, tones, s.duration, dt) * amps;
}

}  // namespace

FluorescenceResult simulate(const PulseSequence& seq, const Ensemble& ensemble,
                            double contrast, double fi, const SimOptions& opt) {
  validate_ensemble(ensemble);

  double p0[4] = {0.0, 0.0, 0.0, 0.0};
  for (const auto& m : ensemble) {
    const MemberDetunings d = member_detunings(seq, m);
    Vec3c amps = SpinState::ground().amps;
    for (const auto& s : seq.segments) {
      if (s.kind == Segment::Kind::freeEvolution)
        amps = free_propagator(d.deltaPlus, d.deltaMinus, s.duration) * amps;
      else
        amps = apply_pulse(amps, s, d, m, opt);
    }
    // one readout pi/2 per phase on the shared propagated state
    const ReadoutPhase phases[4] = {ReadoutPhase::Xplus, ReadoutPhase::Xminus,
                                    ReadoutPhase::Yplus, ReadoutPhase::Yminus};
    for (int k = 0; k < 4; ++k) {
      Segment ro = seq.segments.front();  // reuse pi/2 geometry
      ro.kind = Segment::Kind::pulse;
      ro.tone = seq.readoutTone;
      ro.angle = M_PI / 4.0;
      ro.phase = readout_pulse_phase(phases[k]);
      ro.duration = seq.tPi / 2.0;
      const Vec3c fin = apply_pulse(amps, ro, d, m, opt);
      p0[k] += m.weight * std::norm(fin(1));
    }
  }

  FluorescenceResult r;
  r.fi = fi;
  r.fXplus = fi * (1.0 + contrast * (2.0 * p0[0] - 1.0));
  r.fXminus = fi * (1.0 + contrast * (2.0 * p0[1] - 1.0));
  r.fYplus = fi * (1.0 + contrast * (2.0 * p0[2] - 1.0));
  r.fYminus = fi * (1.0 + contrast * (2.0 * p0[3] - 1.0));
  return r;
}

Trace visibility_trace(const SequenceFamily& fam,
                       const std::vector<double>& tauGrid,
                       const Ensemble& ensemble, double contrast, double fi,
                       const SimOptions& opt) {
  for (std::size_t i = 1; i < tauGrid.size(); ++i)
    if (tauGrid[i] <= tauGrid[i - 1])
      throw std::invalid_argument("visibility_trace: tau grid not ascending");

  Trace t;
  t.x = tauGrid;
  t.y.resize(tauGrid.size());
  t.sigma.assign(tauGrid.size(), 0.0);
  for (std::size_t i = 0; i < tauGrid.size(); ++i) {
    const PulseSequence seq =
        build_sequence(fam, tauGrid[i], ReadoutPhase::Xplus);
    const FluorescenceResult f = simulate(seq, ensemble, contrast, fi, opt);
    t.y[i] = (f.fXplus - f.fXminus) / (f.fXplus + f.fXminus);
  }
  return t;
}

double ideal_phase(const PulseSequence& seq, const EnsembleMember& m,
                   double phi0) {
  if (seq.nSwaps > 0)
    return kTwoPi * (seq.deltaCM - m.cmOffset) * seq.tau + phi0;
  return kTwoPi * member_detunings(seq, m).deltaPlus * seq.tau + phi0;
}

double ideal_visibility(const PulseSequence& seq, const Ensemble& ensemble,
                        double contrast, double phi0) {
  validate_ensemble(ensemble);
  std::vector<double> f(ensemble.size()), w(ensemble.size());
  for (std::size_t i = 0; i < ensemble.size(); ++i) {
    const auto& m = ensemble[i];
    f[i] = (seq.nSwaps > 0) ? seq.deltaCM - m.cmOffset
                            : member_detunings(seq, m).deltaPlus;
    w[i] = m.weight;
  }
  const auto z =
      kernels::active().phasor_sum(f.data(), w.data(), f.size(), seq.tau, phi0);
  return contrast * z.imag();
}

}  // namespace nvsim
