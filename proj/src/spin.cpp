#include "nvsim/spin.hpp"

#include <cmath>
#include <stdexcept>

namespace nvsim {

namespace {
constexpr std::complex<double> kI{0.0, 1.0};
constexpr double kTwoPi = 2.0 * M_PI;
}  // namespace

std::array<double, 3> SpinState::populations() const {
  return {std::norm(amps(0)), std::norm(amps(1)), std::norm(amps(2))};
}

double SpinState::norm_error() const {
  return std::abs(amps.squaredNorm() - 1.0);
}

void NVParams::validate() const {
  if (D <= 0.0 || gamma <= 0.0)
    throw std::invalid_argument("NVParams: D and gamma must be positive");
  const auto [fp, fm] = transition_frequencies(*this);
  if (fp <= 0.0 || fm <= 0.0)
    throw std::invalid_argument("NVParams: non-positive transition frequency");
}

std::pair<double, double> transition_frequencies(const NVParams& p) {
  const double common = p.D + p.Mz;
  const double split = p.gamma * p.Bz + p.hyperfineOffset;
  return {common + split, common - split};
}

double effective_rabi(const DriveTones& t, double gamma) {
  return gamma * std::hypot(t.ampPlus, t.ampMinus) / (2.0 * std::sqrt(2.0));
}

Mat3c two_tone_rotation(double bPlus, double bMinus, double phasePlus,
                        double phaseMinus, double angle) {
  const double r = std::hypot(bPlus, bMinus);
  if (r <= 0.0)
    throw std::invalid_argument("two_tone_rotation: both amplitudes zero");
  const double up = bPlus / r;
  const double um = bMinus / r;
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  const std::complex<double> ep = std::exp(-kI * phasePlus);
  const std::complex<double> em = std::exp(-kI * phaseMinus);

  Mat3c u;
  u(0, 0) = um * um + up * up * c;
  u(0, 1) = -kI * up * ep * s;
  u(0, 2) = (c - 1.0) * up * um * ep * em;
  u(1, 0) = -kI * up * std::conj(ep) * s;
  u(1, 1) = c;
  u(1, 2) = -kI * um * em * s;
  u(2, 0) = (c - 1.0) * up * um * std::conj(ep) * std::conj(em);
  u(2, 1) = -kI * um * std::conj(em) * s;
  u(2, 2) = up * up + um * um * c;
  return u;
}

Mat3c resonant_propagator(const DriveTones& t, double gamma, double tSec) {
  if (t.deltaCM != 0.0 || t.deltaDiff != 0.0)
    throw std::invalid_argument(
        "resonant_propagator: nonzero detuning, use numeric_propagator");
  if (tSec == 0.0) return Mat3c::Identity();
  const double angle = kTwoPi * effective_rabi(t, gamma) * tSec;
  return two_tone_rotation(t.ampPlus, t.ampMinus, t.phasePlus, t.phaseMinus,
                           angle);
}

Mat3c free_propagator(double deltaPlus, double deltaMinus, double tSec) {
  Mat3c u = Mat3c::Zero();
  u(0, 0) = std::exp(kI * (kTwoPi * deltaPlus * tSec));
  u(1, 1) = 1.0;
  u(2, 2) = std::exp(kI * (kTwoPi * deltaMinus * tSec));
  return u;
}

namespace {

// Rotating-frame generator H/(2pi), Hz, Hermitian.
Mat3c generator(const NVParams& p, const DriveTones& t) {
  const double deltaPlus = t.deltaCM + t.deltaDiff - p.hyperfineOffset;
  const double deltaMinus = t.deltaCM - t.deltaDiff + p.hyperfineOffset;
  const double fePlus = p.gamma * t.ampPlus / (2.0 * std::sqrt(2.0));
  const double feMinus = p.gamma * t.ampMinus / (2.0 * std::sqrt(2.0));

  Mat3c h = Mat3c::Zero();
  h(0, 0) = -deltaPlus;
  h(2, 2) = -deltaMinus;
  h(0, 1) = fePlus * std::exp(-kI * t.phasePlus);
  h(1, 0) = std::conj(h(0, 1));
  h(1, 2) = feMinus * std::exp(-kI * t.phaseMinus);
  h(2, 1) = std::conj(h(1, 2));
  return h;
}

Mat3c stepped_propagator(const Mat3c& h, double tSec, double dt) {
  const long nSteps = std::max<long>(1, std::lround(std::ceil(tSec / dt)));
  const double step = tSec / static_cast<double>(nSteps);

  Eigen::SelfAdjointEigenSolver<Mat3c> es(h);
  const Eigen::Vector3d ev = es.eigenvalues();
  Mat3c phase = Mat3c::Zero();
  for (int k = 0; k < 3; ++k)
    phase(k, k) = std::exp(-kI * (kTwoPi * ev(k) * step));
  const Mat3c uStep = es.eigenvectors() * phase * es.eigenvectors().adjoint();

  Mat3c u = Mat3c::Identity();
  for (long i = 0; i < nSteps; ++i) u = uStep * u;
  return u;
}

}  // namespace

Mat3c numeric_propagator_unchecked(const NVParams& p, const DriveTones& t,
                                   double tSec, double dt) {
  if (tSec == 0.0) return Mat3c::Identity();
  return stepped_propagator(generator(p, t), tSec, dt);
}

Mat3c numeric_propagator(const NVParams& p, const DriveTones& t, double tSec,
                         double dt) {
  if (tSec == 0.0) return Mat3c::Identity();
  if (dt <= 0.0) throw std::invalid_argument("numeric_propagator: dt <= 0");
  const Mat3c h = generator(p, t);
  const double scale = std::max({std::abs(h(0, 0).real()),
                                 std::abs(h(2, 2).real()),
                                 std::abs(h(0, 1)) + std::abs(h(1, 2))});
  if (dt > tSec / 100.0 || (scale > 0.0 && dt > 1.0 / (50.0 * scale)))
    throw std::invalid_argument("numeric_propagator: step size too large");

  const Mat3c u = stepped_propagator(h, tSec, dt);
  const Mat3c uHalf = stepped_propagator(h, tSec, dt / 2.0);
  if ((u - uHalf).cwiseAbs().maxCoeff() > 1e-8)
    throw std::runtime_error("numeric_propagator: step halving not converged");
  return u;
}

SpinState apply_swap(const SpinState& s, Manifold startManifold, int phaseSign,
                     double tPi) {
  if (s.norm_error() > 1e-9)
    throw std::invalid_argument("apply_swap: state not normalized");
  if (tPi <= 0.0) throw std::invalid_argument("apply_swap: tPi <= 0");

  const double halfPi = M_PI / 2.0;
  const double midPhase = (phaseSign < 0) ? M_PI : 0.0;

  Mat3c first, middle;
  if (startManifold == Manifold::minus) {
    first = two_tone_rotation(0.0, 1.0, 0.0, 0.0, halfPi);
    middle = two_tone_rotation(1.0, 0.0, midPhase, 0.0, halfPi);
  } else {
    first = two_tone_rotation(1.0, 0.0, 0.0, 0.0, halfPi);
    middle = two_tone_rotation(0.0, 1.0, 0.0, midPhase, halfPi);
  }
  return {first * (middle * (first * s.amps))};
}

}  // namespace nvsim
