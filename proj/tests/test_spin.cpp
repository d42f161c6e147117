#include <doctest.h>

#include "nvsim/spin.hpp"

#include <cmath>
#include <random>

using namespace nvsim;

namespace {

double unitarity_error(const Mat3c& u) {
  return (u.adjoint() * u - Mat3c::Identity()).cwiseAbs().maxCoeff();
}

double max_diff(const Mat3c& a, const Mat3c& b) {
  return (a - b).cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("transition frequencies") {
  NVParams p;
  SUBCASE("zero-field degeneracy") {
    const auto [fp, fm] = transition_frequencies(p);
    CHECK(fp == doctest::Approx(2.87e9));
    CHECK(fm == doctest::Approx(2.87e9));
  }
  SUBCASE("aligned bias at 2.1 mT with a 1 MHz stress shift") {
    p.Mz = 1e6;
    p.Bz = 2.1e-3;
    const auto [fp, fm] = transition_frequencies(p);
    CHECK(fp == doctest::Approx(2.92988e9).epsilon(1e-4));
    CHECK(fm == doctest::Approx(2.81212e9).epsilon(1e-4));
    CHECK(fp + fm == doctest::Approx(2.0 * (p.D + p.Mz)).epsilon(1e-12));
  }
  SUBCASE("non-positive transition frequency rejected") {
    p.Bz = 0.2;  // gamma*Bz > D
    CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  }
}

TEST_CASE("resonant propagator basics") {
  DriveTones t;
  t.ampPlus = 1e-4;
  t.ampMinus = 2e-4;
  const double gamma = 28.024e9;

  SUBCASE("t = 0 gives the identity") {
    CHECK(max_diff(resonant_propagator(t, gamma, 0.0), Mat3c::Identity()) <
          1e-12);
  }
  SUBCASE("single-tone pi pulse fully transfers |0> to |-1>") {
    DriveTones single;
    single.ampMinus = 1e-4;
    const double fe = effective_rabi(single, gamma);
    const Mat3c u = resonant_propagator(single, gamma, 1.0 / (4.0 * fe));
    CHECK(std::norm(u(2, 1)) == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::norm(u(1, 1)) == doctest::Approx(0.0).epsilon(1e-10));
  }
  SUBCASE("equal amplitudes give omega_e = gamma*B/2") {
    DriveTones eq;
    eq.ampPlus = eq.ampMinus = 3e-4;
    CHECK(effective_rabi(eq, gamma) ==
          doctest::Approx(gamma * 3e-4 / 2.0).epsilon(1e-12));
  }
  SUBCASE("nonzero detuning rejected") {
    DriveTones det = t;
    det.deltaCM = 1e5;
    CHECK_THROWS_AS(resonant_propagator(det, gamma, 1e-7),
                    std::invalid_argument);
  }
}

TEST_CASE("propagators are unitary and mutually consistent") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> amp(1e-5, 5e-4);
  std::uniform_real_distribution<double> ph(-M_PI, M_PI);
  std::uniform_real_distribution<double> dur(10e-9, 300e-9);
  NVParams p;

  for (int i = 0; i < 100; ++i) {
    DriveTones t;
    t.ampPlus = amp(rng);
    t.ampMinus = amp(rng);
    t.phasePlus = ph(rng);
    t.phaseMinus = ph(rng);
    const double dt = dur(rng);

    const Mat3c ua = resonant_propagator(t, p.gamma, dt);
    CHECK(unitarity_error(ua) < 1e-10);

    const Mat3c un = numeric_propagator(p, t, dt, dt / 4096.0);
    CHECK(unitarity_error(un) < 1e-10);
    CHECK(max_diff(ua, un) < 1e-8);
  }
}

TEST_CASE("numeric propagator detunings and guards") {
  NVParams p;
  SUBCASE("free evolution phases in the drive frame") {
    DriveTones t;
    t.ampPlus = t.ampMinus = 0.0;
    t.deltaCM = 2.5e5;
    const double dt = 1e-6;
    const Mat3c u = numeric_propagator(p, t, dt, 1e-9);
    // c_{+-1} advance as exp(+i 2 pi delta t); |0> is the phase reference
    const auto expect = std::exp(std::complex<double>(0, 2 * M_PI * 2.5e5 * dt));
    CHECK(std::abs(u(0, 0) - expect) < 1e-8);
    CHECK(std::abs(u(2, 2) - expect) < 1e-8);
    CHECK(std::abs(u(1, 1) - 1.0) < 1e-12);
  }
  SUBCASE("step-size violation throws") {
    DriveTones t;
    t.ampMinus = 1e-4;
    CHECK_THROWS_AS(numeric_propagator(p, t, 1e-7, 1e-7),
                    std::invalid_argument);
  }
}

TEST_CASE("swap triplet exchanges the +-1 populations") {
  const double tPi = 50e-9;
  SUBCASE("Fig-style 30/70 split") {
    SpinState s;
    s.amps << std::sqrt(0.3), 0.0, std::sqrt(0.7);
    const SpinState r = apply_swap(s, Manifold::minus, +1, tPi);
    const auto pops = r.populations();
    CHECK(pops[0] == doctest::Approx(0.7).epsilon(1e-10));
    CHECK(pops[1] == doctest::Approx(0.0).epsilon(1e-10));
    CHECK(pops[2] == doctest::Approx(0.3).epsilon(1e-10));
  }
  SUBCASE("double swap restores populations") {
    SpinState s;
    s.amps << std::complex<double>(0.2, 0.4), std::complex<double>(0.5, -0.1),
        std::complex<double>(0.3, 0.2);
    s.amps.normalize();
    const auto p0 = s.populations();
    SpinState r = apply_swap(s, Manifold::minus, +1, tPi);
    r = apply_swap(r, Manifold::plus, +1, tPi);
    const auto p1 = r.populations();
    for (int i = 0; i < 3; ++i) CHECK(p1[i] == doctest::Approx(p0[i]).epsilon(1e-10));
  }
  SUBCASE("equal 0/-1 superposition moves to 0/+1") {
    SpinState s;
    s.amps << 0.0, 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    const auto pops = apply_swap(s, Manifold::minus, +1, tPi).populations();
    CHECK(pops[0] == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(pops[1] == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(pops[2] == doctest::Approx(0.0).epsilon(1e-10));
  }
  SUBCASE("unnormalized input rejected") {
    SpinState s;
    s.amps << 1.0, 1.0, 0.0;
    CHECK_THROWS(apply_swap(s, Manifold::minus, +1, tPi));
  }
}

TEST_CASE("populations") {
  SpinState s;
  s.amps << 0.0, 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  const auto p = s.populations();
  CHECK(p[0] == doctest::Approx(0.0));
  CHECK(p[1] == doctest::Approx(0.5));
  CHECK(p[2] == doctest::Approx(0.5));
  CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0).epsilon(1e-12));
}
