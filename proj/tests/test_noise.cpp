#include <doctest.h>

#include "nvsim/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

using namespace nvsim;

TEST_CASE("APD voltage chain at the reference operating point") {
  APDConfig cfg;  // 0.45 A/W, M=100, F=4, 250 kV/A, 700 kHz, 300 K
  const double power = 0.46e-9;  // W, 5.2 mV per channel at the APD output
  const NoiseBudget b = apd_noise(cfg, power);

  CHECK(b.iN == doctest::Approx(1.363e-9).epsilon(0.03));
  CHECK(b.vSN == doctest::Approx(0.3407e-3).epsilon(0.03));
  CHECK(b.vJN == doctest::Approx(0.0538e-3).epsilon(0.03));

  const double fi = 5.2e-3;
  const double sigmaNu = visibility_uncertainty(b, fi, fi);
  CHECK(sigmaNu == doctest::Approx(0.0469).epsilon(0.03));

  SUBCASE("dark currents at datasheet levels stay negligible") {
    APDConfig dark = cfg;
    dark.darkSurface = 200e-12;
    dark.darkBulk = 2e-12;
    const NoiseBudget d = apd_noise(dark, power);
    CHECK(d.iN == doctest::Approx(b.iN).epsilon(0.01));
  }
  SUBCASE("no light leaves only Johnson noise") {
    const NoiseBudget z = apd_noise(cfg, 0.0);
    CHECK(z.iN == 0.0);
    CHECK(z.vSN == 0.0);
    CHECK(z.vTotal() == doctest::Approx(b.vJN));
  }
  SUBCASE("doubling the bandwidth scales noise by sqrt(2)") {
    APDConfig wide = cfg;
    wide.bandwidth *= 2.0;
    const NoiseBudget w = apd_noise(wide, power);
    CHECK(w.vSN == doctest::Approx(std::sqrt(2.0) * b.vSN).epsilon(1e-9));
    CHECK(w.vJN == doctest::Approx(std::sqrt(2.0) * b.vJN).epsilon(1e-9));
  }
  SUBCASE("config guards") {
    APDConfig bad = cfg;
    bad.excessNoiseF = 0.5;
    CHECK_THROWS_AS(apd_noise(bad, power), std::invalid_argument);
    CHECK_THROWS_AS(apd_noise(cfg, -1e-9), std::invalid_argument);
  }
}

TEST_CASE("small-visibility uncertainty matches the exact propagation") {
  APDConfig cfg;
  NoiseBudget b = apd_noise(cfg, 0.46e-9);
  const double fi = 5.2e-3;
  for (double nu : {0.0, 0.02, 0.05}) {
    const double fp = fi * (1.0 + nu), fm = fi * (1.0 - nu);
    const double approx = visibility_uncertainty(b, fp, fm);
    const double exact = visibility_uncertainty_exact(b, fp, fm);
    CHECK(approx == doctest::Approx(exact).epsilon(0.005));
  }
  CHECK_THROWS_AS(visibility_uncertainty(b, 0.0, 0.0), std::invalid_argument);
}

TEST_CASE("strain-equivalent noise floor") {
  // per-shot sigma(nu) -> frequency -> strain, averaged over the rep rate
  const double sigmaNu = 0.0469, tau1 = 21e-6, amp = 1.0;
  const double sigmaF = shot_frequency_sigma(sigmaNu, tau1, amp);
  CHECK(sigmaF == doctest::Approx(sigmaNu / (2 * M_PI * tau1)).epsilon(1e-12));
  const double floor = strain_noise_floor(sigmaNu, tau1, amp, 3.8e3, 10.9e9);
  CHECK(floor == doctest::Approx(5.29e-8).epsilon(0.01));
  CHECK_THROWS_AS(shot_frequency_sigma(0.1, tau1, 0.0), std::invalid_argument);
}

TEST_CASE("sampled readings follow the 1/sqrt(N) averaging law") {
  NoiseBudget b;
  b.vSN = 0.3e-3;
  b.vJN = 0.05e-3;
  std::mt19937_64 rng(99);

  for (long shots : {1L, 100L}) {
    const int n = 20000;
    double mean = 0.0, var = 0.0;
    std::vector<double> xs(n);
    for (int i = 0; i < n; ++i) {
      xs[i] = sample_reading(5.2e-3, b, shots, rng);
      mean += xs[i] / n;
    }
    for (double x : xs) var += (x - mean) * (x - mean) / (n - 1);
    CHECK(mean == doctest::Approx(5.2e-3).epsilon(1e-3));
    CHECK(std::sqrt(var) ==
          doctest::Approx(b.vTotal() / std::sqrt((double)shots)).epsilon(0.03));
  }
  CHECK_THROWS_AS(sample_reading(1.0, b, 0, rng), std::invalid_argument);

  NoiseBudget quiet;  // zero noise is exactly deterministic
  CHECK(sample_reading(5.2e-3, quiet, 1, rng) == 5.2e-3);
}

TEST_CASE("noise budget report lists every chain term") {
  const std::string r = noise_budget_report(APDConfig{}, 0.46e-9, 5.2e-3,
                                            5.2e-3);
  for (const char* key :
       {"optical power", "RMS noise current", "shot noise voltage",
        "Johnson noise", "sigma(nu) per shot"})
    CHECK(r.find(key) != std::string::npos);
}

TEST_CASE("lock-in camera difference frames") {
  LockInCameraConfig cfg;
  cfg.shotNoise = false;
  std::mt19937_64 rng(1);
  CHECK(cfg.frameRate() == doctest::Approx(6.5e3 / 24.0));

  SUBCASE("equal fluxes with no offsets give an exactly zero frame") {
    std::vector<double> flux(16, 1000.0);
    const auto f = lockin_acquire(flux, flux, flux, flux, cfg, rng);
    for (double v : f.slot1) CHECK(v == 0.0);
    for (double v : f.slot2) CHECK(v == 0.0);
  }
  SUBCASE("slots carry the exposure differences") {
    std::vector<double> a{1200.0}, b{1000.0}, c{1100.0}, d{900.0};
    const auto f = lockin_acquire(a, b, c, d, cfg, rng);
    CHECK(f.slot1[0] == 200.0);
    CHECK(f.slot2[0] == 200.0);
  }
  SUBCASE("fixed offsets cancel bit-exactly between two acquisitions") {
    cfg.offsetsSlot1 = {37.0, -12.0};
    cfg.offsetsSlot2 = {-5.0, 21.0};
    cfg.shotNoise = true;
    std::vector<double> a{1200.0, 800.0}, b{1000.0, 600.0};
    std::mt19937_64 r1(7), r2(7);
    const auto f1 = lockin_acquire(a, b, a, b, cfg, r1);
    LockInCameraConfig noOff = cfg;
    noOff.offsetsSlot1.clear();
    noOff.offsetsSlot2.clear();
    const auto f2 = lockin_acquire(a, b, a, b, noOff, r2);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(f1.slot1[i] - f2.slot1[i] == cfg.offsetsSlot1[i]);
      CHECK(f1.slot2[i] - f2.slot2[i] == cfg.offsetsSlot2[i]);
    }
  }
  SUBCASE("output saturates at half full scale") {
    std::vector<double> big{1e6}, none{0.0};
    const auto f = lockin_acquire(big, none, none, big, cfg, rng);
    CHECK(f.slot1[0] == cfg.fullScale / 2.0);
    CHECK(f.slot2[0] == -cfg.fullScale / 2.0);
  }
  SUBCASE("shape mismatches are rejected") {
    std::vector<double> a{1.0, 2.0}, b{1.0};
    CHECK_THROWS_AS(lockin_acquire(a, b, a, a, cfg, rng),
                    std::invalid_argument);
    LockInCameraConfig badOff = cfg;
    badOff.offsetsSlot1 = {1.0};
    CHECK_THROWS_AS(lockin_acquire(a, a, a, a, badOff, rng),
                    std::invalid_argument);
  }
}

TEST_CASE("stream seeding is deterministic and decorrelated") {
  CHECK(derive_seed(42, 7) == derive_seed(42, 7));
  CHECK(derive_seed(42, 7) != derive_seed(42, 8));
  CHECK(derive_seed(42, 7) != derive_seed(43, 7));
  // no short cycles among consecutive streams
  std::vector<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 1000; ++s) seen.push_back(derive_seed(1, s));
  std::sort(seen.begin(), seen.end());
  CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
}
