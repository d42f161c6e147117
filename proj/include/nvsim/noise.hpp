#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

// Detector models: APD voltage chain (shot + Johnson noise) and the lock-in
// camera difference imaging used for widefield acquisition.

namespace nvsim {

struct APDConfig {
  double responsivityM1 = 0.45;  // A/W at unit gain
  double gainM = 100.0;
  double excessNoiseF = 4.0;
  double transimpedance = 250e3;  // V/A
  double bandwidth = 700e3;       // Hz
  double darkSurface = 0.0;       // A (I_DS)
  double darkBulk = 0.0;          // A (I_DB)
  double temperature = 300.0;     // K

  void validate() const;
};

struct NoiseBudget {
  double iN = 0.0;   // A
  double vSN = 0.0;  // V
  double vJN = 0.0;  // V
  double sigmaNu = 0.0;

  double vTotal() const;
};

NoiseBudget apd_noise(const APDConfig& cfg, double opticalPower);

// sigma(nu) = sqrt(2) * vTotal / (f+ + f-); small-visibility form of the
// exact propagation, good to <0.5% for nu <= 0.05.
double visibility_uncertainty(const NoiseBudget& b, double fPlus,
                              double fMinus);
double visibility_uncertainty_exact(const NoiseBudget& b, double fPlus,
                                    double fMinus);

// Per-shot frequency uncertainty and the strain-equivalent noise floor.
double shot_frequency_sigma(double sigmaNu, double tau1,
                            double fringeAmplitude);
double strain_noise_floor(double sigmaNu, double tau1, double fringeAmplitude,
                          double repRate, double coupling);

// Gaussian reading with sigma = vTotal/sqrt(integrationShots).
double sample_reading(double expected, const NoiseBudget& b,
                      long integrationShots, std::mt19937_64& rng);

// Plain-text noise budget report, one term per line with units.
std::string noise_budget_report(const APDConfig& cfg, double opticalPower,
                                double fPlus, double fMinus);

struct LockInCameraConfig {
  double fDemod = 6.5e3;  // Hz
  int nDemod = 24;
  int fullScale = 1023;      // 10-bit
  double adcGain = 1.0;      // counts per photoelectron
  bool shotNoise = true;
  // fixed per-pixel offsets for the two difference slots, ADC counts
  std::vector<double> offsetsSlot1, offsetsSlot2;

  void validate() const;
  double frameRate() const { return fDemod / nDemod; }
  double framePeriod() const { return nDemod / fDemod; }
};

struct DifferenceFrame {
  std::vector<double> slot1, slot2;  // digitized counts (averaged, quantized)
};

// One external frame: nDemod cycles of four exposures digitized as two
// difference images (slot1 = e0 - e1, slot2 = e2 - e3), with fixed offsets
// and (optionally) shot noise.  Each flux vector holds the expected
// photoelectrons per exposure, one entry per pixel.
DifferenceFrame lockin_acquire(const std::vector<double>& flux0,
                               const std::vector<double>& flux1,
                               const std::vector<double>& flux2,
                               const std::vector<double>& flux3,
                               const LockInCameraConfig& cfg,
                               std::mt19937_64& rng);

// Deterministic per-pixel / per-point stream seeding.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace nvsim
