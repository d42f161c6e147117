#include "nvsim/noise.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace nvsim {

namespace {
constexpr double kElectronCharge = 1.602176634e-19;  // C
constexpr double kBoltzmann = 1.380649e-23;          // J/K
}  // namespace

void APDConfig::validate() const {
  if (responsivityM1 <= 0.0 || gainM <= 0.0 || transimpedance <= 0.0 ||
      temperature <= 0.0 || bandwidth < 0.0)
    throw std::invalid_argument("APDConfig: non-positive parameter");
  if (excessNoiseF < 1.0)
    throw std::invalid_argument("APDConfig: excess noise factor < 1");
  if (darkSurface < 0.0 || darkBulk < 0.0)
    throw std::invalid_argument("APDConfig: negative dark current");
}

double NoiseBudget::vTotal() const { return std::hypot(vSN, vJN); }

NoiseBudget apd_noise(const APDConfig& cfg, double opticalPower) {
  cfg.validate();
  if (opticalPower < 0.0) throw std::invalid_argument("apd_noise: P < 0");

  const double m2 = cfg.gainM * cfg.gainM;
  const double photo = cfg.responsivityM1 * m2 * opticalPower;  // A
  const double bulk = cfg.darkBulk * m2;
  const double variance =
      2.0 * kElectronCharge *
      (cfg.darkSurface + (bulk + photo) * cfg.excessNoiseF) * cfg.bandwidth;

  NoiseBudget b;
  b.iN = std::sqrt(variance);
  b.vSN = b.iN * cfg.transimpedance;
  b.vJN = std::sqrt(4.0 * kBoltzmann * cfg.temperature * cfg.transimpedance *
                    cfg.bandwidth);
  return b;
}

double visibility_uncertainty(const NoiseBudget& b, double fPlus,
                              double fMinus) {
  const double sum = fPlus + fMinus;
  if (sum <= 0.0)
    throw std::invalid_argument("visibility_uncertainty: f+ + f- <= 0");
  return std::sqrt(2.0) * b.vTotal() / sum;
}

double visibility_uncertainty_exact(const NoiseBudget& b, double fPlus,
                                    double fMinus) {
  const double sum = fPlus + fMinus;
  if (sum <= 0.0)
    throw std::invalid_argument("visibility_uncertainty: f+ + f- <= 0");
  const double nu = (fPlus - fMinus) / sum;
  const double v = b.vTotal();
  const double sp = (1.0 - nu) / sum * v;
  const double sm = (1.0 + nu) / sum * v;
  return std::hypot(sp, sm);
}

double shot_frequency_sigma(double sigmaNu, double tau1,
                            double fringeAmplitude) {
  if (fringeAmplitude <= 0.0)
    throw std::invalid_argument("shot_frequency_sigma: amplitude <= 0");
  return sigmaNu / (2.0 * M_PI * tau1 * fringeAmplitude);
}

double strain_noise_floor(double sigmaNu, double tau1, double fringeAmplitude,
                          double repRate, double coupling) {
  const double sigmaF = shot_frequency_sigma(sigmaNu, tau1, fringeAmplitude);
  return sigmaF / (coupling * std::sqrt(repRate));
}

double sample_reading(double expected, const NoiseBudget& b,
                      long integrationShots, std::mt19937_64& rng) {
  if (integrationShots < 1)
    throw std::invalid_argument("sample_reading: integrationShots < 1");
  const double sigma = b.vTotal() / std::sqrt((double)integrationShots);
  if (sigma == 0.0) return expected;
  std::normal_distribution<double> dist(expected, sigma);
  return dist(rng);
}

std::string noise_budget_report(const APDConfig& cfg, double opticalPower,
                                double fPlus, double fMinus) {
  NoiseBudget b = apd_noise(cfg, opticalPower);
  b.sigmaNu = visibility_uncertainty(b, fPlus, fMinus);
  std::ostringstream os;
  os << "APD noise budget\n";
  os << "  optical power        " << opticalPower * 1e9 << " nW\n";
  os << "  responsivity (M=1)   " << cfg.responsivityM1 << " A/W\n";
  os << "  gain M               " << cfg.gainM << "\n";
  os << "  excess noise F       " << cfg.excessNoiseF << "\n";
  os << "  bandwidth            " << cfg.bandwidth * 1e-3 << " kHz\n";
  os << "  transimpedance       " << cfg.transimpedance * 1e-3 << " kV/A\n";
  os << "  dark surface current " << cfg.darkSurface * 1e12 << " pA\n";
  os << "  dark bulk current    " << cfg.darkBulk * 1e12 << " pA\n";
  os << "  RMS noise current    " << b.iN * 1e9 << " nA\n";
  os << "  shot noise voltage   " << b.vSN * 1e3 << " mV\n";
  os << "  Johnson noise        " << b.vJN * 1e3 << " mV\n";
  os << "  total RMS voltage    " << b.vTotal() * 1e3 << " mV\n";
  os << "  signal f+ + f-       " << (fPlus + fMinus) * 1e3 << " mV\n";
  os << "  sigma(nu) per shot   " << b.sigmaNu << "\n";
  return os.str();
}

void LockInCameraConfig::validate() const {
  if (fDemod <= 0.0) throw std::invalid_argument("LockInCamera: fDemod <= 0");
  if (nDemod < 1) throw std::invalid_argument("LockInCamera: nDemod < 1");
  if (fullScale < 1) throw std::invalid_argument("LockInCamera: fullScale < 1");
}

DifferenceFrame lockin_acquire(const std::vector<double>& flux0,
                               const std::vector<double>& flux1,
                               const std::vector<double>& flux2,
                               const std::vector<double>& flux3,
                               const LockInCameraConfig& cfg,
                               std::mt19937_64& rng) {
  cfg.validate();
  const std::size_t n = flux0.size();
  if (flux1.size() != n || flux2.size() != n || flux3.size() != n)
    throw std::invalid_argument("lockin_acquire: flux shape mismatch");
  const std::vector<double>* flux[4] = {&flux0, &flux1, &flux2, &flux3};
  if (!cfg.offsetsSlot1.empty() && cfg.offsetsSlot1.size() != n)
    throw std::invalid_argument("lockin_acquire: offset shape mismatch");
  if (!cfg.offsetsSlot2.empty() && cfg.offsetsSlot2.size() != n)
    throw std::invalid_argument("lockin_acquire: offset shape mismatch");

  std::normal_distribution<double> unit(0.0, 1.0);
  DifferenceFrame frame;
  frame.slot1.resize(n);
  frame.slot2.resize(n);

  const double half = cfg.fullScale / 2.0;
  for (std::size_t i = 0; i < n; ++i) {
    double acc1 = 0.0, acc2 = 0.0;
    for (int c = 0; c < cfg.nDemod; ++c) {
      double e[4];
      for (int k = 0; k < 4; ++k) {
        const double mean = (*flux[k])[i];
        double v = mean;
        if (cfg.shotNoise && mean > 0.0) v += std::sqrt(mean) * unit(rng);
        e[k] = v;
      }
      acc1 += e[0] - e[1];
      acc2 += e[2] - e[3];
    }
    const double d1 = acc1 / cfg.nDemod;
    const double d2 = acc2 / cfg.nDemod;
    // fixed capacitor-bank offsets are a constant ADC-count pattern
    const double o1 =
        cfg.offsetsSlot1.empty() ? 0.0 : std::round(cfg.offsetsSlot1[i]);
    const double o2 =
        cfg.offsetsSlot2.empty() ? 0.0 : std::round(cfg.offsetsSlot2[i]);
    frame.slot1[i] =
        std::clamp(std::round(d1 * cfg.adcGain) + o1, -half, half);
    frame.slot2[i] =
        std::clamp(std::round(d2 * cfg.adcGain) + o2, -half, half);
  }
  return frame;
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  // splitmix64 finalizer over the combined value
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace nvsim
