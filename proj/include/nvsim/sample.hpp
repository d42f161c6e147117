#pragma once

#include "nvsim/sequence.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

// Synthetic diamond description: strain field built from primitives, the
// spin-bath inhomogeneity, confocal PSF, and instrument profiles.
// Positions are in micrometers.

namespace nvsim {

struct StrainTensor {
  double xx = 0, yy = 0, zz = 0;
  double xy = 0, xz = 0, yz = 0;  // carried but not coupled to Mz

  StrainTensor& operator+=(const StrainTensor& o);
  StrainTensor operator*(double k) const;
};

struct UniformStrain {
  StrainTensor eps;
};

struct GaussianBump {
  std::array<double, 3> center{};
  std::array<double, 3> sigma{1.0, 1.0, 1.0};
  StrainTensor eps;  // peak value
};

// eps(r) = epsPerUm * dot(direction, r - origin)
struct LinearGradient {
  std::array<double, 3> origin{};
  std::array<double, 3> direction{1.0, 0.0, 0.0};
  StrainTensor epsPerUm;
};

// Line feature along y: Gaussian cross-section in x, amplitude growing
// linearly with depth (z positive into the diamond).
struct ScratchLine {
  double x0 = 0.0;
  double width = 1.0;       // Gaussian sigma in x, um
  double depthScale = 50.0; // amplitude scale (1 + z/depthScale)
  StrainTensor eps;         // surface amplitude
};

using StrainPrimitive =
    std::variant<UniformStrain, GaussianBump, LinearGradient, ScratchLine>;

class StrainField {
 public:
  StrainField() = default;
  explicit StrainField(std::vector<StrainPrimitive> prims)
      : prims_(std::move(prims)) {}

  // Components clamped to +/-1e-2.
  StrainTensor at(double x, double y, double z) const;

  const std::vector<StrainPrimitive>& primitives() const { return prims_; }
  void add(StrainPrimitive p) { prims_.push_back(std::move(p)); }

 private:
  std::vector<StrainPrimitive> prims_;
};

// Scene files: JSON document listing the primitives.  Unknown keys are
// rejected; load(save(f)) is lossless.
StrainField load_scene(const std::string& path);
void save_scene(const StrainField& f, const std::string& path);
StrainField scene_from_json_text(const std::string& text);
std::string scene_to_json_text(const StrainField& f);

struct SpinStrainCouplings {
  double a1 = -8.0e9;        // Hz per unit strain, eps_zz
  double a2 = -12.4e9;       // Hz per unit strain, eps_xx + eps_yy
  double weighted = 10.9e9;  // |weighted average| used for eps_bar
};

double mz_from_strain(const StrainTensor& t,
                      const SpinStrainCouplings& c = {});
double strain_from_mz(double mz, const SpinStrainCouplings& c = {});

struct EnsembleSpec {
  double TD = 20e-6;        // strain-CPMG (common-mode) dephasing time, s
  double Tmag = 12e-6;      // differential-mode dephasing time, s
  double hyperfine = 2.16e6;  // Hz
  int strata = 64;          // quantile strata per bath axis

  void validate() const;
};

// Lorentzian bath, quantile-stratified: strata x strata x 3 hyperfine lines.
// With includeDifferential = false only the common-mode axis is sampled
// (strain-CPMG pipelines, where the differential bath cancels anyway).
Ensemble bath_ensemble(const EnsembleSpec& spec,
                       bool includeDifferential = true);

struct ConfocalPSF {
  double sx = 0.32494, sy = 0.32494, sz = 0.32494;  // um; default 0.54 um^3
};

double psf_volume(const ConfocalPSF& psf);  // um^3

// PSF-weighted voxel ensemble: Mz sampled across the voxel adds to the
// common-mode bath offsets.  Deterministic for a fixed seed.
Ensemble voxel_ensemble(const std::array<double, 3>& position,
                        const ConfocalPSF& psf, const StrainField& field,
                        const EnsembleSpec& spec, std::uint64_t seed,
                        int positionStrata = 16,
                        const SpinStrainCouplings& couplings = {},
                        bool includeDifferential = true);

struct InstrumentProfiles {
  double mwDepthScale = 50.0;    // um; amplitude ~ 1/(1 + z/z0)
  double laserCenterX = 75.0;    // um
  double laserCenterY = 75.0;
  double laserSigma = 80.0;      // um; Gaussian excitation profile
  double tempDriftRate = 0.1;    // K/hour
  double dDdT = -74e3;           // Hz/K
  double tempSineAmpK = 0.0;     // optional slow sinusoid
  double tempSinePeriod = 3600.0;  // s

  double mwAmplitude(double depth) const;
  double laserPower(double x, double y) const;
};

// Uniform-across-sample zero-field-splitting drift D(t) - D(0), Hz.
double d_shift(double tSec, const InstrumentProfiles& p);

}  // namespace nvsim
