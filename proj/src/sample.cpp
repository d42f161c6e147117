#include "nvsim/sample.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <stdexcept>

namespace nvsim {

using nlohmann::json;

StrainTensor& StrainTensor::operator+=(const StrainTensor& o) {
  xx += o.xx; yy += o.yy; zz += o.zz;
  xy += o.xy; xz += o.xz; yz += o.yz;
  return *this;
}

StrainTensor StrainTensor::operator*(double k) const {
  return {xx * k, yy * k, zz * k, xy * k, xz * k, yz * k};
}

namespace {

double clamp_eps(double v) { return std::clamp(v, -1e-2, 1e-2); }

struct Evaluator {
  double x, y, z;

  StrainTensor operator()(const UniformStrain& p) const { return p.eps; }

  StrainTensor operator()(const GaussianBump& p) const {
    const double dx = (x - p.center[0]) / p.sigma[0];
    const double dy = (y - p.center[1]) / p.sigma[1];
    const double dz = (z - p.center[2]) / p.sigma[2];
    return p.eps * std::exp(-0.5 * (dx * dx + dy * dy + dz * dz));
  }

  StrainTensor operator()(const LinearGradient& p) const {
    const double s = p.direction[0] * (x - p.origin[0]) +
                     p.direction[1] * (y - p.origin[1]) +
                     p.direction[2] * (z - p.origin[2]);
    return p.epsPerUm * s;
  }

  StrainTensor operator()(const ScratchLine& p) const {
    const double dx = (x - p.x0) / p.width;
    const double growth = 1.0 + std::max(0.0, z) / p.depthScale;
    return p.eps * (std::exp(-0.5 * dx * dx) * growth);
  }
};

}  // namespace

StrainTensor StrainField::at(double x, double y, double z) const {
  StrainTensor t;
  const Evaluator ev{x, y, z};
  for (const auto& p : prims_) t += std::visit(ev, p);
  t.xx = clamp_eps(t.xx); t.yy = clamp_eps(t.yy); t.zz = clamp_eps(t.zz);
  t.xy = clamp_eps(t.xy); t.xz = clamp_eps(t.xz); t.yz = clamp_eps(t.yz);
  return t;
}

// ---------------------------------------------------------------------------
// Scene I/O

namespace {

json tensor_to_json(const StrainTensor& t) {
  return {{"xx", t.xx}, {"yy", t.yy}, {"zz", t.zz},
          {"xy", t.xy}, {"xz", t.xz}, {"yz", t.yz}};
}

StrainTensor tensor_from_json(const json& j) {
  static const char* keys[] = {"xx", "yy", "zz", "xy", "xz", "yz"};
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(std::begin(keys), std::end(keys), [&](const char* s) {
          return k == s;
        }) == std::end(keys))
      throw std::invalid_argument("scene: unknown tensor key '" + k + "'");
  }
  StrainTensor t;
  t.xx = j.value("xx", 0.0); t.yy = j.value("yy", 0.0);
  t.zz = j.value("zz", 0.0); t.xy = j.value("xy", 0.0);
  t.xz = j.value("xz", 0.0); t.yz = j.value("yz", 0.0);
  return t;
}

void require_keys(const json& j, std::initializer_list<const char*> allowed) {
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* s) {
          return k == s;
        }) == allowed.end())
      throw std::invalid_argument("scene: unknown key '" + k + "'");
  }
}

std::array<double, 3> vec3_from_json(const json& j) {
  if (!j.is_array() || j.size() != 3)
    throw std::invalid_argument("scene: expected 3-element array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

std::string scene_to_json_text(const StrainField& f) {
  json prims = json::array();
  for (const auto& p : f.primitives()) {
    json j;
    if (const auto* u = std::get_if<UniformStrain>(&p)) {
      j = {{"type", "uniform"}, {"eps", tensor_to_json(u->eps)}};
    } else if (const auto* g = std::get_if<GaussianBump>(&p)) {
      j = {{"type", "gaussian"},
           {"center", g->center},
           {"sigma", g->sigma},
           {"eps", tensor_to_json(g->eps)}};
    } else if (const auto* l = std::get_if<LinearGradient>(&p)) {
      j = {{"type", "gradient"},
           {"origin", l->origin},
           {"direction", l->direction},
           {"eps_per_um", tensor_to_json(l->epsPerUm)}};
    } else if (const auto* s = std::get_if<ScratchLine>(&p)) {
      j = {{"type", "scratch"},
           {"x0", s->x0},
           {"width", s->width},
           {"depth_scale", s->depthScale},
           {"eps", tensor_to_json(s->eps)}};
    }
    prims.push_back(std::move(j));
  }
  return json{{"primitives", prims}}.dump(2);
}

StrainField scene_from_json_text(const std::string& text) {
  const json doc = json::parse(text);
  require_keys(doc, {"primitives"});
  StrainField f;
  for (const auto& j : doc.at("primitives")) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "uniform") {
      require_keys(j, {"type", "eps"});
      f.add(UniformStrain{tensor_from_json(j.at("eps"))});
    } else if (type == "gaussian") {
      require_keys(j, {"type", "center", "sigma", "eps"});
      GaussianBump g;
      g.center = vec3_from_json(j.at("center"));
      g.sigma = vec3_from_json(j.at("sigma"));
      g.eps = tensor_from_json(j.at("eps"));
      f.add(g);
    } else if (type == "gradient") {
      require_keys(j, {"type", "origin", "direction", "eps_per_um"});
      LinearGradient l;
      l.origin = vec3_from_json(j.at("origin"));
      l.direction = vec3_from_json(j.at("direction"));
      l.epsPerUm = tensor_from_json(j.at("eps_per_um"));
      f.add(l);
    } else if (type == "scratch") {
      require_keys(j, {"type", "x0", "width", "depth_scale", "eps"});
      ScratchLine s;
      s.x0 = j.at("x0").get<double>();
      s.width = j.at("width").get<double>();
      s.depthScale = j.at("depth_scale").get<double>();
      s.eps = tensor_from_json(j.at("eps"));
      f.add(s);
    } else {
      throw std::invalid_argument("scene: unknown primitive type '" + type +
                                  "'");
    }
  }
  return f;
}

StrainField load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return scene_from_json_text(text);
}

void save_scene(const StrainField& f, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write scene file: " + path);
  out << scene_to_json_text(f) << "\n";
}

// ---------------------------------------------------------------------------
// Strain <-> Mz

double mz_from_strain(const StrainTensor& t, const SpinStrainCouplings& c) {
  return c.a1 * t.zz + c.a2 * (t.xx + t.yy);
}

double strain_from_mz(double mz, const SpinStrainCouplings& c) {
  return -mz / c.weighted;
}

// ---------------------------------------------------------------------------
// Ensembles

void EnsembleSpec::validate() const {
  if (TD <= 0.0 || Tmag <= 0.0)
    throw std::invalid_argument("EnsembleSpec: dephasing times must be > 0");
  if (strata < 1) throw std::invalid_argument("EnsembleSpec: strata < 1");
}

namespace {

struct Stratum {
  double value, weight;
};

// Midpoint quantiles of a Lorentzian with the given FWHM.  The outermost
// quantile bins are subdivided: a single midpoint badly represents the heavy
// tail and would leave a coherent O(1/n) phasor error.
std::vector<Stratum> cauchy_strata(double fwhm, int n) {
  constexpr int kTailSub = 32;
  std::vector<Stratum> v;
  v.reserve(n + 4 * (kTailSub - 1));
  for (int k = 0; k < n; ++k) {
    const int sub = (k < 2 || k >= n - 2) ? kTailSub : 1;
    for (int s = 0; s < sub; ++s) {
      const double q = (k + (s + 0.5) / sub) / n;
      v.push_back({0.5 * fwhm * std::tan(M_PI * (q - 0.5)), 1.0 / (n * sub)});
    }
  }
  return v;
}

// Acklam's rational approximation of the inverse normal CDF
double inverse_normal_cdf(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1.0 - plow;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2.0 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
            c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  if (p > phigh) {
    q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q +
             c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
         q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

std::vector<double> gaussian_strata(double sigma, int n) {
  std::vector<double> v(n);
  for (int k = 0; k < n; ++k)
    v[k] = sigma * inverse_normal_cdf((k + 0.5) / n);
  return v;
}

}  // namespace

Ensemble bath_ensemble(const EnsembleSpec& spec, bool includeDifferential) {
  spec.validate();
  const double gammaCm = 1.0 / (M_PI * spec.TD);
  const auto cm = cauchy_strata(gammaCm, spec.strata);

  Ensemble e;
  if (!includeDifferential) {
    for (const auto& c : cm) {
      EnsembleMember m;
      m.weight = c.weight;
      m.cmOffset = c.value;
      e.push_back(m);
    }
    return e;
  }

  const double gammaDiff = 1.0 / (M_PI * spec.Tmag);
  const auto diff = cauchy_strata(gammaDiff, spec.strata);
  const double hf[3] = {-spec.hyperfine, 0.0, spec.hyperfine};
  e.reserve(cm.size() * diff.size() * 3);
  for (const auto& c : cm)
    for (const auto& d : diff)
      for (double h : hf) {
        EnsembleMember m;
        m.weight = c.weight * d.weight / 3.0;
        m.cmOffset = c.value;
        m.diffOffset = d.value + h;
        e.push_back(m);
      }
  return e;
}

double psf_volume(const ConfocalPSF& psf) {
  if (psf.sx <= 0.0 || psf.sy <= 0.0 || psf.sz <= 0.0)
    throw std::invalid_argument("psf_volume: non-positive width");
  return std::pow(2.0 * M_PI, 1.5) * psf.sx * psf.sy * psf.sz;
}

Ensemble voxel_ensemble(const std::array<double, 3>& position,
                        const ConfocalPSF& psf, const StrainField& field,
                        const EnsembleSpec& spec, std::uint64_t seed,
                        int positionStrata, const SpinStrainCouplings& cpl,
                        bool includeDifferential) {
  spec.validate();
  if (spec.strata < 8)
    throw std::invalid_argument("voxel_ensemble: strata < 8");
  if (psf.sx <= 0.0 || psf.sy <= 0.0 || psf.sz <= 0.0)
    throw std::invalid_argument("voxel_ensemble: degenerate PSF");
  const int np = std::max(1, positionStrata);

  // Latin-hypercube over the three PSF axes, deterministic in the seed.
  std::mt19937_64 rng(seed);
  std::array<std::vector<int>, 3> perm;
  for (auto& p : perm) {
    p.resize(np);
    std::iota(p.begin(), p.end(), 0);
    std::shuffle(p.begin(), p.end(), rng);
  }
  const auto qx = gaussian_strata(psf.sx, np);
  const auto qy = gaussian_strata(psf.sy, np);
  const auto qz = gaussian_strata(psf.sz, np);

  std::vector<double> mz(np);
  for (int k = 0; k < np; ++k) {
    const double x = position[0] + qx[perm[0][k]];
    const double y = position[1] + qy[perm[1][k]];
    const double z = position[2] + qz[perm[2][k]];
    mz[k] = mz_from_strain(field.at(x, y, z), cpl);
  }

  const Ensemble bath = bath_ensemble(spec, includeDifferential);
  Ensemble e;
  e.reserve(bath.size() * np);
  const double wp = 1.0 / np;
  for (const auto& b : bath)
    for (int k = 0; k < np; ++k) {
      EnsembleMember m = b;
      m.weight = b.weight * wp;
      m.cmOffset = b.cmOffset + mz[k];
      e.push_back(m);
    }
  return e;
}

// ---------------------------------------------------------------------------
// Instrument profiles

double InstrumentProfiles::mwAmplitude(double depth) const {
  return 1.0 / (1.0 + std::max(0.0, depth) / mwDepthScale);
}

double InstrumentProfiles::laserPower(double x, double y) const {
  const double dx = x - laserCenterX;
  const double dy = y - laserCenterY;
  return std::exp(-0.5 * (dx * dx + dy * dy) / (laserSigma * laserSigma));
}

double d_shift(double tSec, const InstrumentProfiles& p) {
  if (tSec < 0.0) throw std::invalid_argument("d_shift: t < 0");
  double dT = p.tempDriftRate * tSec / 3600.0;
  if (p.tempSineAmpK != 0.0)
    dT += p.tempSineAmpK * std::sin(2.0 * M_PI * tSec / p.tempSinePeriod);
  return p.dDdT * dT;
}

}  // namespace nvsim
