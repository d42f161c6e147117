#include "nvsim/analysis.hpp"

#include "nvsim/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace nvsim {

namespace {
double wrap_pi(double phi) {
  phi = std::fmod(phi + M_PI, 2.0 * M_PI);
  if (phi < 0.0) phi += 2.0 * M_PI;
  return phi - M_PI;
}
}  // namespace

// --- visibility ------------------------------------------------------------

double visibility(double fPlus, double fMinus) {
  const double sum = fPlus + fMinus;
  if (sum <= 0.0) throw std::invalid_argument("visibility: f+ + f- <= 0");
  return (fPlus - fMinus) / sum;
}

XYVisibility xy_visibility(double fXplus, double fXminus, double fYplus,
                           double fYminus) {
  const double dX = fXplus - fXminus;
  const double dY = fYplus - fYminus;
  XYVisibility v;
  v.fringeAmplitude = std::hypot(dX, dY);
  if (v.fringeAmplitude <= 0.0) {
    v.measurable = false;
    v.nu = 0.0;
    return v;
  }
  v.nu = dX / v.fringeAmplitude;
  return v;
}

// --- trace fitting ---------------------------------------------------------

namespace {

void check_trace(const Trace& t, std::size_t minPoints) {
  if (t.x.size() != t.y.size() ||
      (!t.sigma.empty() && t.sigma.size() != t.x.size()))
    throw std::invalid_argument("trace: length mismatch");
  if (t.x.size() < minPoints)
    throw std::invalid_argument("trace: too few points");
  for (double s : t.sigma)
    if (s < 0.0) throw std::invalid_argument("trace: negative sigma");
}

double span_of(const std::vector<double>& x) {
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return *hi - *lo;
}

}  // namespace

EnvelopeFit fit_envelope(const Trace& trace) {
  check_trace(trace, 10);
  const double span = span_of(trace.x);
  if (span <= 0.0) throw std::invalid_argument("fit_envelope: zero x span");

  double yMax = 0.0;
  for (double v : trace.y) yMax = std::max(yMax, std::abs(v));
  if (yMax <= 0.0)
    throw std::invalid_argument("fit_envelope: constant trace");

  // coarse frequency scan seeds the oscillation term
  const double fLo = 0.25 / span;
  const double fHi = 0.45 * trace.x.size() / span;  // near-Nyquist
  std::vector<double> fGrid(256);
  for (std::size_t i = 0; i < fGrid.size(); ++i)
    fGrid[i] = fLo + (fHi - fLo) * i / (fGrid.size() - 1.0);
  const std::vector<double> spec =
      amplitude_spectrum(trace.x, trace.y, fGrid);
  std::vector<std::size_t> order(fGrid.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return spec[a] > spec[b]; });
  const double fBest = fGrid[order[0]];
  double fSecond = fBest;
  for (std::size_t k = 1; k < order.size(); ++k)
    if (std::abs(fGrid[order[k]] - fBest) > 2.0 / span) {
      fSecond = fGrid[order[k]];
      break;
    }

  const ModelFn model = [](double x, const Eigen::VectorXd& p) {
    return p(0) * std::exp(-x / p(1)) *
           std::sin(2.0 * M_PI * p(2) * x + p(3));
  };

  Eigen::VectorXd lo(4), hi(4);
  lo << 1e-12, 1e-3 * span, 0.0, -2.0 * M_PI;
  hi << 4.0 * yMax, 100.0 * span, 2.0 * fHi, 2.0 * M_PI;

  std::vector<Eigen::VectorXd> starts;
  for (double f : {fBest, fSecond})
    for (int k = 0; k < 8; ++k) {
      Eigen::VectorXd p(4);
      p << yMax, span, f, k * M_PI / 4.0 - M_PI;
      starts.push_back(p);
    }

  EnvelopeFit res;
  res.fit = fit_multistart(model, trace.x, trace.y, trace.sigma, starts, lo, hi);
  res.amplitude = res.fit.params(0);
  res.decayTime = res.fit.params(1);
  res.detuning = res.fit.params(2);
  res.phi0 = wrap_pi(res.fit.params(3));
  return res;
}

void CalibrationCurve::validate() const {
  if (amplitude <= 0.0 || tau1 <= 0.0)
    throw std::invalid_argument("CalibrationCurve: non-positive parameter");
}

CalibrationCurve fit_calibration(const Trace& trace, double tau1) {
  check_trace(trace, 8);
  if (tau1 <= 0.0) throw std::invalid_argument("fit_calibration: tau1 <= 0");
  if (span_of(trace.x) < 1.0 / tau1)
    throw std::invalid_argument("fit_calibration: sweep narrower than one period");

  double yMax = 0.0;
  for (double v : trace.y) yMax = std::max(yMax, std::abs(v));
  if (yMax <= 0.0)
    throw std::runtime_error("fit_calibration: amplitude consistent with zero");

  // p = (A, period refinement r, phi0); period fixed to 1/tau1 within +/-2%
  const ModelFn model = [tau1](double x, const Eigen::VectorXd& p) {
    return p(0) * std::sin(2.0 * M_PI * x * tau1 * (1.0 + p(1)) + p(2));
  };
  Eigen::VectorXd lo(3), hi(3);
  lo << 1e-12, -0.02, -2.0 * M_PI;
  hi << 4.0 * yMax, 0.02, 2.0 * M_PI;

  std::vector<Eigen::VectorXd> starts;
  for (int k = 0; k < 8; ++k) {
    Eigen::VectorXd p(3);
    p << yMax, 0.0, k * M_PI / 4.0 - M_PI;
    starts.push_back(p);
  }
  const FitResult fit =
      fit_multistart(model, trace.x, trace.y, trace.sigma, starts, lo, hi);

  CalibrationCurve c;
  c.amplitude = fit.params(0);
  c.tau1 = tau1 * (1.0 + fit.params(1));
  c.phi0 = wrap_pi(fit.params(2));
  c.period = 1.0 / c.tau1;
  c.fitCovariance = fit.covariance;
  if (c.amplitude < 2.0 * fit.stderrOf(0))
    throw std::runtime_error("fit_calibration: amplitude consistent with zero");
  c.validate();
  return c;
}

// --- visibility -> Mz ------------------------------------------------------

MzReading visibility_to_mz(double nu, const CalibrationCurve& curve,
                           double reference, double sigmaNu) {
  curve.validate();
  MzReading r;
  double s = nu / curve.amplitude;
  if (std::abs(s) > 1.0) {
    r.outOfRange = true;
    s = std::clamp(s, -1.0, 1.0);
  }
  const double phiOp = 2.0 * M_PI * reference * curve.tau1 + curve.phi0;
  // invert on the monotonic branch containing the operating point
  const long branch = std::lround(phiOp / M_PI);
  const double base = std::asin(s);
  const double phi =
      (branch % 2 == 0) ? branch * M_PI + base : branch * M_PI - base;
  r.mzShift = -(phi - phiOp) / (2.0 * M_PI * curve.tau1);
  if (std::abs(phi - phiOp) >= 0.999 * M_PI / 2.0) r.ambiguous = true;
  if (sigmaNu > 0.0) {
    const double slope = std::max(std::abs(std::cos(phi)), 1e-3);
    r.sigma = sigmaNu / (curve.amplitude * slope * 2.0 * M_PI * curve.tau1);
  }
  return r;
}

MzReading phase_to_mz(double dX, double dY, double tau1, double phiRef,
                      double sigmaNu, double fringeAmplitude) {
  if (tau1 <= 0.0) throw std::invalid_argument("phase_to_mz: tau1 <= 0");
  MzReading r;
  const double amp = std::hypot(dX, dY);
  if (amp <= 0.0) {
    r.outOfRange = true;
    return r;
  }
  const double dphi = wrap_pi(std::atan2(dX, dY) - phiRef);
  r.mzShift = -dphi / (2.0 * M_PI * tau1);
  if (std::abs(dphi) >= 0.999 * M_PI) r.ambiguous = true;
  if (sigmaNu > 0.0 && fringeAmplitude > 0.0)
    r.sigma = sigmaNu / fringeAmplitude / (2.0 * M_PI * tau1);
  return r;
}

double disambiguate_mz(const MzReading& coarse, double /*tauCoarse*/,
                       const MzReading& fine, double tauFine) {
  if (tauFine <= 0.0) throw std::invalid_argument("disambiguate_mz: tau <= 0");
  const double fringe = 1.0 / tauFine;  // Mz spacing of the fine fringes
  const double k = std::round((coarse.mzShift - fine.mzShift) / fringe);
  return fine.mzShift + k * fringe;
}

// --- Allan deviation -------------------------------------------------------

AllanResult allan_deviation(const std::vector<double>& series,
                            double sampleInterval,
                            const std::vector<double>& tauList) {
  const std::size_t n = series.size();
  if (n < 3) throw std::invalid_argument("allan_deviation: series too short");
  if (sampleInterval <= 0.0)
    throw std::invalid_argument("allan_deviation: sampleInterval <= 0");

  std::vector<double> prefix(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + series[i];

  const auto& k = kernels::active();
  AllanResult res;
  for (double tau : tauList) {
    const long m = std::lround(tau / sampleInterval);
    if (m < 1 || static_cast<std::size_t>(2 * m) >= n)
      throw std::invalid_argument("allan_deviation: insufficient data for tau");
    const std::size_t mm = static_cast<std::size_t>(m);
    const double sumsq = k.allan_sumsq(prefix.data(), n, mm);
    const long terms = static_cast<long>(n) - 2 * m + 1;
    const double var = sumsq / (2.0 * double(m) * double(m) * double(terms));
    const double sigma = std::sqrt(var);
    // Gaussian approximation with the non-overlapping-equivalent dof
    const double dof = std::max<double>(1.0, double(n) / double(m) - 1.0);
    const double rel = 1.0 / std::sqrt(2.0 * dof);
    res.tau.push_back(m * sampleInterval);
    res.sigma.push_back(sigma);
    res.ciLower.push_back(std::max(0.0, sigma * (1.0 - rel)));
    res.ciUpper.push_back(sigma * (1.0 + rel));
    res.pairs.push_back(terms);
  }
  return res;
}

std::vector<double> default_allan_taus(std::size_t n, double sampleInterval) {
  std::vector<double> taus;
  long last = 0;
  for (double x = 1.0; 2.0 * x + 1.0 < double(n); x *= std::pow(10.0, 0.1)) {
    const long m = std::lround(x);
    if (m > last && static_cast<std::size_t>(2 * m) < n) {
      taus.push_back(m * sampleInterval);
      last = m;
    }
  }
  return taus;
}

// --- CW-ODMR ---------------------------------------------------------------

void ODMRSpectrum::validate() const {
  if (frequency.size() != signal.size())
    throw std::invalid_argument("ODMRSpectrum: length mismatch");
  for (std::size_t i = 1; i < frequency.size(); ++i)
    if (frequency[i] <= frequency[i - 1])
      throw std::invalid_argument("ODMRSpectrum: frequencies not ascending");
}

double odmr_model(double f, const std::vector<ODMRLine>& lines,
                  double hyperfine) {
  double y = 1.0;
  for (const auto& ln : lines) {
    const double h = 0.5 * ln.width;
    const double h2 = h * h;
    for (int q = -1; q <= 1; ++q) {
      const double d = f - (ln.center + q * hyperfine);
      y -= ln.depth * h2 / (d * d + h2);
    }
  }
  return y;
}

namespace {

// deepest well-separated local minima of a lightly smoothed spectrum
std::vector<double> seed_centers(const std::vector<double>& freq,
                                 const std::vector<double>& sig, int nWanted,
                                 double minSep) {
  const std::size_t n = freq.size();
  std::vector<double> sm(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = i > 2 ? i - 2 : 0;
    const std::size_t b = std::min(n - 1, i + 2);
    double acc = 0.0;
    for (std::size_t j = a; j <= b; ++j) acc += sig[j];
    sm[i] = acc / (b - a + 1);
  }
  std::vector<std::size_t> minima;
  for (std::size_t i = 1; i + 1 < n; ++i)
    if (sm[i] < sm[i - 1] && sm[i] <= sm[i + 1]) minima.push_back(i);
  std::sort(minima.begin(), minima.end(),
            [&](std::size_t a, std::size_t b) { return sm[a] < sm[b]; });
  std::vector<double> centers;
  for (std::size_t idx : minima) {
    bool ok = true;
    for (double c : centers)
      if (std::abs(freq[idx] - c) < minSep) ok = false;
    if (ok) centers.push_back(freq[idx]);
    if (static_cast<int>(centers.size()) == nWanted) break;
  }
  // pad with evenly spaced guesses if the search came up short
  while (static_cast<int>(centers.size()) < nWanted) {
    const double t = (centers.size() + 1.0) / (nWanted + 1.0);
    centers.push_back(freq.front() + t * (freq.back() - freq.front()));
  }
  std::sort(centers.begin(), centers.end());
  return centers;
}

}  // namespace

ODMRSpectrum fit_odmr(const std::vector<double>& frequency,
                      const std::vector<double>& signal, int nTransitions,
                      double hyperfine, const std::vector<double>& centerGuess,
                      const std::vector<double>& sigma) {
  if (nTransitions < 1)
    throw std::invalid_argument("fit_odmr: nTransitions < 1");
  ODMRSpectrum out;
  out.frequency = frequency;
  out.signal = signal;
  out.validate();
  if (frequency.size() < static_cast<std::size_t>(3 * nTransitions + 2))
    throw std::invalid_argument("fit_odmr: too few points");

  const double fMin = frequency.front(), fMax = frequency.back();
  const double df = (fMax - fMin) / (frequency.size() - 1.0);
  const double widthGuess = std::max(1e6, 4.0 * df);

  std::vector<double> centers = centerGuess;
  if (centers.empty())
    centers = seed_centers(frequency, signal, nTransitions,
                           std::max(4.0 * hyperfine, 8.0 * df));
  if (static_cast<int>(centers.size()) != nTransitions)
    throw std::invalid_argument("fit_odmr: centerGuess size mismatch");

  const double baseGuess =
      *std::max_element(signal.begin(), signal.end());

  // p = (baseline, {center, width, depth} per transition)
  const int np = 1 + 3 * nTransitions;
  Eigen::VectorXd p0(np), lo(np), hi(np);
  p0(0) = baseGuess;
  lo(0) = 0.5 * baseGuess;
  hi(0) = 1.5 * std::max(baseGuess, 1e-6);
  for (int t = 0; t < nTransitions; ++t) {
    // signal level at the seeded center
    const auto it = std::lower_bound(frequency.begin(), frequency.end(),
                                     centers[t]);
    const std::size_t idx =
        std::min<std::size_t>(it - frequency.begin(), signal.size() - 1);
    const double dip = std::max(1e-4, baseGuess - signal[idx]);
    p0(1 + 3 * t) = centers[t];
    p0(2 + 3 * t) = widthGuess;
    p0(3 + 3 * t) = dip;
    lo(1 + 3 * t) = fMin;
    hi(1 + 3 * t) = fMax;
    lo(2 + 3 * t) = df;
    hi(2 + 3 * t) = fMax - fMin;
    lo(3 + 3 * t) = 0.0;
    hi(3 + 3 * t) = 1.0;
  }

  const int nt = nTransitions;
  const ModelFn model = [nt, hyperfine](double f, const Eigen::VectorXd& p) {
    double y = p(0);
    for (int t = 0; t < nt; ++t) {
      const double c = p(1 + 3 * t);
      const double h = 0.5 * p(2 + 3 * t);
      const double h2 = h * h;
      const double depth = p(3 + 3 * t);
      for (int q = -1; q <= 1; ++q) {
        const double d = f - (c + q * hyperfine);
        y -= depth * h2 / (d * d + h2);
      }
    }
    return y;
  };

  const FitResult fit =
      fit_least_squares(model, frequency, signal, sigma, p0, lo, hi);
  out.chi2 = fit.chi2;
  out.dof = fit.dof;
  out.converged = fit.converged;
  for (int t = 0; t < nTransitions; ++t) {
    ODMRLine ln;
    ln.center = fit.params(1 + 3 * t);
    ln.width = fit.params(2 + 3 * t);
    ln.depth = fit.params(3 + 3 * t);
    ln.centerSigma = fit.stderrOf(1 + 3 * t);
    out.lines.push_back(ln);
  }
  std::sort(out.lines.begin(), out.lines.end(),
            [](const ODMRLine& a, const ODMRLine& b) {
              return a.center < b.center;
            });
  for (std::size_t i = 1; i < out.lines.size(); ++i)
    if (out.lines[i].center - out.lines[i - 1].center <
        0.5 * (out.lines[i].width + out.lines[i - 1].width))
      out.overlapFlag = true;
  return out;
}

ODMRPair aligned_pair(const ODMRSpectrum& spectrum) {
  if (spectrum.lines.size() < 2)
    throw std::invalid_argument("aligned_pair: need at least two lines");
  ODMRPair p;
  p.fMinus = spectrum.lines.front().center;
  p.fPlus = spectrum.lines.back().center;
  return p;
}

MzBz odmr_to_maps(double fPlus, double fMinus, double D, double gamma) {
  if (fPlus < fMinus)
    throw std::invalid_argument("odmr_to_maps: f+ < f-");
  MzBz r;
  r.mz = 0.5 * (fPlus + fMinus) - D;
  r.bz = (fPlus - fMinus) / (2.0 * gamma);
  return r;
}

// --- spectra / peak counting ----------------------------------------------

std::vector<double> amplitude_spectrum(const std::vector<double>& x,
                                       const std::vector<double>& y,
                                       const std::vector<double>& freqs) {
  if (x.size() != y.size())
    throw std::invalid_argument("amplitude_spectrum: length mismatch");
  const double mean =
      std::accumulate(y.begin(), y.end(), 0.0) / std::max<std::size_t>(1, y.size());
  std::vector<double> out;
  out.reserve(freqs.size());
  for (double f : freqs) {
    double re = 0.0, im = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double th = 2.0 * M_PI * f * x[i];
      re += (y[i] - mean) * std::cos(th);
      im -= (y[i] - mean) * std::sin(th);
    }
    out.push_back(2.0 * std::hypot(re, im) / x.size());
  }
  return out;
}

int count_peaks(const std::vector<double>& values, double thresholdFrac) {
  if (values.size() < 3) return 0;
  const double thr =
      thresholdFrac * *std::max_element(values.begin(), values.end());
  int n = 0;
  for (std::size_t i = 1; i + 1 < values.size(); ++i)
    if (values[i] > values[i - 1] && values[i] > values[i + 1] &&
        values[i] > thr)
      ++n;
  return n;
}

// --- maps ------------------------------------------------------------------

void StrainMap::validate() const {
  if (nx < 1 || ny < 1 || spacing <= 0.0)
    throw std::invalid_argument("StrainMap: bad grid");
  const std::size_t n = size();
  if (mz.size() != n || strain.size() != n || sigma.size() != n ||
      amplitude.size() != n || mask.size() != n)
    throw std::invalid_argument("StrainMap: field size mismatch");
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i] && (!std::isfinite(mz[i]) || !std::isfinite(strain[i])))
      throw std::invalid_argument("StrainMap: non-finite valid cell");
}

void apply_amplitude_mask(StrainMap& map, double frac) {
  std::vector<double> amps;
  for (std::size_t i = 0; i < map.size(); ++i)
    if (map.mask[i]) amps.push_back(map.amplitude[i]);
  if (amps.empty()) return;
  std::nth_element(amps.begin(), amps.begin() + amps.size() / 2, amps.end());
  const double median = amps[amps.size() / 2];
  for (std::size_t i = 0; i < map.size(); ++i)
    if (map.amplitude[i] < frac * median) map.mask[i] = 0;
}

}  // namespace nvsim
