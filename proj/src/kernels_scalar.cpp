#include "nvsim/kernels.hpp"

#include <cmath>

namespace nvsim::kernels {
namespace {

std::complex<double> phasor_sum_scalar(const double* f, const double* w,
                                       std::size_t n, double tau, double phi) {
  double re = 0.0, im = 0.0;
  const double k = 2.0 * M_PI * tau;
  for (std::size_t i = 0; i < n; ++i) {
    const double th = k * f[i] + phi;
    re += w[i] * std::cos(th);
    im += w[i] * std::sin(th);
  }
  return {re, im};
}

void visibility_scalar(const double* a, const double* b, double* out,
                       std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = (a[i] - b[i]) / (a[i] + b[i]);
}

void lorentzian_sub_scalar(const double* x, double* y, std::size_t n,
                           double center, double fwhm, double depth) {
  const double h = 0.5 * fwhm;
  const double h2 = h * h;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = x[i] - center;
    y[i] -= depth * h2 / (d * d + h2);
  }
}

double allan_sumsq_scalar(const double* prefix, std::size_t n, std::size_t m) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 2 * m <= n; ++i) {
    const double d = prefix[i + 2 * m] - 2.0 * prefix[i + m] + prefix[i];
    acc += d * d;
  }
  return acc;
}

double wssr_scalar(const double* y, const double* model, const double* w,
                   std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = (y[i] - model[i]) * w[i];
    acc += r * r;
  }
  return acc;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable t{phasor_sum_scalar, visibility_scalar,
                             lorentzian_sub_scalar, allan_sumsq_scalar,
                             wssr_scalar, "scalar"};
  return t;
}

}  // namespace nvsim::kernels
