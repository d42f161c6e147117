#pragma once

#include <complex>
#include <cstddef>

// Data-parallel inner loops used by the ensemble simulator and the map
// analysis.  Each kernel has a scalar reference implementation and an AVX2
// variant; the active set is chosen once at startup from CPUID.  The
// environment variable NVSIM_KERNELS=scalar|avx2 overrides the choice
// (equivalence tests use this to pin both paths).

namespace nvsim::kernels {

struct KernelTable {
  // sum_i w[i] * exp(i*(2*pi*f[i]*tau + phi))
  std::complex<double> (*phasor_sum)(const double* f, const double* w,
                                     std::size_t n, double tau, double phi);
  // out[i] = (a[i]-b[i])/(a[i]+b[i])
  void (*visibility)(const double* a, const double* b, double* out,
                     std::size_t n);
  // y[i] -= depth * (g/2)^2 / ((x[i]-center)^2 + (g/2)^2)
  void (*lorentzian_sub)(const double* x, double* y, std::size_t n,
                         double center, double fwhm, double depth);
  // sum_i (s[i+2m] - 2 s[i+m] + s[i])^2 over i in [0, n-2m], s = prefix sums
  double (*allan_sumsq)(const double* prefix, std::size_t n, std::size_t m);
  // sum_i ((y[i]-model[i])*w[i])^2
  double (*wssr)(const double* y, const double* model, const double* w,
                 std::size_t n);
  const char* name;
};

const KernelTable& scalar_table();
#if defined(__x86_64__)
const KernelTable& avx2_table();
bool avx2_supported();
#endif

// Active table (dispatch resolved on first call).
const KernelTable& active();

}  // namespace nvsim::kernels
