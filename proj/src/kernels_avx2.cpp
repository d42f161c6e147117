#if defined(__x86_64__)

#include "nvsim/kernels.hpp"

#include <immintrin.h>

#include <cmath>

// AVX2+FMA variants of the hot loops.  The sincos path follows the usual
// Cody-Waite quadrant reduction with Cephes minimax polynomials; argument
// magnitudes here stay well below the 2^31-quadrant limit of the reduction.

namespace nvsim::kernels {
namespace {

constexpr double kTwoOverPi = 6.36619772367581382433e-01;
constexpr double kPio2_1 = 1.57079632673412561417e+00;
constexpr double kPio2_2 = 6.07710050650619224932e-11;
constexpr double kPio2_3 = 2.02226624879595063154e-21;

inline __m256d poly_sin(__m256d x, __m256d x2) {
  __m256d p = _mm256_set1_pd(1.58962301576546568060e-10);
  p = _mm256_fmadd_pd(p, x2, _mm256_set1_pd(-2.50507477628578072866e-8));
  p = _mm256_fmadd_pd(p, x2, _mm256_set1_pd(2.75573136213857245213e-6));
  p = _mm256_fmadd_pd(p, x2, _mm256_set1_pd(-1.98412698295895385996e-4));
  p = _mm256_fmadd_pd(p, x2, _mm256_set1_pd(8.33333333332211858878e-3));
  p = _mm256_fmadd_pd(p, x2, _mm256_set1_pd(-1.66666666666666307295e-1));
  return _mm256_fmadd_pd(_mm256_mul_pd(p, x2), x, x);
}

inline __m256d poly_cos(__m256d x2) {
  __m256d p = _mm256_set1_pd(-1.13585365213876817300e-11);
  p = _mm256_fmadd_pd(p, x2, _mm256_set1_pd(2.08757008419747316778e-9));
  p = _mm256_fmadd_pd(p, x2, _mm256_set1_pd(-2.75573141792967388112e-7));
  p = _mm256_fmadd_pd(p, x2, _mm256_set1_pd(2.48015872888517179954e-5));
  p = _mm256_fmadd_pd(p, x2, _mm256_set1_pd(-1.38888888888730564116e-3));
  p = _mm256_fmadd_pd(p, x2, _mm256_set1_pd(4.16666666666665929218e-2));
  p = _mm256_mul_pd(p, _mm256_mul_pd(x2, x2));
  p = _mm256_fnmadd_pd(_mm256_set1_pd(0.5), x2, _mm256_add_pd(p, _mm256_set1_pd(1.0)));
  return p;
}

inline void sincos4(__m256d theta, __m256d* s_out, __m256d* c_out) {
  const __m256d jd =
      _mm256_round_pd(_mm256_mul_pd(theta, _mm256_set1_pd(kTwoOverPi)),
                      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d x = _mm256_fnmadd_pd(jd, _mm256_set1_pd(kPio2_1), theta);
  x = _mm256_fnmadd_pd(jd, _mm256_set1_pd(kPio2_2), x);
  x = _mm256_fnmadd_pd(jd, _mm256_set1_pd(kPio2_3), x);

  const __m256d x2 = _mm256_mul_pd(x, x);
  const __m256d sr = poly_sin(x, x2);
  const __m256d cr = poly_cos(x2);

  const __m128i j32 = _mm256_cvtpd_epi32(jd);
  const __m256i j = _mm256_cvtepi32_epi64(j32);
  const __m256i one = _mm256_set1_epi64x(1);
  const __m256i two = _mm256_set1_epi64x(2);

  // quadrant: bit0 swaps sin/cos, bit1 patterns give the signs
  const __m256i swap_i = _mm256_and_si256(j, one);
  const __m256d swap =
      _mm256_castsi256_pd(_mm256_cmpeq_epi64(swap_i, one));
  const __m256d sign_sin = _mm256_castsi256_pd(_mm256_slli_epi64(
      _mm256_srli_epi64(_mm256_and_si256(j, two), 1), 63));
  const __m256i jp1 = _mm256_add_epi64(j, one);
  const __m256d sign_cos = _mm256_castsi256_pd(_mm256_slli_epi64(
      _mm256_srli_epi64(_mm256_and_si256(jp1, two), 1), 63));

  __m256d s = _mm256_blendv_pd(sr, cr, swap);
  __m256d c = _mm256_blendv_pd(cr, sr, swap);
  *s_out = _mm256_xor_pd(s, sign_sin);
  *c_out = _mm256_xor_pd(c, sign_cos);
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

std::complex<double> phasor_sum_avx2(const double* f, const double* w,
                                     std::size_t n, double tau, double phi) {
  const __m256d k = _mm256_set1_pd(2.0 * M_PI * tau);
  const __m256d ph = _mm256_set1_pd(phi);
  __m256d re = _mm256_setzero_pd();
  __m256d im = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d th = _mm256_fmadd_pd(k, _mm256_loadu_pd(f + i), ph);
    __m256d s, c;
    sincos4(th, &s, &c);
    const __m256d wv = _mm256_loadu_pd(w + i);
    re = _mm256_fmadd_pd(wv, c, re);
    im = _mm256_fmadd_pd(wv, s, im);
  }
  double sre = hsum(re), sim = hsum(im);
  for (; i < n; ++i) {
    const double th = 2.0 * M_PI * tau * f[i] + phi;
    sre += w[i] * std::cos(th);
    sim += w[i] * std::sin(th);
  }
  return {sre, sim};
}

void visibility_avx2(const double* a, const double* b, double* out,
                     std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d av = _mm256_loadu_pd(a + i);
    const __m256d bv = _mm256_loadu_pd(b + i);
    _mm256_storeu_pd(out + i, _mm256_div_pd(_mm256_sub_pd(av, bv),
                                            _mm256_add_pd(av, bv)));
  }
  for (; i < n; ++i) out[i] = (a[i] - b[i]) / (a[i] + b[i]);
}

void lorentzian_sub_avx2(const double* x, double* y, std::size_t n,
                         double center, double fwhm, double depth) {
  const double h = 0.5 * fwhm;
  const __m256d h2 = _mm256_set1_pd(h * h);
  const __m256d cv = _mm256_set1_pd(center);
  const __m256d num = _mm256_set1_pd(depth * h * h);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(x + i), cv);
    const __m256d den = _mm256_fmadd_pd(d, d, h2);
    _mm256_storeu_pd(
        y + i, _mm256_sub_pd(_mm256_loadu_pd(y + i), _mm256_div_pd(num, den)));
  }
  const double h2s = h * h;
  for (; i < n; ++i) {
    const double d = x[i] - center;
    y[i] -= depth * h2s / (d * d + h2s);
  }
}

double allan_sumsq_avx2(const double* prefix, std::size_t n, std::size_t m) {
  __m256d acc = _mm256_setzero_pd();
  const __m256d two = _mm256_set1_pd(2.0);
  std::size_t i = 0;
  const std::size_t last = (n >= 2 * m) ? n - 2 * m : 0;
  for (; i + 4 <= last + 1; i += 4) {
    const __m256d a = _mm256_loadu_pd(prefix + i);
    const __m256d b = _mm256_loadu_pd(prefix + i + m);
    const __m256d c = _mm256_loadu_pd(prefix + i + 2 * m);
    const __m256d d = _mm256_fnmadd_pd(two, b, _mm256_add_pd(a, c));
    acc = _mm256_fmadd_pd(d, d, acc);
  }
  double s = hsum(acc);
  for (; i + 2 * m <= n; ++i) {
    const double d = prefix[i + 2 * m] - 2.0 * prefix[i + m] + prefix[i];
    s += d * d;
  }
  return s;
}

double wssr_avx2(const double* y, const double* model, const double* w,
                 std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d r = _mm256_mul_pd(
        _mm256_sub_pd(_mm256_loadu_pd(y + i), _mm256_loadu_pd(model + i)),
        _mm256_loadu_pd(w + i));
    acc = _mm256_fmadd_pd(r, r, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) {
    const double r = (y[i] - model[i]) * w[i];
    s += r * r;
  }
  return s;
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable t{phasor_sum_avx2, visibility_avx2,
                             lorentzian_sub_avx2, allan_sumsq_avx2, wssr_avx2,
                             "avx2"};
  return t;
}

}  // namespace nvsim::kernels

#endif  // __x86_64__
