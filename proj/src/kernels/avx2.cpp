// SPDX-License-Identifier: Apache-2.0
#include "sla/kernels.hpp"

#if defined(__x86_64__) && defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

#include <cmath>

#include "exp_poly.hpp"

namespace sla::kernels::avx2 {
namespace {

using namespace sla::kernels::detail;

inline __m256d exp4(__m256d x) {
  const __m256d underflow = _mm256_cmp_pd(x, _mm256_set1_pd(kExpMin), _CMP_LT_OQ);
  x = _mm256_min_pd(x, _mm256_set1_pd(kExpMax));
  x = _mm256_max_pd(x, _mm256_set1_pd(kExpMin));

  const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, _mm256_set1_pd(kLog2e)),
                                    _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fnmadd_pd(n, _mm256_set1_pd(kLn2Hi), x);
  r = _mm256_fnmadd_pd(n, _mm256_set1_pd(kLn2Lo), r);

  __m256d p = _mm256_set1_pd(kExpCoeffs[0]);
  for (int j = 1; j < 14; ++j) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(kExpCoeffs[j]));

  const __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i bits = _mm256_cvtepi32_epi64(n32);
  bits = _mm256_add_epi64(bits, _mm256_set1_epi64x(1023));
  bits = _mm256_slli_epi64(bits, 52);
  const __m256d scaled = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
  return _mm256_andnot_pd(underflow, scaled);
}

// Natural log of positive, finite, normal inputs.
inline __m256d log4(__m256d x) {
  const __m256i bits = _mm256_castpd_si256(x);
  const __m256i mant_mask = _mm256_set1_epi64x(0x000FFFFFFFFFFFFFLL);
  const __m256i one_bits = _mm256_set1_epi64x(0x3FF0000000000000LL);
  __m256d f = _mm256_castsi256_pd(_mm256_or_si256(_mm256_and_si256(bits, mant_mask), one_bits));
  // Biased exponent as a double via the 2^52 trick.
  const __m256i two52 = _mm256_set1_epi64x(0x4330000000000000LL);
  __m256d e = _mm256_sub_pd(_mm256_castsi256_pd(_mm256_or_si256(_mm256_srli_epi64(bits, 52), two52)),
                            _mm256_set1_pd(4503599627370496.0 + 1023.0));
  const __m256d big = _mm256_cmp_pd(f, _mm256_set1_pd(kSqrt2), _CMP_GE_OQ);
  f = _mm256_blendv_pd(f, _mm256_mul_pd(f, _mm256_set1_pd(0.5)), big);
  e = _mm256_add_pd(e, _mm256_and_pd(big, _mm256_set1_pd(1.0)));

  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d z = _mm256_div_pd(_mm256_sub_pd(f, one), _mm256_add_pd(f, one));
  const __m256d z2 = _mm256_mul_pd(z, z);
  __m256d p = _mm256_set1_pd(kLogCoeffs[0]);
  for (int j = 1; j < 12; ++j) p = _mm256_fmadd_pd(p, z2, _mm256_set1_pd(kLogCoeffs[j]));
  const __m256d lf = _mm256_mul_pd(z, p);
  return _mm256_fmadd_pd(e, _mm256_set1_pd(kLn2Hi), _mm256_fmadd_pd(e, _mm256_set1_pd(kLn2Lo), lf));
}

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

inline double hmax(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d m = _mm_max_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_max_sd(m, _mm_unpackhi_pd(m, m)));
}

double log_sum_exp_pair(const double* a, const double* b, std::size_t n) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  __m256d vmax = _mm256_set1_pd(kNegInf);
  __m256d unord = _mm256_setzero_pd();
  std::size_t t = 0;
  for (; t + 4 <= n; t += 4) {
    const __m256d v = _mm256_add_pd(_mm256_loadu_pd(a + t), _mm256_loadu_pd(b + t));
    unord = _mm256_or_pd(unord, _mm256_cmp_pd(v, v, _CMP_UNORD_Q));
    vmax = _mm256_max_pd(vmax, v);
  }
  double m = hmax(vmax);
  bool has_nan = _mm256_movemask_pd(unord) != 0;
  for (std::size_t u = t; u < n; ++u) {
    const double v = a[u] + b[u];
    has_nan |= std::isnan(v);
    if (v > m) m = v;
  }
  if (has_nan) return std::numeric_limits<double>::quiet_NaN();
  if (!(m > kExcludedLog)) return kNegInf;
  if (std::isinf(m)) return m;

  const __m256d vm = _mm256_set1_pd(m);
  __m256d acc = _mm256_setzero_pd();
  for (t = 0; t + 4 <= n; t += 4) {
    const __m256d v = _mm256_add_pd(_mm256_loadu_pd(a + t), _mm256_loadu_pd(b + t));
    acc = _mm256_add_pd(acc, exp4(_mm256_sub_pd(v, vm)));
  }
  double s = hsum(acc);
  for (std::size_t u = t; u < n; ++u) s += std::exp(a[u] + b[u] - m);
  return m + std::log(s);
}

void exp_pair(const double* a, const double* b, double shift, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(shift);
  std::size_t t = 0;
  for (; t + 4 <= n; t += 4) {
    const __m256d v =
        _mm256_add_pd(_mm256_add_pd(_mm256_loadu_pd(a + t), _mm256_loadu_pd(b + t)), vs);
    _mm256_storeu_pd(out + t, exp4(v));
  }
  for (; t < n; ++t) out[t] = std::exp(a[t] + b[t] + shift);
}

double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t t = 0;
  for (; t + 8 <= n; t += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + t), _mm256_loadu_pd(b + t), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + t + 4), _mm256_loadu_pd(b + t + 4), acc1);
  }
  for (; t + 4 <= n; t += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + t), _mm256_loadu_pd(b + t), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; t < n; ++t) s += a[t] * b[t];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t t = 0;
  for (; t + 4 <= n; t += 4)
    _mm256_storeu_pd(y + t, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + t), _mm256_loadu_pd(y + t)));
  for (; t < n; ++t) y[t] += alpha * x[t];
}

double log_sum_exp_strided(const double* a, std::size_t stride, const double* b, std::size_t p) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < p; ++j) {
    const double v = a[j * stride] + b[j];
    if (std::isnan(v)) return std::numeric_limits<double>::quiet_NaN();
    if (v > m) m = v;
  }
  if (!(m > kExcludedLog)) return -std::numeric_limits<double>::infinity();
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (std::size_t j = 0; j < p; ++j) s += std::exp(a[j * stride] + b[j] - m);
  return m + std::log(s);
}

void log_sum_exp_columns(const double* a, std::size_t stride, const double* b, std::size_t p,
                         double* out, std::size_t m) {
  const __m256d excluded = _mm256_set1_pd(kExcludedLog);
  const __m256d inf = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) {
    __m256d vmax = _mm256_set1_pd(-std::numeric_limits<double>::infinity());
    __m256d unord = _mm256_setzero_pd();
    for (std::size_t j = 0; j < p; ++j) {
      const __m256d v = _mm256_add_pd(_mm256_loadu_pd(a + j * stride + i), _mm256_set1_pd(b[j]));
      unord = _mm256_or_pd(unord, _mm256_cmp_pd(v, v, _CMP_UNORD_Q));
      vmax = _mm256_max_pd(vmax, v);
    }
    const __m256d special = _mm256_or_pd(
        unord, _mm256_or_pd(_mm256_cmp_pd(vmax, excluded, _CMP_NGT_UQ), _mm256_cmp_pd(vmax, inf, _CMP_EQ_OQ)));
    if (_mm256_movemask_pd(special) != 0) {
      for (std::size_t u = i; u < i + 4; ++u) out[u] = log_sum_exp_strided(a + u, stride, b, p);
      continue;
    }
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t j = 0; j < p; ++j) {
      const __m256d v = _mm256_add_pd(_mm256_loadu_pd(a + j * stride + i), _mm256_set1_pd(b[j]));
      acc = _mm256_add_pd(acc, exp4(_mm256_sub_pd(v, vmax)));
    }
    _mm256_storeu_pd(out + i, _mm256_add_pd(vmax, log4(acc)));
  }
  for (; i < m; ++i) out[i] = log_sum_exp_strided(a + i, stride, b, p);
}

}  // namespace

const KernelTable* table() {
  static const KernelTable t{Backend::avx2, &log_sum_exp_pair, &exp_pair, &dot, &axpy,
                             &log_sum_exp_columns};
  return &t;
}

}  // namespace sla::kernels::avx2

#else

namespace sla::kernels::avx2 {
const KernelTable* table() { return nullptr; }
}  // namespace sla::kernels::avx2

#endif
