// SPDX-License-Identifier: Apache-2.0
#include "sla/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)

#include <arm_neon.h>

#include <cmath>

#include "exp_poly.hpp"

namespace sla::kernels::neon {
namespace {

using namespace sla::kernels::detail;

inline float64x2_t exp2v(float64x2_t x) {
  const uint64x2_t underflow = vcltq_f64(x, vdupq_n_f64(kExpMin));
  x = vminq_f64(x, vdupq_n_f64(kExpMax));
  x = vmaxq_f64(x, vdupq_n_f64(kExpMin));

  const float64x2_t n = vrndnq_f64(vmulq_f64(x, vdupq_n_f64(kLog2e)));
  float64x2_t r = vfmsq_f64(x, n, vdupq_n_f64(kLn2Hi));
  r = vfmsq_f64(r, n, vdupq_n_f64(kLn2Lo));

  float64x2_t p = vdupq_n_f64(kExpCoeffs[0]);
  for (int j = 1; j < 14; ++j) p = vfmaq_f64(vdupq_n_f64(kExpCoeffs[j]), p, r);

  int64x2_t bits = vaddq_s64(vcvtq_s64_f64(n), vdupq_n_s64(1023));
  bits = vshlq_n_s64(bits, 52);
  const float64x2_t scaled = vmulq_f64(p, vreinterpretq_f64_s64(bits));
  return vreinterpretq_f64_u64(vbicq_u64(vreinterpretq_u64_f64(scaled), underflow));
}

// Natural log of positive, finite, normal inputs.
inline float64x2_t log2v(float64x2_t x) {
  const uint64x2_t bits = vreinterpretq_u64_f64(x);
  float64x2_t f = vreinterpretq_f64_u64(
      vorrq_u64(vandq_u64(bits, vdupq_n_u64(0x000FFFFFFFFFFFFFULL)), vdupq_n_u64(0x3FF0000000000000ULL)));
  float64x2_t e = vsubq_f64(vcvtq_f64_u64(vshrq_n_u64(bits, 52)), vdupq_n_f64(1023.0));
  const uint64x2_t big = vcgeq_f64(f, vdupq_n_f64(kSqrt2));
  f = vbslq_f64(big, vmulq_f64(f, vdupq_n_f64(0.5)), f);
  e = vaddq_f64(e, vreinterpretq_f64_u64(vandq_u64(big, vreinterpretq_u64_f64(vdupq_n_f64(1.0)))));

  const float64x2_t one = vdupq_n_f64(1.0);
  const float64x2_t z = vdivq_f64(vsubq_f64(f, one), vaddq_f64(f, one));
  const float64x2_t z2 = vmulq_f64(z, z);
  float64x2_t p = vdupq_n_f64(kLogCoeffs[0]);
  for (int j = 1; j < 12; ++j) p = vfmaq_f64(vdupq_n_f64(kLogCoeffs[j]), p, z2);
  const float64x2_t lf = vmulq_f64(z, p);
  return vfmaq_f64(vfmaq_f64(lf, e, vdupq_n_f64(kLn2Lo)), e, vdupq_n_f64(kLn2Hi));
}

double log_sum_exp_pair(const double* a, const double* b, std::size_t n) {
  constexpr double kNegInf = -std::numeric_limits<double>::infinity();
  float64x2_t vmax = vdupq_n_f64(kNegInf);
  uint64x2_t unord = vdupq_n_u64(0);
  std::size_t t = 0;
  for (; t + 2 <= n; t += 2) {
    const float64x2_t v = vaddq_f64(vld1q_f64(a + t), vld1q_f64(b + t));
    unord = vorrq_u64(unord, vreinterpretq_u64_u32(vmvnq_u32(vreinterpretq_u32_u64(vceqq_f64(v, v)))));
    vmax = vmaxnmq_f64(vmax, v);
  }
  double m = vmaxnmvq_f64(vmax);
  bool has_nan = (vgetq_lane_u64(unord, 0) | vgetq_lane_u64(unord, 1)) != 0;
  for (std::size_t u = t; u < n; ++u) {
    const double v = a[u] + b[u];
    has_nan |= std::isnan(v);
    if (v > m) m = v;
  }
  if (has_nan) return std::numeric_limits<double>::quiet_NaN();
  if (!(m > kExcludedLog)) return kNegInf;
  if (std::isinf(m)) return m;

  const float64x2_t vm = vdupq_n_f64(m);
  float64x2_t acc = vdupq_n_f64(0.0);
  for (t = 0; t + 2 <= n; t += 2) {
    const float64x2_t v = vaddq_f64(vld1q_f64(a + t), vld1q_f64(b + t));
    acc = vaddq_f64(acc, exp2v(vsubq_f64(v, vm)));
  }
  double s = vaddvq_f64(acc);
  for (std::size_t u = t; u < n; ++u) s += std::exp(a[u] + b[u] - m);
  return m + std::log(s);
}

void exp_pair(const double* a, const double* b, double shift, double* out, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(shift);
  std::size_t t = 0;
  for (; t + 2 <= n; t += 2)
    vst1q_f64(out + t, exp2v(vaddq_f64(vaddq_f64(vld1q_f64(a + t), vld1q_f64(b + t)), vs)));
  for (; t < n; ++t) out[t] = std::exp(a[t] + b[t] + shift);
}

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t t = 0;
  for (; t + 2 <= n; t += 2) acc = vfmaq_f64(acc, vld1q_f64(a + t), vld1q_f64(b + t));
  double s = vaddvq_f64(acc);
  for (; t < n; ++t) s += a[t] * b[t];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t t = 0;
  for (; t + 2 <= n; t += 2) vst1q_f64(y + t, vfmaq_f64(vld1q_f64(y + t), va, vld1q_f64(x + t)));
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
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    float64x2_t vmax = vdupq_n_f64(-std::numeric_limits<double>::infinity());
    uint64x2_t ordered = vdupq_n_u64(~0ULL);
    for (std::size_t j = 0; j < p; ++j) {
      const float64x2_t v = vaddq_f64(vld1q_f64(a + j * stride + i), vdupq_n_f64(b[j]));
      ordered = vandq_u64(ordered, vceqq_f64(v, v));
      vmax = vmaxnmq_f64(vmax, v);
    }
    const uint64x2_t ok = vandq_u64(ordered, vandq_u64(vcgtq_f64(vmax, vdupq_n_f64(kExcludedLog)),
                                                        vcltq_f64(vmax, vdupq_n_f64(std::numeric_limits<double>::infinity()))));
    if ((vgetq_lane_u64(ok, 0) & vgetq_lane_u64(ok, 1)) == 0) {
      for (std::size_t u = i; u < i + 2; ++u) out[u] = log_sum_exp_strided(a + u, stride, b, p);
      continue;
    }
    float64x2_t acc = vdupq_n_f64(0.0);
    for (std::size_t j = 0; j < p; ++j) {
      const float64x2_t v = vaddq_f64(vld1q_f64(a + j * stride + i), vdupq_n_f64(b[j]));
      acc = vaddq_f64(acc, exp2v(vsubq_f64(v, vmax)));
    }
    vst1q_f64(out + i, vaddq_f64(vmax, log2v(acc)));
  }
  for (; i < m; ++i) out[i] = log_sum_exp_strided(a + i, stride, b, p);
}

}  // namespace

const KernelTable* table() {
  static const KernelTable t{Backend::neon, &log_sum_exp_pair, &exp_pair, &dot, &axpy,
                             &log_sum_exp_columns};
  return &t;
}

}  // namespace sla::kernels::neon

#else

namespace sla::kernels::neon {
const KernelTable* table() { return nullptr; }
}  // namespace sla::kernels::neon

#endif
