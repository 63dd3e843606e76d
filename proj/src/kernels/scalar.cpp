// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "sla/kernels.hpp"

namespace sla::kernels::scalar {
namespace {

double log_sum_exp_pair(const double* a, const double* b, std::size_t n) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < n; ++t) {
    const double v = a[t] + b[t];
    if (std::isnan(v)) return std::numeric_limits<double>::quiet_NaN();
    if (v > m) m = v;
  }
  if (!(m > kExcludedLog)) return -std::numeric_limits<double>::infinity();
  if (std::isinf(m)) return m;
  double s = 0.0;
  for (std::size_t t = 0; t < n; ++t) s += std::exp(a[t] + b[t] - m);
  return m + std::log(s);
}

void exp_pair(const double* a, const double* b, double shift, double* out, std::size_t n) {
  for (std::size_t t = 0; t < n; ++t) out[t] = std::exp(a[t] + b[t] + shift);
}

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t t = 0; t < n; ++t) s += a[t] * b[t];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t t = 0; t < n; ++t) y[t] += alpha * x[t];
}

void log_sum_exp_columns(const double* a, std::size_t stride, const double* b, std::size_t p,
                         double* out, std::size_t m) {
  for (std::size_t i = 0; i < m; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    bool nan = false;
    for (std::size_t j = 0; j < p; ++j) {
      const double v = a[j * stride + i] + b[j];
      nan |= std::isnan(v);
      if (v > mx) mx = v;
    }
    if (nan) {
      out[i] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    if (!(mx > kExcludedLog)) {
      out[i] = -std::numeric_limits<double>::infinity();
      continue;
    }
    if (std::isinf(mx)) {
      out[i] = mx;
      continue;
    }
    double s = 0.0;
    for (std::size_t j = 0; j < p; ++j) s += std::exp(a[j * stride + i] + b[j] - mx);
    out[i] = mx + std::log(s);
  }
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{Backend::scalar, &log_sum_exp_pair, &exp_pair, &dot, &axpy,
                             &log_sum_exp_columns};
  return t;
}

}  // namespace sla::kernels::scalar
