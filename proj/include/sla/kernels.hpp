// SPDX-License-Identifier: Apache-2.0
#pragma once

// Data-parallel inner loops shared by the transport solver and the classifier.
//
// Every kernel has a scalar reference implementation and SIMD variants
// (AVX2+FMA on x86-64, NEON on AArch64). The variant is selected once at
// runtime from CPU features and may be overridden with SLA_KERNELS=
// scalar|avx2|neon or set_backend(). Variants agree with the scalar reference
// up to floating-point reassociation; within one backend results are
// bitwise reproducible.

#include <cstddef>
#include <limits>
#include <span>
#include <string_view>

namespace sla::kernels {

/// Log-domain stand-in for log(0). Terms at or below kExcludedLog are treated
/// as exactly zero mass by the reductions.
inline constexpr double kLogZero = -1e30;
inline constexpr double kExcludedLog = -1e29;

enum class Backend { scalar, avx2, neon };

struct KernelTable {
  Backend backend;
  // log(sum_t exp(a[t] + b[t])); -inf when every term is excluded, NaN if any
  // input is NaN.
  double (*log_sum_exp_pair)(const double* a, const double* b, std::size_t n);
  // out[t] = exp(a[t] + b[t] + shift)
  void (*exp_pair)(const double* a, const double* b, double shift, double* out, std::size_t n);
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[i] = log(sum_j exp(a[j * stride + i] + b[j])) for i < m, j < p, with
  // the special values of log_sum_exp_pair. Batches many short reductions.
  void (*log_sum_exp_columns)(const double* a, std::size_t stride, const double* b, std::size_t p,
                              double* out, std::size_t m);
};

namespace scalar {
const KernelTable& table();
}
namespace avx2 {
const KernelTable* table();  // nullptr when not compiled in
}
namespace neon {
const KernelTable* table();
}

bool available(Backend b);
std::string_view name(Backend b);
Backend parse_backend(std::string_view s);

const KernelTable& active();
/// Forces a backend; throws sla::InvalidInput if it is not available here.
void set_backend(Backend b);

inline double log_sum_exp_pair(std::span<const double> a, std::span<const double> b) {
  return active().log_sum_exp_pair(a.data(), b.data(), a.size());
}
inline void exp_pair(std::span<const double> a, std::span<const double> b, double shift,
                     std::span<double> out) {
  active().exp_pair(a.data(), b.data(), shift, out.data(), a.size());
}
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

/// a is p x m row-major; out has length m.
inline void log_sum_exp_columns(std::span<const double> a, std::span<const double> b,
                                std::span<double> out) {
  active().log_sum_exp_columns(a.data(), out.size(), b.data(), b.size(), out.data(), out.size());
}

}  // namespace sla::kernels
