// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string>

#include "sla/errors.hpp"
#include "sla/kernels.hpp"

namespace sla::kernels {
namespace {

const KernelTable* lookup(Backend b) {
  switch (b) {
    case Backend::scalar:
      return &scalar::table();
    case Backend::avx2:
#if defined(__x86_64__) || defined(__i386__)
      if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return avx2::table();
#endif
      return nullptr;
    case Backend::neon:
      return neon::table();
  }
  return nullptr;
}

const KernelTable* detect() {
  if (const char* env = std::getenv("SLA_KERNELS"); env && *env && std::string(env) != "auto") {
    if (const KernelTable* t = lookup(parse_backend(env))) return t;
    throw InvalidInput(std::string("SLA_KERNELS backend not available: ") + env);
  }
  for (Backend b : {Backend::avx2, Backend::neon})
    if (const KernelTable* t = lookup(b)) return t;
  return &scalar::table();
}

std::atomic<const KernelTable*> g_active{nullptr};

}  // namespace

bool available(Backend b) { return lookup(b) != nullptr; }

std::string_view name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::neon: return "neon";
  }
  return "unknown";
}

Backend parse_backend(std::string_view s) {
  if (s == "scalar") return Backend::scalar;
  if (s == "avx2") return Backend::avx2;
  if (s == "neon") return Backend::neon;
  throw InvalidInput("unknown kernel backend: " + std::string(s));
}

const KernelTable& active() {
  const KernelTable* t = g_active.load(std::memory_order_acquire);
  if (!t) {
    const KernelTable* detected = detect();
    g_active.compare_exchange_strong(t, detected, std::memory_order_acq_rel);
    t = g_active.load(std::memory_order_acquire);
  }
  return *t;
}

void set_backend(Backend b) {
  const KernelTable* t = lookup(b);
  if (!t) throw InvalidInput("kernel backend not available: " + std::string(name(b)));
  g_active.store(t, std::memory_order_release);
}

}  // namespace sla::kernels
