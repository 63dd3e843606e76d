// SPDX-License-Identifier: Apache-2.0
#include "sla/selftrain/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace sla::selftrain {

double cosine_lr(int t, int total, double lr_peak) {
  if (total < 1 || t < 1 || t > total)
    throw InvalidInput("cosine_lr: step " + std::to_string(t) + " outside [1, " +
                       std::to_string(total) + "]");
  return lr_peak * std::cos(7.0 * std::numbers::pi * static_cast<double>(t) /
                            (16.0 * static_cast<double>(total)));
}

void nesterov_step(std::span<double> params, std::span<const double> grads,
                   std::span<double> momentum_buffer, std::span<const char> decay_mask, double lr,
                   double momentum, double weight_decay) {
  if (grads.size() != params.size() || momentum_buffer.size() != params.size() ||
      decay_mask.size() != params.size())
    throw InvalidInput("nesterov_step: shape mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double d = grads[i] + (decay_mask[i] ? weight_decay * params[i] : 0.0);
    momentum_buffer[i] = momentum * momentum_buffer[i] + d;
    params[i] -= lr * (d + momentum * momentum_buffer[i]);
  }
}

void nesterov_step(ClassifierParams& params, std::span<const double> grads, Vector& momentum_buffer,
                   double lr, double momentum, double weight_decay) {
  if (momentum_buffer.empty()) momentum_buffer.assign(params.values().size(), 0.0);
  const std::vector<char> mask = params.decay_mask();
  nesterov_step(params.values(), grads, momentum_buffer, mask, lr, momentum, weight_decay);
}

void ema_update(std::span<double> ema, std::span<const double> params, double decay) {
  if (ema.size() != params.size()) throw InvalidInput("ema_update: shape mismatch");
  if (!(decay >= 0.0 && decay < 1.0)) throw InvalidInput("ema_update: decay must lie in [0, 1)");
  for (std::size_t i = 0; i < ema.size(); ++i) ema[i] = decay * ema[i] + (1.0 - decay) * params[i];
}

void ema_update(ClassifierParams& ema, const ClassifierParams& params, double decay) {
  if (!(ema.shape() == params.shape())) throw InvalidInput("ema_update: shape mismatch");
  ema_update(ema.values(), params.values(), decay);
}

}  // namespace sla::selftrain
