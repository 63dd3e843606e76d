// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "sla/selftrain/model.hpp"

namespace sla::selftrain {

/// lr_peak * cos(7 pi t / (16 T)) for t in [1, T].
double cosine_lr(int t, int total, double lr_peak);

/// Nesterov momentum with decoupled-from-bias weight decay:
///   d = g + wd * mask * theta;  v = m v + d;  theta -= lr (d + m v)
void nesterov_step(std::span<double> params, std::span<const double> grads,
                   std::span<double> momentum_buffer, std::span<const char> decay_mask, double lr,
                   double momentum, double weight_decay);

void nesterov_step(ClassifierParams& params, std::span<const double> grads, Vector& momentum_buffer,
                   double lr, double momentum, double weight_decay);

/// ema <- decay * ema + (1 - decay) * params
void ema_update(std::span<double> ema, std::span<const double> params, double decay);
void ema_update(ClassifierParams& ema, const ClassifierParams& params, double decay);

}  // namespace sla::selftrain
