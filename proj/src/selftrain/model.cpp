// SPDX-License-Identifier: Apache-2.0
#include "sla/selftrain/model.hpp"

#include <algorithm>
#include <cmath>

#include "sla/kernels.hpp"

namespace sla::selftrain {
namespace {

struct Activations {
  Vector pre;     // hidden pre-activations
  Vector hidden;  // max(0, pre)
  Vector logits;
  Vector log_probs;
  Vector probs;
};

void run_forward(const ClassifierParams& params, std::span<const double> x, Activations& act) {
  const ModelShape& s = params.shape();
  if (x.size() != s.inputs) throw InvalidInput("classifier input has wrong dimension");
  std::span<const double> features = x;
  if (s.hidden > 0) {
    act.pre.resize(s.hidden);
    act.hidden.resize(s.hidden);
    auto bias = params.hidden_bias();
    for (std::size_t j = 0; j < s.hidden; ++j) {
      act.pre[j] = kernels::dot(params.hidden_weight_row(j), x) + bias[j];
      act.hidden[j] = std::max(0.0, act.pre[j]);
    }
    features = act.hidden;
  }
  act.logits.resize(s.classes);
  auto out_bias = params.output_bias();
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < s.classes; ++c) {
    act.logits[c] = kernels::dot(params.output_weight_row(c), features) + out_bias[c];
    top = std::max(top, act.logits[c]);
  }
  double z = 0.0;
  for (double v : act.logits) z += std::exp(v - top);
  const double log_z = top + std::log(z);
  act.log_probs.resize(s.classes);
  act.probs.resize(s.classes);
  for (std::size_t c = 0; c < s.classes; ++c) {
    act.log_probs[c] = act.logits[c] - log_z;
    act.probs[c] = std::exp(act.log_probs[c]);
  }
}

// Adds scale * d/dparams [ -sum_c w_c log p_c ] and returns the unscaled loss.
double accumulate_weighted_ce(const ClassifierParams& params, std::span<const double> x,
                              std::span<const double> weights, double scale, Activations& act,
                              Vector& dlogits, Vector& dhidden, ClassifierParams& grads) {
  run_forward(params, x, act);
  const ModelShape& s = params.shape();
  double total_weight = 0.0;
  double loss = 0.0;
  for (std::size_t c = 0; c < s.classes; ++c) {
    total_weight += weights[c];
    if (weights[c] != 0.0) loss -= weights[c] * act.log_probs[c];
  }
  if (total_weight == 0.0) return 0.0;

  dlogits.resize(s.classes);
  for (std::size_t c = 0; c < s.classes; ++c)
    dlogits[c] = scale * (total_weight * act.probs[c] - weights[c]);

  std::span<const double> features = s.hidden > 0 ? std::span<const double>(act.hidden) : x;
  auto gbias = grads.output_bias();
  for (std::size_t c = 0; c < s.classes; ++c) {
    gbias[c] += dlogits[c];
    kernels::axpy(dlogits[c], features, grads.output_weight_row(c));
  }
  if (s.hidden == 0) return loss;

  dhidden.assign(s.hidden, 0.0);
  for (std::size_t c = 0; c < s.classes; ++c)
    kernels::axpy(dlogits[c], params.output_weight_row(c), dhidden);
  auto ghbias = grads.hidden_bias();
  for (std::size_t j = 0; j < s.hidden; ++j) {
    if (!(act.pre[j] > 0.0)) continue;
    ghbias[j] += dhidden[j];
    kernels::axpy(dhidden[j], x, grads.hidden_weight_row(j));
  }
  return loss;
}

}  // namespace

ClassifierParams::ClassifierParams(ModelShape shape)
    : shape_(shape), values_(shape.param_count(), 0.0) {
  if (shape.inputs < 1 || shape.classes < 2) throw InvalidInput("classifier needs d >= 1, k >= 2");
}

ClassifierParams ClassifierParams::initialize(ModelShape shape, Rng& rng) {
  ClassifierParams p(shape);
  auto fill = [&](std::span<double> w, std::size_t fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-limit, limit);
    for (double& v : w) v = u(rng);
  };
  for (std::size_t j = 0; j < shape.hidden; ++j) fill(p.hidden_weight_row(j), shape.inputs);
  for (std::size_t c = 0; c < shape.classes; ++c)
    fill(p.output_weight_row(c), shape.output_fan_in());
  return p;
}

std::span<const double> ClassifierParams::hidden_weight_row(std::size_t j) const {
  return values().subspan(j * shape_.inputs, shape_.inputs);
}
std::span<const double> ClassifierParams::hidden_bias() const {
  return values().subspan(hidden_bias_offset(), shape_.hidden);
}
std::span<const double> ClassifierParams::output_weight_row(std::size_t c) const {
  return values().subspan(output_weights_offset() + c * shape_.output_fan_in(),
                          shape_.output_fan_in());
}
std::span<const double> ClassifierParams::output_bias() const {
  return values().subspan(output_bias_offset(), shape_.classes);
}
std::span<double> ClassifierParams::hidden_weight_row(std::size_t j) {
  return values().subspan(j * shape_.inputs, shape_.inputs);
}
std::span<double> ClassifierParams::hidden_bias() {
  return values().subspan(hidden_bias_offset(), shape_.hidden);
}
std::span<double> ClassifierParams::output_weight_row(std::size_t c) {
  return values().subspan(output_weights_offset() + c * shape_.output_fan_in(),
                          shape_.output_fan_in());
}
std::span<double> ClassifierParams::output_bias() {
  return values().subspan(output_bias_offset(), shape_.classes);
}

std::vector<char> ClassifierParams::decay_mask() const {
  std::vector<char> mask(values_.size(), 0);
  std::fill_n(mask.begin(), shape_.hidden_weights_size(), 1);
  std::fill_n(mask.begin() + static_cast<std::ptrdiff_t>(output_weights_offset()),
              shape_.output_weights_size(), 1);
  return mask;
}

Vector logits(const ClassifierParams& params, std::span<const double> x) {
  Activations act;
  run_forward(params, x, act);
  return act.logits;
}

Vector forward(const ClassifierParams& params, std::span<const double> x) {
  Activations act;
  run_forward(params, x, act);
  return act.probs;
}

Matrix predict(const ClassifierParams& params, const Matrix& inputs) {
  Matrix out(inputs.rows(), params.shape().classes);
  Activations act;
  for (std::size_t i = 0; i < inputs.rows(); ++i) {
    run_forward(params, inputs.row(i), act);
    std::copy(act.probs.begin(), act.probs.end(), out.row(i).begin());
  }
  return out;
}

LossResult loss_and_grad(const ClassifierParams& params, const Matrix& labeled_x,
                         std::span<const int> labels, const Matrix& unlabeled_x,
                         std::span<const SoftLabel> soft, double lambda) {
  const ModelShape& s = params.shape();
  if (labels.size() != labeled_x.rows()) throw InvalidInput("loss: label count != labeled rows");
  if (soft.size() != unlabeled_x.rows()) throw InvalidInput("loss: soft label count != unlabeled rows");
  if (labeled_x.rows() == 0) throw InvalidInput("loss: labeled batch is empty");
  if (!(lambda >= 0.0)) throw InvalidInput("loss: lambda must be >= 0");

  ClassifierParams grads(s);
  Activations act;
  Vector dlogits;
  Vector dhidden;
  Vector onehot(s.classes, 0.0);

  LossResult r;
  const double lscale = 1.0 / static_cast<double>(labeled_x.rows());
  for (std::size_t i = 0; i < labeled_x.rows(); ++i) {
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= s.classes)
      throw InvalidInput("loss: label out of range");
    std::fill(onehot.begin(), onehot.end(), 0.0);
    onehot[static_cast<std::size_t>(labels[i])] = 1.0;
    r.labeled_loss +=
        accumulate_weighted_ce(params, labeled_x.row(i), onehot, lscale, act, dlogits, dhidden, grads);
  }
  r.labeled_loss *= lscale;

  if (unlabeled_x.rows() > 0) {
    const double uscale = 1.0 / static_cast<double>(unlabeled_x.rows());
    for (std::size_t i = 0; i < unlabeled_x.rows(); ++i) {
      if (soft[i].q.size() != s.classes) throw InvalidInput("loss: soft label has wrong length");
      r.unlabeled_loss += accumulate_weighted_ce(params, unlabeled_x.row(i), soft[i].q,
                                                 lambda * uscale, act, dlogits, dhidden, grads);
    }
    r.unlabeled_loss *= uscale;
  }
  r.loss = r.labeled_loss + lambda * r.unlabeled_loss;
  auto gv = grads.values();
  r.grads.assign(gv.begin(), gv.end());
  return r;
}

double evaluate(const ClassifierParams& params, const Matrix& features,
                std::span<const int> labels) {
  if (features.rows() == 0) throw InvalidInput("evaluate: empty split");
  if (labels.size() != features.rows()) throw InvalidInput("evaluate: label count != rows");
  Activations act;
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    run_forward(params, features.row(i), act);
    const auto best = std::max_element(act.logits.begin(), act.logits.end()) - act.logits.begin();
    if (best != labels[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(features.rows());
}

}  // namespace sla::selftrain
