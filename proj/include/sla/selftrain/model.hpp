// SPDX-License-Identifier: Apache-2.0
#pragma once

// Single-hidden-layer ReLU network with a softmax output and hand-written
// backpropagation. hidden == 0 degenerates to multinomial logistic regression.
//
// Parameters live in one flat vector so the optimizer and the EMA can treat
// them uniformly. Layout: hidden_weights (h x d), hidden_bias (h),
// output_weights (k x h, or k x d when h == 0), output_bias (k).

#include <cstddef>
#include <span>
#include <vector>

#include "sla/allocation.hpp"
#include "sla/matrix.hpp"
#include "sla/selftrain/dataset.hpp"

namespace sla::selftrain {

struct ModelShape {
  std::size_t inputs = 2;
  std::size_t hidden = 32;
  std::size_t classes = 4;

  std::size_t output_fan_in() const { return hidden > 0 ? hidden : inputs; }
  std::size_t hidden_weights_size() const { return hidden * inputs; }
  std::size_t output_weights_size() const { return classes * output_fan_in(); }
  std::size_t param_count() const {
    return hidden_weights_size() + hidden + output_weights_size() + classes;
  }
  friend bool operator==(const ModelShape&, const ModelShape&) = default;
};

class ClassifierParams {
 public:
  ClassifierParams() = default;
  /// All-zero parameters.
  explicit ClassifierParams(ModelShape shape);
  /// He-uniform weights, zero biases.
  static ClassifierParams initialize(ModelShape shape, Rng& rng);

  const ModelShape& shape() const { return shape_; }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  std::span<const double> hidden_weight_row(std::size_t j) const;
  std::span<const double> hidden_bias() const;
  std::span<const double> output_weight_row(std::size_t c) const;
  std::span<const double> output_bias() const;

  std::span<double> hidden_weight_row(std::size_t j);
  std::span<double> hidden_bias();
  std::span<double> output_weight_row(std::size_t c);
  std::span<double> output_bias();

  /// 1 for weight entries, 0 for biases (weight decay applies to weights only).
  std::vector<char> decay_mask() const;

  friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;

 private:
  std::size_t hidden_bias_offset() const { return shape_.hidden_weights_size(); }
  std::size_t output_weights_offset() const { return hidden_bias_offset() + shape_.hidden; }
  std::size_t output_bias_offset() const {
    return output_weights_offset() + shape_.output_weights_size();
  }

  ModelShape shape_;
  Vector values_;
};

/// Network logits for one input.
Vector logits(const ClassifierParams& params, std::span<const double> x);

/// Softmax probabilities for one input.
Vector forward(const ClassifierParams& params, std::span<const double> x);

/// Row-wise probabilities for a batch of inputs.
Matrix predict(const ClassifierParams& params, const Matrix& inputs);

struct LossResult {
  double loss = 0.0;            // labeled_loss + lambda * unlabeled_loss
  double labeled_loss = 0.0;    // mean cross-entropy over the labeled batch
  double unlabeled_loss = 0.0;  // mean weighted cross-entropy over the unlabeled batch
  Vector grads;                 // d loss / d params, same layout as values()
};

/// Labeled cross-entropy on labeled_x plus lambda times the soft-label weighted
/// cross-entropy on unlabeled_x. An empty unlabeled batch contributes 0.
LossResult loss_and_grad(const ClassifierParams& params, const Matrix& labeled_x,
                         std::span<const int> labels, const Matrix& unlabeled_x,
                         std::span<const SoftLabel> soft, double lambda);

/// Fraction of argmax mispredictions (lowest index wins ties).
double evaluate(const ClassifierParams& params, const Matrix& features,
                std::span<const int> labels);

}  // namespace sla::selftrain
