// SPDX-License-Identifier: Apache-2.0
#include "sla/selftrain/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace sla::selftrain {
namespace {

void sample_point(DatasetKind kind, std::size_t label, std::size_t classes, double spread, Rng& rng,
                  std::span<double> out) {
  std::normal_distribution<double> noise(0.0, spread);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  double x = 0.0;
  double y = 0.0;
  switch (kind) {
    case DatasetKind::gaussian_blobs: {
      const double theta = 2.0 * std::numbers::pi * static_cast<double>(label) /
                           static_cast<double>(classes);
      x = std::cos(theta);
      y = std::sin(theta);
      break;
    }
    case DatasetKind::two_moons: {
      const double t = angle(rng);
      if (label == 0) {
        x = std::cos(t);
        y = std::sin(t);
      } else {
        x = 1.0 - std::cos(t);
        y = 0.5 - std::sin(t);
      }
      break;
    }
    case DatasetKind::concentric_circles: {
      const double t = 2.0 * angle(rng);
      const double radius = label == 0 ? 1.0 : 0.5;
      x = radius * std::cos(t);
      y = radius * std::sin(t);
      break;
    }
  }
  out[0] = x + noise(rng);
  out[1] = y + noise(rng);
}

// Balanced labels (i mod k) in shuffled order, with sampled features.
void sample_split(const DatasetSpec& spec, std::size_t classes, std::size_t count, Rng& rng,
                  Matrix& features, std::vector<int>& labels) {
  labels.resize(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<int>(i % classes);
  std::shuffle(labels.begin(), labels.end(), rng);
  features = Matrix(count, 2);
  for (std::size_t i = 0; i < count; ++i)
    sample_point(spec.kind, static_cast<std::size_t>(labels[i]), classes, spec.spread, rng,
                 features.row(i));
}

}  // namespace

DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "gaussian_blobs") return DatasetKind::gaussian_blobs;
  if (s == "two_moons") return DatasetKind::two_moons;
  if (s == "concentric_circles") return DatasetKind::concentric_circles;
  throw InvalidInput("unknown dataset kind: " + s);
}

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::gaussian_blobs: return "gaussian_blobs";
    case DatasetKind::two_moons: return "two_moons";
    case DatasetKind::concentric_circles: return "concentric_circles";
  }
  return "unknown";
}

void Dataset::validate() const {
  if (labels.size() != features.rows()) throw InvalidInput("dataset: label count != rows");
  if (num_classes < 2) throw InvalidInput("dataset: need at least 2 classes");
  if (labeled_indices.size() + unlabeled_indices.size() != labels.size())
    throw InvalidInput("dataset: index lists do not partition the examples");
  std::vector<int> seen(num_classes, 0);
  for (std::size_t i : labeled_indices) {
    if (i >= labels.size() || labels[i] == kUnlabeled)
      throw InvalidInput("dataset: labeled index points at an unlabeled example");
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes)
      throw InvalidInput("dataset: label out of range");
    seen[static_cast<std::size_t>(labels[i])] = 1;
  }
  for (std::size_t i : unlabeled_indices)
    if (i >= labels.size() || labels[i] != kUnlabeled)
      throw InvalidInput("dataset: unlabeled index carries a label");
  if (std::find(seen.begin(), seen.end(), 0) != seen.end())
    throw InvalidInput("dataset: every class needs at least one labeled example");
  if (test_labels.size() != test_features.rows())
    throw InvalidInput("dataset: test label count != test rows");
  if (test_features.rows() > 0 && test_features.cols() != features.cols())
    throw InvalidInput("dataset: test feature dimension mismatch");
}

Dataset make_dataset(const DatasetSpec& spec) {
  const std::size_t classes =
      spec.kind == DatasetKind::gaussian_blobs ? spec.classes : std::size_t{2};
  if (classes < 2) throw InvalidInput("make_dataset: need at least 2 classes");
  if (spec.labels_per_class < 1) throw InvalidInput("make_dataset: labels_per_class must be >= 1");
  if (spec.n < classes * spec.labels_per_class)
    throw InvalidInput("make_dataset: n must be >= classes * labels_per_class");
  if (spec.n_test < 1) throw InvalidInput("make_dataset: n_test must be >= 1");
  if (!(spec.spread >= 0.0)) throw InvalidInput("make_dataset: spread must be >= 0");

  Rng rng(spec.seed);
  Matrix features;
  std::vector<int> truth;
  sample_split(spec, classes, spec.n, rng, features, truth);
  Matrix test_features;
  std::vector<int> test_labels;
  sample_split(spec, classes, spec.n_test, rng, test_features, test_labels);

  std::vector<int> labels(spec.n, kUnlabeled);
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < spec.n; ++i)
      if (static_cast<std::size_t>(truth[i]) == c) members.push_back(i);
    if (members.size() < spec.labels_per_class)
      throw InvalidInput("make_dataset: class too small for the requested labeled count");
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t t = 0; t < spec.labels_per_class; ++t) labels[members[t]] = static_cast<int>(c);
  }
  return dataset_from_labels(std::move(features), std::move(labels), std::move(test_features),
                             std::move(test_labels), classes);
}

Dataset dataset_from_labels(Matrix features, std::vector<int> labels, Matrix test_features,
                            std::vector<int> test_labels, std::size_t num_classes) {
  Dataset ds;
  ds.features = std::move(features);
  ds.labels = std::move(labels);
  ds.test_features = std::move(test_features);
  ds.test_labels = std::move(test_labels);
  ds.num_classes = num_classes;
  for (std::size_t i = 0; i < ds.labels.size(); ++i)
    (ds.labels[i] == kUnlabeled ? ds.unlabeled_indices : ds.labeled_indices).push_back(i);
  ds.validate();
  return ds;
}

Vector augment(std::span<const double> x, double sigma, Rng& rng) {
  Vector out(x.begin(), x.end());
  if (sigma == 0.0) return out;
  std::normal_distribution<double> g(0.0, 1.0);
  for (double& v : out) v += sigma * g(rng);
  return out;
}

}  // namespace sla::selftrain
