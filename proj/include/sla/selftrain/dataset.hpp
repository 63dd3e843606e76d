// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sla/matrix.hpp"

namespace sla::selftrain {

using Rng = std::mt19937_64;

/// Label value marking an unlabeled training example.
inline constexpr int kUnlabeled = -1;

enum class DatasetKind { gaussian_blobs, two_moons, concentric_circles };

DatasetKind parse_dataset_kind(const std::string& s);
std::string to_string(DatasetKind kind);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::gaussian_blobs;
  std::size_t classes = 4;  // forced to 2 for moons and circles
  double spread = 0.3;      // Gaussian noise scale
  std::size_t n = 2000;     // training examples (labeled + unlabeled)
  std::size_t labels_per_class = 4;
  std::size_t n_test = 1000;
  std::uint64_t seed = 0;
};

struct Dataset {
  Matrix features;              // n x d
  std::vector<int> labels;      // kUnlabeled for unlabeled rows
  std::vector<std::size_t> labeled_indices;
  std::vector<std::size_t> unlabeled_indices;
  Matrix test_features;
  std::vector<int> test_labels;
  std::size_t num_classes = 0;

  std::size_t n() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }

  /// Checks the sentinel pattern against the index lists and that every class
  /// has at least one labeled example.
  void validate() const;
};

/// Deterministic given spec.seed. Classes are balanced; the labeled subset has
/// exactly labels_per_class examples of each class.
Dataset make_dataset(const DatasetSpec& spec);

/// Rebuilds index lists from a label vector (kUnlabeled = unlabeled).
Dataset dataset_from_labels(Matrix features, std::vector<int> labels, Matrix test_features,
                            std::vector<int> test_labels, std::size_t num_classes);

/// x + sigma * g, g ~ N(0, I)
Vector augment(std::span<const double> x, double sigma, Rng& rng);

}  // namespace sla::selftrain
