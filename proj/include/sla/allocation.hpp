// SPDX-License-Identifier: Apache-2.0
#pragma once

// Label allocation as optimal transport.
//
// Given an n x k cost matrix C (negative log class probabilities), upper
// bounds b on per-class allocation fractions and a target allocation fraction
// rho, the allocation LP
//
//   minimize <Q, C>  s.t.  Q >= 0,  Q 1 <= 1,  Q^T 1 <= 1 + n b,
//                          1^T Q 1 >= n (rho - mu_+) - 1,     mu = 1 - b^T 1
//
// is rewritten with slack row/column into a balanced (n+1) x (k+1) transport
// problem and approximated with Sinkhorn iteration. Soft labels are read off
// the class scalings beta.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "sla/matrix.hpp"
#include "sla/sinkhorn.hpp"

namespace sla {

/// Probabilities are clamped to this floor before taking logs.
inline constexpr double kProbFloor = 1e-8;
/// -log(kProbFloor)
double max_cost();

class CostMatrix {
 public:
  CostMatrix() = default;
  /// Validates entries in [0, max_cost()] (with 1e-12 slack), n >= 1, k >= 2.
  explicit CostMatrix(Matrix values);
  /// n x k matrix filled with log k.
  static CostMatrix uniform(std::size_t n, std::size_t k);

  const Matrix& values() const { return values_; }
  std::size_t n() const { return values_.rows(); }
  std::size_t k() const { return values_.cols(); }

  /// Replaces row i with -log(max(p, floor)); p must be on the simplex.
  void set_row_from_probabilities(std::size_t i, std::span<const double> probs);

 private:
  Matrix values_;
};

struct AllocationConfig {
  Vector upper_bounds;            // b, length k
  double rho = 1.0;               // allocation fraction
  double gamma = 100.0;           // entropic regularization
  double tolerance_factor = 0.01; // epsilon = tolerance_factor * ||c||_1
  int max_iters = 10000;

  void validate(std::size_t k) const;
  /// mu = 1 - b^T 1
  double mu() const;
};

struct SoftLabel {
  Vector q;                   // per-class weights, q >= 0
  double abstain_weight = 0;  // sum(q) + abstain_weight == 1
};

class AllocationSchedule {
 public:
  enum class Kind { linear_ramp, truncated_ramp, constant };

  static AllocationSchedule linear(int horizon);
  static AllocationSchedule truncated(double cap, int horizon);
  static AllocationSchedule constant(double value, int horizon);

  Kind kind() const { return kind_; }
  double parameter() const { return parameter_; }
  int horizon() const { return horizon_; }

  /// rho_t for t in [1, horizon]; throws InvalidInput otherwise.
  double value(int t) const;

 private:
  AllocationSchedule(Kind kind, double parameter, int horizon);
  Kind kind_;
  double parameter_;
  int horizon_;
};

inline double schedule_value(const AllocationSchedule& s, int t) { return s.value(t); }

/// values_ij = -log(max(probs_ij, kProbFloor)); rows must sum to 1 within 1e-6.
CostMatrix cost_from_probabilities(const Matrix& probs);

/// The padded (n+1) x (k+1) transport problem: zero-cost slack row and column,
/// r = [1_n, 1 + k + n(1 - rho - mu_-)], c = [1_k + n b, 1 + n(1 - rho + mu_+)].
TransportProblem build_padded_problem(const CostMatrix& cost, const AllocationConfig& config);

/// Sinkhorn on the padded problem with tolerance tolerance_factor * ||c||_1.
SinkhornResult allocate(const CostMatrix& cost, const AllocationConfig& config,
                        const std::optional<ScalingVars>& warm_start = std::nullopt);

/// Rescales each probability row with the class scalings beta (length k+1):
/// [p_1^g e^b_1, ..., p_k^g e^b_k, e^b_{k+1}] normalized to sum 1.
std::vector<SoftLabel> soft_labels(const Matrix& prob_rows, std::span<const double> beta,
                                   double gamma);

/// Upper endpoints of the two-sided Wilson score interval, clamped to <= 1.
Vector wilson_upper_bounds(std::span<const std::int64_t> class_counts, double confidence);

/// count_j / sum(counts)
Vector empirical_bounds(std::span<const std::int64_t> class_counts);

struct AllocationSummary {
  double allocated_fraction = 0.0;  // mass on the n x k block divided by n
  Vector per_class_mass;            // column sums over the first n rows
  std::size_t abstained_rows = 0;   // rows with block mass < 0.5
};

/// Diagnostics for a padded (n+1) x (k+1) plan.
AllocationSummary allocation_summary(const Matrix& padded_plan);

/// Worst-case violations of the allocation LP's inequality constraints by the
/// n x k block of a padded plan. Each excess is max(0, lhs - rhs).
struct FeasibilityReport {
  double max_row_excess = 0.0;   // over rows: sum_j Q_ij - 1
  double max_col_excess = 0.0;   // over classes: sum_i Q_ij - (1 + n b_j)
  double mass_deficit = 0.0;     // n (rho - mu_+) - 1 - sum Q
  double mass_lower_bound = 0.0; // n (rho - mu_+) - 1
  bool within(double eps) const {
    return max_row_excess <= eps && max_col_excess <= eps && mass_deficit <= eps;
  }
};

FeasibilityReport check_feasibility(const Matrix& padded_plan, const AllocationConfig& config);

/// Per-class counts of labeled examples.
std::vector<std::int64_t> class_counts(std::span<const int> labels, std::size_t k);

}  // namespace sla
