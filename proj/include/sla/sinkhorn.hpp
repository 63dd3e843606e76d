// SPDX-License-Identifier: Apache-2.0
#pragma once

// Log-domain Sinkhorn-Knopp for entropically regularized optimal transport.
//
// The plan has the form diag(e^alpha) exp(-gamma * cost) diag(e^beta). The
// raw kernel exp(-gamma * cost) is never formed, so gamma * cost may be far
// beyond the exp range. Iterations run on the stabilized kernel
// exp(alpha_i + beta_j - gamma * cost_ij) with scalings folded back into
// alpha and beta before they grow large (log-domain absorption), and fall back
// to log-sum-exp updates when a scaled sum underflows.

#include <optional>

#include "sla/matrix.hpp"

namespace sla {

struct TransportProblem {
  Matrix cost;             // m x p, finite, >= 0
  Vector row_targets;      // length m, >= 0
  Vector col_targets;      // length p, >= 0

  std::size_t rows() const { return cost.rows(); }
  std::size_t cols() const { return cost.cols(); }

  /// Throws InvalidInput unless shapes agree, entries are finite and
  /// nonnegative, and |sum(r) - sum(c)| <= 1e-6 * max(1, sum(r)).
  void validate() const;
};

struct SinkhornParams {
  double gamma = 100.0;
  double tolerance = 1e-6;  // on the l1 column residual
  int max_iters = 10000;

  void validate() const;
};

/// Log-domain scalings. Entries equal to kernels::kLogZero encode a zero
/// target (no mass on that row/column).
struct ScalingVars {
  Vector alpha;
  Vector beta;
};

struct SolveStatus {
  bool converged = false;
  int iterations = 0;     // number of (beta, alpha) update pairs performed
  double residual = 0.0;  // final l1 column residual
};

struct SinkhornResult {
  ScalingVars scaling;
  SolveStatus status;
};

/// Alternates beta <- log c - log(M^T e^alpha), alpha <- log r - log(M e^beta)
/// until ||c - colsum(plan)||_1 <= tolerance or max_iters update pairs ran.
/// Non-convergence is reported through status; a non-finite intermediate
/// throws NumericalFailure.
SinkhornResult sinkhorn_solve(const TransportProblem& problem, const SinkhornParams& params,
                              const std::optional<ScalingVars>& warm_start = std::nullopt);

/// plan_ij = exp(alpha_i - gamma * cost_ij + beta_j)
Matrix transport_plan(const TransportProblem& problem, const ScalingVars& scaling, double gamma);

struct MarginalResiduals {
  double row = 0.0;
  double col = 0.0;
};

/// (||r - plan 1||_1, ||c - plan^T 1||_1)
MarginalResiduals marginal_residuals(const TransportProblem& problem, const Matrix& plan);

}  // namespace sla
