// SPDX-License-Identifier: Apache-2.0
#include "sla/sinkhorn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sla/kernels.hpp"

namespace sla {
namespace {

using kernels::kLogZero;

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

Vector log_targets(std::span<const double> targets) {
  Vector out(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i)
    out[i] = targets[i] > 0.0 ? std::log(targets[i]) : kLogZero;
  return out;
}

// Row update: alpha_i = log r_i - LSE_j(log_kernel_ij + beta_j), with the
// reductions batched over the transposed kernel.
void update_rows(const Matrix& log_kernel_t, std::span<const double> beta, std::span<const double> log_r,
                 std::span<double> lse, std::span<double> alpha) {
  kernels::log_sum_exp_columns(log_kernel_t.flat(), beta, lse);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    if (log_r[i] == kLogZero) {
      alpha[i] = kLogZero;
      continue;
    }
    if (std::isnan(lse[i]) || lse[i] == std::numeric_limits<double>::infinity())
      throw NumericalFailure("sinkhorn: non-finite row update at index " + std::to_string(i));
    if (lse[i] == -std::numeric_limits<double>::infinity())
      throw NumericalFailure("sinkhorn: row " + std::to_string(i) + " has positive target but no reachable mass");
    alpha[i] = log_r[i] - lse[i];
  }
}

}  // namespace

void TransportProblem::validate() const {
  if (cost.rows() == 0 || cost.cols() == 0) throw InvalidInput("transport problem: empty cost");
  if (row_targets.size() != cost.rows())
    throw InvalidInput("transport problem: row_targets length " +
                       std::to_string(row_targets.size()) + " != cost rows " +
                       std::to_string(cost.rows()));
  if (col_targets.size() != cost.cols())
    throw InvalidInput("transport problem: col_targets length " +
                       std::to_string(col_targets.size()) + " != cost cols " +
                       std::to_string(cost.cols()));
  for (double x : cost.flat())
    if (!std::isfinite(x) || x < 0.0)
      throw InvalidInput("transport problem: cost entries must be finite and >= 0");
  for (double x : row_targets)
    if (!std::isfinite(x) || x < 0.0) throw InvalidInput("transport problem: negative row target");
  for (double x : col_targets)
    if (!std::isfinite(x) || x < 0.0) throw InvalidInput("transport problem: negative col target");
  const double sr = sum(row_targets);
  const double sc = sum(col_targets);
  if (std::abs(sr - sc) > 1e-6 * std::max(1.0, sr))
    throw InvalidInput("transport problem: unbalanced marginals (" + std::to_string(sr) + " vs " +
                       std::to_string(sc) + ")");
}

void SinkhornParams::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidInput("sinkhorn: gamma must be > 0");
  if (!(tolerance > 0.0)) throw InvalidInput("sinkhorn: tolerance must be > 0");
  if (max_iters < 1) throw InvalidInput("sinkhorn: max_iters must be >= 1");
}

SinkhornResult sinkhorn_solve(const TransportProblem& problem, const SinkhornParams& params,
                              const std::optional<ScalingVars>& warm_start) {
  problem.validate();
  params.validate();
  const std::size_t m = problem.rows();
  const std::size_t p = problem.cols();

  SinkhornResult result;
  ScalingVars& s = result.scaling;
  if (warm_start) {
    if (warm_start->alpha.size() != m || warm_start->beta.size() != p)
      throw InvalidInput("sinkhorn: warm start dimensions do not match the problem");
    if (!all_finite(warm_start->alpha) || !all_finite(warm_start->beta))
      throw InvalidInput("sinkhorn: warm start contains non-finite scalings");
    s = *warm_start;
  } else {
    s.alpha.assign(m, 0.0);
    s.beta.assign(p, 0.0);
  }

  // Log kernel stored transposed (p x m) so every reduction is contiguous.
  Matrix log_kernel_t(p, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j) log_kernel_t(j, i) = -params.gamma * problem.cost(i, j);
  const Vector log_r = log_targets(problem.row_targets);
  const Vector log_c = log_targets(problem.col_targets);

  // Iterates are diag(u) G diag(v) with G_ij = exp(log_kernel_ij + alpha_i +
  // beta_j). Updates touch only u and v; they are folded into alpha and beta
  // and G is rebuilt when they leave [1/kAbsorb, kAbsorb]. Any step whose sums
  // are tiny or non-finite is redone in the log domain.
  constexpr double kAbsorb = 1e20;
  constexpr double kTiny = 1e-200;
  Matrix g(p, m);
  Vector u(m, 1.0), v(p, 1.0), new_u(m), new_v(p);
  Vector col_sum(p), row_sum(m), col_lse(p), row_lse(m);

  auto rebuild = [&]() {
    for (std::size_t j = 0; j < p; ++j) kernels::exp_pair(log_kernel_t.row(j), s.alpha, s.beta[j], g.row(j));
    for (double x : g.flat())
      if (!(x <= 1e300)) return false;
    return true;
  };
  auto absorb = [&]() {
    for (std::size_t i = 0; i < m; ++i) {
      s.alpha[i] = log_r[i] == kLogZero ? kLogZero : s.alpha[i] + std::log(u[i]);
      u[i] = 1.0;
    }
    for (std::size_t j = 0; j < p; ++j) {
      s.beta[j] = log_c[j] == kLogZero ? kLogZero : s.beta[j] + std::log(v[j]);
      v[j] = 1.0;
    }
  };
  auto out_of_range = [&](const Vector& x, const Vector& log_t) {
    for (std::size_t t = 0; t < x.size(); ++t)
      if (log_t[t] != kLogZero && !(x[t] <= kAbsorb && x[t] >= 1.0 / kAbsorb)) return true;
    return false;
  };

  bool use_log = !rebuild();
  int iter = 0;
  for (;;) {
    double residual = 0.0;
    if (use_log) {
      // log (M^T e^alpha)_j, shared by the stopping rule and the beta update.
      for (std::size_t j = 0; j < p; ++j) {
        col_lse[j] = kernels::log_sum_exp_pair(log_kernel_t.row(j), s.alpha);
        if (std::isnan(col_lse[j]))
          throw NumericalFailure("sinkhorn: NaN in column reduction at iteration " + std::to_string(iter));
        residual += std::abs(problem.col_targets[j] - std::exp(s.beta[j] + col_lse[j]));
      }
    } else {
      for (std::size_t j = 0; j < p; ++j) {
        col_sum[j] = kernels::dot(g.row(j), u);
        if (std::isnan(col_sum[j]))
          throw NumericalFailure("sinkhorn: NaN in column reduction at iteration " + std::to_string(iter));
        residual += std::abs(problem.col_targets[j] - v[j] * col_sum[j]);
      }
    }
    if (!std::isfinite(residual))
      throw NumericalFailure("sinkhorn: non-finite residual at iteration " + std::to_string(iter));
    result.status.residual = residual;
    if (residual <= params.tolerance) {
      result.status.converged = true;
      break;
    }
    if (iter >= params.max_iters) break;

    if (use_log) {
      for (std::size_t j = 0; j < p; ++j) {
        if (log_c[j] == kLogZero) {
          s.beta[j] = kLogZero;
        } else if (col_lse[j] == -std::numeric_limits<double>::infinity()) {
          throw NumericalFailure("sinkhorn: column " + std::to_string(j) +
                                 " has positive target but no reachable mass");
        } else {
          s.beta[j] = log_c[j] - col_lse[j];
        }
      }
      update_rows(log_kernel_t, s.beta, log_r, row_lse, s.alpha);
      use_log = !rebuild();
      ++iter;
      continue;
    }

    bool ok = true;
    for (std::size_t j = 0; j < p && ok; ++j) {
      new_v[j] = log_c[j] == kLogZero ? 0.0 : problem.col_targets[j] / col_sum[j];
      ok = log_c[j] == kLogZero || (col_sum[j] >= kTiny && std::isfinite(new_v[j]));
    }
    if (ok) {
      std::fill(row_sum.begin(), row_sum.end(), 0.0);
      for (std::size_t j = 0; j < p; ++j)
        if (new_v[j] != 0.0) kernels::axpy(new_v[j], g.row(j), row_sum);
      for (std::size_t i = 0; i < m && ok; ++i) {
        new_u[i] = log_r[i] == kLogZero ? 0.0 : problem.row_targets[i] / row_sum[i];
        ok = log_r[i] == kLogZero || (row_sum[i] >= kTiny && std::isfinite(new_u[i]));
      }
    }
    if (!ok) {
      // Same state, redone in the log domain; the residual is recomputed there.
      absorb();
      use_log = true;
      continue;
    }
    u.swap(new_u);
    v.swap(new_v);
    ++iter;
    if (out_of_range(u, log_r) || out_of_range(v, log_c)) {
      absorb();
      use_log = !rebuild();
    }
  }
  absorb();
  result.status.iterations = iter;
  return result;
}

Matrix transport_plan(const TransportProblem& problem, const ScalingVars& scaling, double gamma) {
  const std::size_t m = problem.rows();
  const std::size_t p = problem.cols();
  if (scaling.alpha.size() != m || scaling.beta.size() != p)
    throw InvalidInput("transport_plan: scaling dimensions do not match the problem");
  if (!(gamma > 0.0)) throw InvalidInput("transport_plan: gamma must be > 0");
  Matrix plan(m, p);
  Vector log_kernel_row(p);
  for (std::size_t i = 0; i < m; ++i) {
    auto cost_row = problem.cost.row(i);
    for (std::size_t j = 0; j < p; ++j) log_kernel_row[j] = -gamma * cost_row[j];
    kernels::exp_pair(log_kernel_row, scaling.beta, scaling.alpha[i], plan.row(i));
  }
  for (double x : plan.flat())
    if (!std::isfinite(x)) throw NumericalFailure("transport_plan: non-finite plan entry");
  return plan;
}

MarginalResiduals marginal_residuals(const TransportProblem& problem, const Matrix& plan) {
  if (plan.rows() != problem.row_targets.size() || plan.cols() != problem.col_targets.size())
    throw InvalidInput("marginal_residuals: plan shape does not match the problem");
  const Vector rs = plan.row_sums();
  const Vector cs = plan.col_sums();
  MarginalResiduals out;
  for (std::size_t i = 0; i < rs.size(); ++i) out.row += std::abs(problem.row_targets[i] - rs[i]);
  for (std::size_t j = 0; j < cs.size(); ++j) out.col += std::abs(problem.col_targets[j] - cs[j]);
  return out;
}

}  // namespace sla
