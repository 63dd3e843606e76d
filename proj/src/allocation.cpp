// SPDX-License-Identifier: Apache-2.0
#include "sla/allocation.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <string>

#include "sla/kernels.hpp"

namespace sla {
namespace {

constexpr double kSimplexTol = 1e-6;

void check_simplex_row(std::span<const double> row, std::size_t i) {
  double s = 0.0;
  for (double x : row) {
    if (!std::isfinite(x) || x < 0.0)
      throw InvalidInput("probability row " + std::to_string(i) + " has a negative or non-finite entry");
    s += x;
  }
  if (std::abs(s - 1.0) > kSimplexTol)
    throw InvalidInput("probability row " + std::to_string(i) + " sums to " + std::to_string(s) +
                       ", not 1");
}

double positive_part(double x) { return std::max(0.0, x); }
double negative_part(double x) { return std::min(0.0, x); }

}  // namespace

double max_cost() { return -std::log(kProbFloor); }

CostMatrix::CostMatrix(Matrix values) : values_(std::move(values)) {
  if (values_.rows() < 1) throw InvalidInput("cost matrix needs n >= 1 rows");
  if (values_.cols() < 2) throw InvalidInput("cost matrix needs k >= 2 classes");
  const double cmax = max_cost() + 1e-12;
  for (double x : values_.flat())
    if (!(x >= 0.0 && x <= cmax))
      throw InvalidInput("cost entries must lie in [0, -log(p_floor)]");
}

CostMatrix CostMatrix::uniform(std::size_t n, std::size_t k) {
  return CostMatrix(Matrix(n, k, std::log(static_cast<double>(k))));
}

void CostMatrix::set_row_from_probabilities(std::size_t i, std::span<const double> probs) {
  if (i >= n() || probs.size() != k()) throw InvalidInput("cost row update: shape mismatch");
  check_simplex_row(probs, i);
  auto row = values_.row(i);
  for (std::size_t j = 0; j < row.size(); ++j) row[j] = -std::log(std::max(probs[j], kProbFloor));
}

void AllocationConfig::validate(std::size_t k) const {
  if (upper_bounds.size() != k)
    throw InvalidInput("allocation: expected " + std::to_string(k) + " upper bounds, got " +
                       std::to_string(upper_bounds.size()));
  for (double b : upper_bounds)
    if (!std::isfinite(b) || b < 0.0) throw InvalidInput("allocation: upper bounds must be >= 0");
  if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidInput("allocation: rho must lie in [0, 1]");
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw InvalidInput("allocation: gamma must be > 0");
  if (!(tolerance_factor > 0.0)) throw InvalidInput("allocation: tolerance_factor must be > 0");
  if (max_iters < 1) throw InvalidInput("allocation: max_iters must be >= 1");
}

double AllocationConfig::mu() const { return 1.0 - sum(upper_bounds); }

AllocationSchedule::AllocationSchedule(Kind kind, double parameter, int horizon)
    : kind_(kind), parameter_(parameter), horizon_(horizon) {
  if (horizon < 1) throw InvalidInput("schedule horizon must be >= 1");
  if (!(parameter >= 0.0 && parameter <= 1.0))
    throw InvalidInput("schedule cap/value must lie in [0, 1]");
  if (kind != Kind::constant && horizon < 2)
    throw InvalidInput("ramp schedules need a horizon of at least 2");
}

AllocationSchedule AllocationSchedule::linear(int horizon) {
  return {Kind::linear_ramp, 1.0, horizon};
}
AllocationSchedule AllocationSchedule::truncated(double cap, int horizon) {
  return {Kind::truncated_ramp, cap, horizon};
}
AllocationSchedule AllocationSchedule::constant(double value, int horizon) {
  return {Kind::constant, value, horizon};
}

double AllocationSchedule::value(int t) const {
  if (t < 1 || t > horizon_)
    throw InvalidInput("schedule step " + std::to_string(t) + " outside [1, " +
                       std::to_string(horizon_) + "]");
  if (kind_ == Kind::constant) return parameter_;
  const double ramp = static_cast<double>(t - 1) / static_cast<double>(horizon_ - 1);
  return kind_ == Kind::linear_ramp ? ramp : std::min(parameter_, ramp);
}

CostMatrix cost_from_probabilities(const Matrix& probs) {
  if (probs.rows() < 1 || probs.cols() < 2)
    throw InvalidInput("probability matrix needs n >= 1 rows and k >= 2 columns");
  Matrix values(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto row = probs.row(i);
    check_simplex_row(row, i);
    for (std::size_t j = 0; j < row.size(); ++j)
      values(i, j) = -std::log(std::max(row[j], kProbFloor));
  }
  return CostMatrix(std::move(values));
}

TransportProblem build_padded_problem(const CostMatrix& cost, const AllocationConfig& config) {
  const std::size_t n = cost.n();
  const std::size_t k = cost.k();
  config.validate(k);
  const double nd = static_cast<double>(n);
  const double kd = static_cast<double>(k);
  const double mu = config.mu();

  TransportProblem problem;
  problem.cost = Matrix(n + 1, k + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto src = cost.values().row(i);
    std::copy(src.begin(), src.end(), problem.cost.row(i).begin());
  }
  problem.row_targets.assign(n + 1, 1.0);
  problem.row_targets[n] = 1.0 + kd + nd * (1.0 - config.rho - negative_part(mu));
  problem.col_targets.resize(k + 1);
  for (std::size_t j = 0; j < k; ++j) problem.col_targets[j] = 1.0 + nd * config.upper_bounds[j];
  problem.col_targets[k] = 1.0 + nd * (1.0 - config.rho + positive_part(mu));
  return problem;
}

SinkhornResult allocate(const CostMatrix& cost, const AllocationConfig& config,
                        const std::optional<ScalingVars>& warm_start) {
  const TransportProblem problem = build_padded_problem(cost, config);
  SinkhornParams params;
  params.gamma = config.gamma;
  params.tolerance = config.tolerance_factor * l1_norm(problem.col_targets);
  params.max_iters = config.max_iters;
  return sinkhorn_solve(problem, params, warm_start);
}

std::vector<SoftLabel> soft_labels(const Matrix& prob_rows, std::span<const double> beta,
                                   double gamma) {
  const std::size_t k = prob_rows.cols();
  if (beta.size() != k + 1)
    throw InvalidInput("soft_labels: beta must have length k + 1 = " + std::to_string(k + 1));
  for (double b : beta)
    if (!std::isfinite(b)) throw InvalidInput("soft_labels: beta has non-finite entries");
  if (!(gamma > 0.0)) throw InvalidInput("soft_labels: gamma must be > 0");

  std::vector<SoftLabel> out;
  out.reserve(prob_rows.rows());
  Vector log_weights(k + 1, 0.0);
  Vector normalized(k + 1);
  for (std::size_t i = 0; i < prob_rows.rows(); ++i) {
    auto row = prob_rows.row(i);
    check_simplex_row(row, i);
    for (std::size_t j = 0; j < k; ++j) log_weights[j] = gamma * std::log(std::max(row[j], kProbFloor));
    log_weights[k] = 0.0;
    const double lse = kernels::log_sum_exp_pair(log_weights, beta);
    kernels::exp_pair(log_weights, beta, -lse, normalized);
    SoftLabel label;
    label.q.assign(normalized.begin(), normalized.begin() + static_cast<std::ptrdiff_t>(k));
    label.abstain_weight = normalized[k];
    out.push_back(std::move(label));
  }
  return out;
}

Vector wilson_upper_bounds(std::span<const std::int64_t> class_counts, double confidence) {
  if (class_counts.empty()) throw InvalidInput("wilson bounds: empty class counts");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw InvalidInput("wilson bounds: confidence must lie in (0, 1)");
  std::int64_t total = 0;
  for (auto c : class_counts) {
    if (c < 0) throw InvalidInput("wilson bounds: negative class count");
    total += c;
  }
  if (total < 1) throw InvalidInput("wilson bounds: need at least one labeled example");

  const boost::math::normal standard;
  const double z = boost::math::quantile(standard, 0.5 * (1.0 + confidence));
  const double nl = static_cast<double>(total);
  const double z2 = z * z;
  Vector bounds;
  bounds.reserve(class_counts.size());
  for (auto c : class_counts) {
    const double p = static_cast<double>(c) / nl;
    const double centre = p + z2 / (2.0 * nl);
    const double spread = z * std::sqrt(p * (1.0 - p) / nl + z2 / (4.0 * nl * nl));
    bounds.push_back(std::min(1.0, (centre + spread) / (1.0 + z2 / nl)));
  }
  return bounds;
}

Vector empirical_bounds(std::span<const std::int64_t> class_counts) {
  if (class_counts.empty()) throw InvalidInput("empirical bounds: empty class counts");
  std::int64_t total = 0;
  for (auto c : class_counts) {
    if (c < 0) throw InvalidInput("empirical bounds: negative class count");
    total += c;
  }
  if (total < 1) throw InvalidInput("empirical bounds: all class counts are zero");
  Vector bounds;
  bounds.reserve(class_counts.size());
  for (auto c : class_counts) bounds.push_back(static_cast<double>(c) / static_cast<double>(total));
  return bounds;
}

AllocationSummary allocation_summary(const Matrix& padded_plan) {
  AllocationSummary s;
  if (padded_plan.rows() < 2 || padded_plan.cols() < 2) return s;
  const std::size_t n = padded_plan.rows() - 1;
  const std::size_t k = padded_plan.cols() - 1;
  s.per_class_mass.assign(k, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_mass = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      row_mass += padded_plan(i, j);
      s.per_class_mass[j] += padded_plan(i, j);
    }
    total += row_mass;
    if (row_mass < 0.5) ++s.abstained_rows;
  }
  s.allocated_fraction = total / static_cast<double>(n);
  return s;
}

FeasibilityReport check_feasibility(const Matrix& padded_plan, const AllocationConfig& config) {
  const std::size_t n = padded_plan.rows() - 1;
  const std::size_t k = padded_plan.cols() - 1;
  config.validate(k);
  const double nd = static_cast<double>(n);
  FeasibilityReport r;
  Vector col(k, 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row_mass = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      row_mass += padded_plan(i, j);
      col[j] += padded_plan(i, j);
    }
    total += row_mass;
    r.max_row_excess = std::max(r.max_row_excess, row_mass - 1.0);
  }
  for (std::size_t j = 0; j < k; ++j)
    r.max_col_excess = std::max(r.max_col_excess, col[j] - (1.0 + nd * config.upper_bounds[j]));
  r.mass_lower_bound = nd * (config.rho - positive_part(config.mu())) - 1.0;
  r.mass_deficit = std::max(0.0, r.mass_lower_bound - total);
  return r;
}

std::vector<std::int64_t> class_counts(std::span<const int> labels, std::size_t k) {
  std::vector<std::int64_t> counts(k, 0);
  for (int y : labels) {
    if (y < 0) continue;
    if (static_cast<std::size_t>(y) >= k) throw InvalidInput("label out of range");
    ++counts[static_cast<std::size_t>(y)];
  }
  return counts;
}

}  // namespace sla
