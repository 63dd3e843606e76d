// SPDX-License-Identifier: Apache-2.0
// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Tolerances are fixed here.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "sla/allocation.hpp"
#include "sla/lp_oracle.hpp"
#include "sla/selftrain/dataset.hpp"
#include "sla/selftrain/model.hpp"
#include "sla/selftrain/optim.hpp"
#include "sla/selftrain/trainer.hpp"
#include "sla/sinkhorn.hpp"
#include "support/oracles.hpp"

using namespace sla;
using namespace sla::selftrain;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

// 1. Sinkhorn vs the exact LP on random integral instances.
Outcome oracle_equivalence() {
  constexpr double kGamma = 1000.0;
  constexpr double kTolFactor = 1e-6;
  constexpr int kMaxIters = 2000000;
  const auto suite = certification_suite(100, 20240601);
  int gap_fail = 0, feas_fail = 0, nonconv = 0;
  double worst_ratio = 0.0;
  for (const SlaInstance& inst : suite) {
    AllocationConfig config = inst.config;
    config.gamma = kGamma;
    config.tolerance_factor = kTolFactor;
    config.max_iters = kMaxIters;
    const ExactSolution exact = exact_sla_lp(inst.cost, config);
    const SinkhornResult res = allocate(inst.cost, config);
    nonconv += !res.status.converged;
    const TransportProblem padded = build_padded_problem(inst.cost, config);
    const Matrix plan = transport_plan(padded, res.scaling, kGamma);
    const double value = frobenius(plan, padded.cost);
    const double tol = 0.05 * (1.0 + std::abs(exact.objective));
    worst_ratio = std::max(worst_ratio, std::abs(value - exact.objective) / tol);
    gap_fail += !(std::abs(value - exact.objective) <= tol);
    const double eps = kTolFactor * l1_norm(padded.col_targets);
    feas_fail += !check_feasibility(plan, config).within(eps);
  }
  return {gap_fail == 0 && feas_fail == 0,
          "100 instances, gap failures " + std::to_string(gap_fail) + ", feasibility failures " +
              std::to_string(feas_fail) + ", non-converged " + std::to_string(nonconv) +
              ", worst gap/tolerance " + fmt(worst_ratio)};
}

// 2. Flow solver vs exhaustive enumeration.
Outcome flow_certification() {
  std::mt19937_64 rng(99);
  int mismatches = 0;
  const int count = 250;
  for (int rep = 0; rep < count; ++rep) {
    const std::size_t m = 1 + rng() % 5;
    const std::size_t p = 1 + rng() % 5;
    const int total = 1 + static_cast<int>(rng() % 8);
    const auto rows = testing::random_composition(rng, m, total);
    const auto cols = testing::random_composition(rng, p, total);
    TransportProblem prob;
    prob.cost = testing::random_matrix(rng, m, p, 0.0, 10.0);
    prob.row_targets.assign(rows.begin(), rows.end());
    prob.col_targets.assign(cols.begin(), cols.end());
    const double exact = exact_transport(prob).objective;
    const double brute = testing::enumerate_transport_min(prob.cost, rows, cols);
    // Same optimal vertex, summed in a different order.
    mismatches += !(std::abs(exact - brute) <= 1e-12 * std::max(1.0, std::abs(brute)));
  }
  return {mismatches == 0, std::to_string(count) + " instances, mismatches " + std::to_string(mismatches)};
}

// 3. Pseudo-labeling and top-rho selection as special cases.
Outcome special_cases() {
  constexpr double kGamma = 1000.0;
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  int pl_fail = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 5 + rng() % 20;
    const std::size_t k = 2 + rng() % 4;
    // Unique argmin per row, at least 0.1 below every other entry.
    Matrix c(n, k);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t hot = rng() % k;
      const double base = 2.0 * u(rng);
      for (std::size_t j = 0; j < k; ++j) c(i, j) = j == hot ? base : base + 0.1 + 3.0 * u(rng);
    }
    const CostMatrix cost(c);
    AllocationConfig config;
    config.upper_bounds.assign(k, 1.0);
    config.rho = 1.0;
    config.gamma = kGamma;
    config.tolerance_factor = 1e-6;
    config.max_iters = 2000000;
    const auto res = allocate(cost, config);
    const Matrix plan = transport_plan(build_padded_problem(cost, config), res.scaling, kGamma);
    const auto labels = assign_pseudo_labels(cost);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = plan.row(i).first(k);
      if (sum(row) < 0.5) continue;
      const auto arg = std::max_element(row.begin(), row.end()) - row.begin();
      pl_fail += arg != labels[i];
    }
  }

  int top_fail = 0;
  int outside_ceil_window = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 20 + rng() % 31;
    const std::size_t k = 2 + rng() % 3;
    // Row minima on a shuffled grid with spacing 0.06.
    std::vector<double> minima(n);
    for (std::size_t i = 0; i < n; ++i) minima[i] = 0.2 + 0.06 * static_cast<double>(i);
    std::shuffle(minima.begin(), minima.end(), rng);
    Matrix c(n, k);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t hot = rng() % k;
      for (std::size_t j = 0; j < k; ++j) c(i, j) = j == hot ? minima[i] : minima[i] + 0.5 + 5.0 * u(rng);
    }
    const CostMatrix cost(c);
    AllocationConfig config;
    config.upper_bounds.assign(k, 1.0);
    config.rho = 0.1;
    config.gamma = kGamma;
    config.tolerance_factor = 1e-6;
    config.max_iters = 2000000;
    const auto res = allocate(cost, config);
    const Matrix plan = transport_plan(build_padded_problem(cost, config), res.scaling, kGamma);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return minima[a] < minima[b]; });
    std::vector<char> chosen(n, 0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      chosen[i] = sum(plan.row(i).first(k)) >= 0.5;
      count += chosen[i];
    }
    // With b = 1_k the LP forces mass n rho - 1 onto the cheapest rows.
    const double forced = 0.1 * static_cast<double>(n) - 1.0;
    bool ok = std::abs(static_cast<double>(count) - forced) <= 1.0;
    const auto window = static_cast<long>(std::ceil(0.1 * static_cast<double>(n) - 1e-12));
    outside_ceil_window += std::abs(static_cast<long>(count) - window) > 1;
    // The chosen rows must be exactly the `count` smallest row minima.
    for (std::size_t r = 0; r < n; ++r) ok = ok && (chosen[order[r]] != 0) == (r < count);
    // And they agree with the brute-force selector on the same prefix.
    const auto top = assign_top_rho(cost, static_cast<double>(count) / static_cast<double>(n));
    for (const auto& [row, cls] : top) {
      auto r = plan.row(row).first(k);
      ok = ok && chosen[row] && std::max_element(r.begin(), r.end()) - r.begin() == cls;
    }
    top_fail += !ok;
  }
  return {pl_fail == 0 && top_fail == 0, "pseudo-label row mismatches " + std::to_string(pl_fail) +
                                             " (50 instances), top-rho instance failures " +
                                             std::to_string(top_fail) + " (50 instances), outside ceil(0.1 n) +/- 1 " +
                                             std::to_string(outside_ceil_window)};
}

// 4. Padded marginal balance and the KL + entropy identity.
Outcome balance_and_identity() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst_balance = 0.0;
  for (int rep = 0; rep < 1000; ++rep) {
    const std::size_t n = 1 + rng() % 5000;
    const std::size_t k = 2 + rng() % 99;
    AllocationConfig config;
    config.upper_bounds.resize(k);
    const double scale = rep % 3 == 0 ? 1.0 : 3.0 / static_cast<double>(k);
    for (double& b : config.upper_bounds) b = u(rng) * scale;
    config.rho = u(rng);
    const auto p = build_padded_problem(CostMatrix::uniform(n, k), config);
    const long double sr = std::accumulate(p.row_targets.begin(), p.row_targets.end(), 0.0L);
    const long double sc = std::accumulate(p.col_targets.begin(), p.col_targets.end(), 0.0L);
    worst_balance = std::max(worst_balance, static_cast<double>(std::abs(sr - sc) / sr));
  }

  double worst_identity = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t n = 1 + rng() % 20;
    const std::size_t k = 2 + rng() % 8;
    Matrix P = testing::random_probabilities(rng, n, k, 1.0);
    // Keep P away from the probability floor so no clamping occurs.
    for (std::size_t i = 0; i < n; ++i) {
      for (double& x : P.row(i)) x = 0.9 * x + 0.1 / static_cast<double>(k);
    }
    const Matrix Q = testing::random_probabilities(rng, n, k, 2.0);
    const CostMatrix C = cost_from_probabilities(P);
    double lhs = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        const double q = Q(i, j);
        if (q == 0.0) continue;
        lhs += q * std::log(q / P(i, j)) - q * std::log(q);
      }
    const double rhs = frobenius(Q, C.values());
    worst_identity = std::max(worst_identity, std::abs(lhs - rhs) / std::abs(rhs));
  }
  return {worst_balance <= 1e-9 && worst_identity <= 1e-9,
          "worst relative balance error " + fmt(worst_balance) + " (1000 configs), worst identity error " +
              fmt(worst_identity) + " (100 pairs)"};
}

// 5. Finite-difference gradient checks.
Outcome gradient_suite() {
  std::mt19937_64 rng(55);
  int failures = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const std::size_t d = 1 + rng() % 4;
    const std::size_t h = rep % 4 == 0 ? 0 : 1 + rng() % 8;
    const std::size_t k = 2 + rng() % 5;
    ClassifierParams params = ClassifierParams::initialize({d, h, k}, rng);
    std::normal_distribution<double> nrm(0.0, 0.3);
    for (double& v : params.values()) v += nrm(rng);
    const Matrix lx = testing::random_matrix(rng, 1 + rng() % 6, d, -2.0, 2.0);
    std::vector<int> ly(lx.rows());
    for (int& y : ly) y = static_cast<int>(rng() % k);
    const Matrix ux = testing::random_matrix(rng, rng() % 6, d, -2.0, 2.0);
    const Matrix qm = testing::random_probabilities(rng, ux.rows(), k + 1, 1.0);
    std::vector<SoftLabel> soft(ux.rows());
    for (std::size_t i = 0; i < ux.rows(); ++i) {
      soft[i].q.assign(qm.row(i).begin(), qm.row(i).end() - 1);
      soft[i].abstain_weight = qm(i, k);
    }
    const double lambda = 2.0 * std::uniform_real_distribution<double>()(rng);
    const Vector g = loss_and_grad(params, lx, ly, ux, soft, lambda).grads;
    double rep_worst = 0.0;
    for (std::size_t t = 0; t < g.size(); ++t) {
      const double x0 = params.values()[t];
      params.values()[t] = x0 + 1e-5;
      const double up = loss_and_grad(params, lx, ly, ux, soft, lambda).loss;
      params.values()[t] = x0 - 1e-5;
      const double down = loss_and_grad(params, lx, ly, ux, soft, lambda).loss;
      params.values()[t] = x0;
      const double fd = (up - down) / 2e-5;
      const double denom = std::max({std::abs(fd), std::abs(g[t]), 1e-6});
      rep_worst = std::max(rep_worst, std::abs(fd - g[t]) / denom);
    }
    worst = std::max(worst, rep_worst);
    failures += !(rep_worst <= 1e-4);
  }
  return {failures == 0, "100 checks, failures " + std::to_string(failures) + ", worst relative error " + fmt(worst)};
}

// Desk-scale training setup shared by criteria 6 and 7.
constexpr std::uint64_t kSeeds[] = {0, 1, 2, 3, 4};

DatasetSpec desk_dataset(std::uint64_t seed) {
  DatasetSpec s;
  s.kind = DatasetKind::gaussian_blobs;
  s.classes = 4;
  s.spread = 0.3;
  s.n = 2016;  // 16 labeled + 2000 unlabeled
  s.labels_per_class = 4;
  s.n_test = 1000;
  s.seed = seed;
  return s;
}

TrainConfig desk_config(std::uint64_t seed, AssignerKind kind) {
  TrainConfig c;
  c.iterations = 20000;
  c.eval_every = 1000;
  c.seed = seed;
  c.assigner.kind = kind;
  return c;
}

struct DeskRuns {
  std::vector<TrainResult> sla, supervised;
  bool done = false;
};

DeskRuns& desk_runs() {
  static DeskRuns runs;
  if (!runs.done) {
    for (auto seed : kSeeds) {
      const Dataset d = make_dataset(desk_dataset(seed));
      runs.sla.push_back(self_train(d, desk_config(seed, AssignerKind::sla)));
      runs.supervised.push_back(self_train(d, desk_config(seed, AssignerKind::supervised_only)));
    }
    runs.done = true;
  }
  return runs;
}

double mean_error(const std::vector<TrainResult>& rs) {
  double s = 0.0;
  for (const auto& r : rs) s += r.final_test_error;
  return s / static_cast<double>(rs.size());
}

std::string errors_of(const std::vector<TrainResult>& rs) {
  std::string s = "[";
  for (std::size_t i = 0; i < rs.size(); ++i) s += (i ? " " : "") + fmt(rs[i].final_test_error);
  return s + "]";
}

// 6. SLA vs supervised-only, plus allocation invariants at every checkpoint.
Outcome desk_training() {
  const DeskRuns& runs = desk_runs();
  int improved = 0;
  for (std::size_t s = 0; s < runs.sla.size(); ++s)
    improved += runs.sla[s].final_test_error < runs.supervised[s].final_test_error;
  int mass_viol = 0, cap_viol = 0, checkpoints = 0, failed = 0;
  for (const auto& r : runs.sla) {
    failed += r.failure.has_value();
    for (const auto& cp : r.trace) {
      if (!cp.allocation) continue;
      ++checkpoints;
      const auto& a = *cp.allocation;
      mass_viol += !(a.total_mass >= a.mass_lower_bound - a.epsilon);
      cap_viol += !(a.max_col_excess <= a.epsilon);
    }
  }
  const double m_sla = mean_error(runs.sla);
  const double m_sup = mean_error(runs.supervised);
  const bool pass = failed == 0 && m_sla <= m_sup && improved >= 4 && mass_viol == 0 && cap_viol == 0 &&
                    checkpoints > 0;
  return {pass, "mean error sla " + fmt(m_sla) + " " + errors_of(runs.sla) + " vs supervised " + fmt(m_sup) +
                    " " + errors_of(runs.supervised) + ", improved on " + std::to_string(improved) +
                    "/5 seeds, checkpoints " + std::to_string(checkpoints) + ", mass violations " +
                    std::to_string(mass_viol) + ", cap violations " + std::to_string(cap_viol)};
}

// 7. Constant rho = 1 vs the linear ramp.
Outcome annealing_ablation() {
  const DeskRuns& runs = desk_runs();
  std::vector<TrainResult> constant;
  for (auto seed : kSeeds) {
    TrainConfig c = desk_config(seed, AssignerKind::sla);
    c.assigner.schedule = {AllocationSchedule::Kind::constant, 1.0};
    constant.push_back(self_train(make_dataset(desk_dataset(seed)), c));
  }
  const double m_const = mean_error(constant);
  const double m_lin = mean_error(runs.sla);
  return {m_const >= m_lin, "mean error constant " + fmt(m_const) + " " + errors_of(constant) + " vs linear " +
                                fmt(m_lin) + " " + errors_of(runs.sla)};
}

// 8. Learning-rate and schedule endpoints.
Outcome schedule_endpoints() {
  const int T = 20000;
  const double lr_end = cosine_lr(T, T, 0.03);
  const double expected = 0.03 * std::cos(7.0 * std::numbers::pi / 16.0);
  const auto lin = AllocationSchedule::linear(T);
  const auto trunc = AllocationSchedule::truncated(0.8, T);
  const bool pass = std::abs(lr_end - expected) <= 1e-9 && lin.value(1) == 0.0 && lin.value(T) == 1.0 &&
                    trunc.value(1) == 0.0 && trunc.value(T) == 0.8;
  return {pass, "cosine_lr(T, T) = " + fmt(lr_end) + ", linear endpoints " + fmt(lin.value(1)) + " and " +
                    fmt(lin.value(T))};
}

// 9. Wilson bounds for ten classes with four labels each.
Outcome wilson_bounds() {
  const std::vector<std::int64_t> counts(10, 4);
  const Vector b = wilson_upper_bounds(counts, 0.8);
  // Closed-form endpoint with z from bisection on erfc.
  const double z = testing::normal_quantile_bisect(0.9);
  const double n = 40.0, p = 0.1;
  const double closed =
      (p + z * z / (2 * n) + z * std::sqrt(p * (1 - p) / n + z * z / (4 * n * n))) / (1 + z * z / n);
  const double quadratic = testing::wilson_upper_quadratic(4.0, 40.0, 0.8);
  bool pass = std::abs(closed - quadratic) <= 1e-12;
  for (double x : b) pass = pass && std::abs(x - closed) <= 1e-9 && x > 0.1;
  return {pass, "bound " + fmt(b[0]) + ", independent " + fmt(closed) + ", z " + fmt(z)};
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "oracle equivalence", oracle_equivalence},
      {2, "flow-solver certification", flow_certification},
      {3, "special cases", special_cases},
      {4, "marginal balance and objective identity", balance_and_identity},
      {5, "gradient suite", gradient_suite},
      {6, "desk-scale self-training", desk_training},
      {7, "annealing ablation direction", annealing_ablation},
      {8, "schedule and lr endpoints", schedule_endpoints},
      {9, "wilson bounds", wilson_bounds},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s criterion %d (%s): %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(),
                secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
