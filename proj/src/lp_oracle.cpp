// SPDX-License-Identifier: Apache-2.0
#include "sla/lp_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>

namespace sla {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::int64_t as_integer(double x) { return static_cast<std::int64_t>(std::llround(x)); }

// Successive shortest augmenting paths with Johnson potentials. The graph is
// small and dense, so Dijkstra uses the O(V^2) array form.
class MinCostFlow {
 public:
  explicit MinCostFlow(std::size_t nodes) : adj_(nodes) {}

  std::size_t add_edge(std::size_t from, std::size_t to, std::int64_t cap, double cost) {
    adj_[from].push_back(edges_.size());
    edges_.push_back({to, cap, cost});
    adj_[to].push_back(edges_.size());
    edges_.push_back({from, 0, -cost});
    return edges_.size() - 2;
  }

  std::int64_t flow_on(std::size_t edge) const { return edges_[edge ^ 1].cap; }

  std::int64_t run(std::size_t source, std::size_t sink, std::int64_t demand) {
    const std::size_t nv = adj_.size();
    std::vector<double> potential(nv, 0.0);
    std::vector<double> dist(nv);
    std::vector<std::size_t> via(nv);
    std::vector<char> done(nv);
    std::int64_t flow = 0;
    while (flow < demand) {
      std::fill(dist.begin(), dist.end(), kInf);
      std::fill(done.begin(), done.end(), 0);
      dist[source] = 0.0;
      for (;;) {
        std::size_t u = nv;
        for (std::size_t v = 0; v < nv; ++v)
          if (!done[v] && dist[v] < kInf && (u == nv || dist[v] < dist[u])) u = v;
        if (u == nv) break;
        done[u] = 1;
        for (std::size_t e : adj_[u]) {
          const Edge& ed = edges_[e];
          if (ed.cap <= 0 || done[ed.to]) continue;
          const double reduced = std::max(0.0, ed.cost + potential[u] - potential[ed.to]);
          if (dist[u] + reduced < dist[ed.to]) {
            dist[ed.to] = dist[u] + reduced;
            via[ed.to] = e;
          }
        }
      }
      if (dist[sink] == kInf) break;
      for (std::size_t v = 0; v < nv; ++v)
        if (dist[v] < kInf) potential[v] += dist[v];

      std::int64_t push = demand - flow;
      for (std::size_t v = sink; v != source; v = edges_[via[v] ^ 1].to)
        push = std::min(push, edges_[via[v]].cap);
      for (std::size_t v = sink; v != source; v = edges_[via[v] ^ 1].to) {
        edges_[via[v]].cap -= push;
        edges_[via[v] ^ 1].cap += push;
      }
      flow += push;
    }
    return flow;
  }

 private:
  struct Edge {
    std::size_t to;
    std::int64_t cap;
    double cost;
  };
  std::vector<std::vector<std::size_t>> adj_;
  std::vector<Edge> edges_;
};

}  // namespace

bool is_integral(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double x) {
    return std::isfinite(x) && std::abs(x - std::round(x)) <= 1e-9 * std::max(1.0, std::abs(x));
  });
}

ExactSolution exact_transport(const TransportProblem& problem) {
  problem.validate();
  if (!is_integral(problem.row_targets) || !is_integral(problem.col_targets))
    throw UnsupportedInstance("exact_transport: marginals must be integral");
  const std::size_t m = problem.rows();
  const std::size_t p = problem.cols();
  std::int64_t total_r = 0;
  std::int64_t total_c = 0;
  for (double r : problem.row_targets) total_r += as_integer(r);
  for (double c : problem.col_targets) total_c += as_integer(c);
  if (total_r != total_c)
    throw InvalidInput("exact_transport: unbalanced totals " + std::to_string(total_r) + " vs " +
                       std::to_string(total_c));

  const std::size_t source = 0;
  const std::size_t sink = m + p + 1;
  MinCostFlow mcf(m + p + 2);
  for (std::size_t i = 0; i < m; ++i) mcf.add_edge(source, 1 + i, as_integer(problem.row_targets[i]), 0.0);
  std::vector<std::size_t> cell(m * p);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j)
      cell[i * p + j] = mcf.add_edge(1 + i, 1 + m + j, total_r, problem.cost(i, j));
  for (std::size_t j = 0; j < p; ++j)
    mcf.add_edge(1 + m + j, sink, as_integer(problem.col_targets[j]), 0.0);

  if (mcf.run(source, sink, total_r) != total_r)
    throw InvalidInput("exact_transport: instance is infeasible");

  ExactSolution sol;
  sol.plan = Matrix(m, p);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < p; ++j)
      sol.plan(i, j) = static_cast<double>(mcf.flow_on(cell[i * p + j]));
  sol.objective = frobenius(sol.plan, problem.cost);
  return sol;
}

ExactSolution exact_sla_lp(const CostMatrix& cost, const AllocationConfig& config) {
  const TransportProblem padded = build_padded_problem(cost, config);
  const ExactSolution full = exact_transport(padded);
  ExactSolution sol;
  sol.plan = Matrix(cost.n(), cost.k());
  for (std::size_t i = 0; i < cost.n(); ++i)
    for (std::size_t j = 0; j < cost.k(); ++j) sol.plan(i, j) = full.plan(i, j);
  sol.objective = frobenius(sol.plan, cost.values());
  return sol;
}

std::vector<int> assign_pseudo_labels(const CostMatrix& cost) {
  std::vector<int> out(cost.n());
  for (std::size_t i = 0; i < cost.n(); ++i) {
    auto row = cost.values().row(i);
    out[i] = static_cast<int>(std::min_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

std::vector<std::pair<std::size_t, int>> assign_top_rho(const CostMatrix& cost, double rho) {
  if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidInput("assign_top_rho: rho must lie in [0, 1]");
  const std::vector<int> labels = assign_pseudo_labels(cost);
  std::vector<std::size_t> order(cost.n());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return cost.values()(a, static_cast<std::size_t>(labels[a])) <
           cost.values()(b, static_cast<std::size_t>(labels[b]));
  });
  const auto take = static_cast<std::size_t>(std::floor(rho * static_cast<double>(cost.n()) + 1e-12));
  order.resize(take);
  std::sort(order.begin(), order.end());
  std::vector<std::pair<std::size_t, int>> out;
  out.reserve(take);
  for (std::size_t i : order) out.emplace_back(i, labels[i]);
  return out;
}

SlaInstance random_integral_instance(std::mt19937_64& rng, std::size_t max_n, std::size_t max_k,
                                     double spread) {
  if (max_n < 1 || max_k < 2) throw InvalidInput("random_integral_instance: need max_n >= 1, max_k >= 2");
  const auto n = std::uniform_int_distribution<std::size_t>(1, max_n)(rng);
  const auto k = std::uniform_int_distribution<std::size_t>(2, max_k)(rng);
  const double dn = static_cast<double>(n);
  std::uniform_int_distribution<std::size_t> units(0, n);
  std::normal_distribution<double> logit(0.0, spread);

  SlaInstance inst;
  inst.config.upper_bounds.resize(k);
  for (double& b : inst.config.upper_bounds) b = static_cast<double>(units(rng)) / dn;
  inst.config.rho = static_cast<double>(units(rng)) / dn;

  Matrix probs(n, k);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = probs.row(i);
    double top = -kInf;
    for (double& v : row) top = std::max(top, v = logit(rng));
    double total = 0.0;
    for (double& v : row) total += v = std::exp(v - top);
    for (double& v : row) v /= total;
  }
  inst.cost = cost_from_probabilities(probs);
  return inst;
}

std::vector<SlaInstance> certification_suite(std::size_t count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<SlaInstance> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(random_integral_instance(rng, 10, 4));
  return out;
}

double gap_tolerance(double lp_optimum) { return 0.05 * (1.0 + std::abs(lp_optimum)); }

}  // namespace sla
