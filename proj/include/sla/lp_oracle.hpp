// SPDX-License-Identifier: Apache-2.0
#pragma once

// Exact reference solvers for verifying the Sinkhorn approximation.
//
// Transportation LPs with integral marginals have integral optimal vertices,
// so successive-shortest-path min-cost flow solves them exactly. Costs may be
// real-valued; only the marginals must be integers.

#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "sla/allocation.hpp"
#include "sla/matrix.hpp"
#include "sla/sinkhorn.hpp"

namespace sla {

struct ExactSolution {
  Matrix plan;
  double objective = 0.0;
};

/// Optimal integral plan of a balanced transport problem with integral
/// marginals. Throws UnsupportedInstance for fractional targets and
/// InvalidInput for unbalanced totals.
ExactSolution exact_transport(const TransportProblem& problem);

/// Solves the padded allocation problem exactly and returns the n x k block
/// (the slack row and column carry zero cost, so the objective is unchanged).
ExactSolution exact_sla_lp(const CostMatrix& cost, const AllocationConfig& config);

/// Per-row argmin, lowest index on ties.
std::vector<int> assign_pseudo_labels(const CostMatrix& cost);

/// The floor(rho * n) rows of smallest row-minimum cost (ties by row index),
/// each paired with its argmin class. Returned in ascending row order.
std::vector<std::pair<std::size_t, int>> assign_top_rho(const CostMatrix& cost, double rho);

/// True when every entry is within 1e-9 of an integer.
bool is_integral(std::span<const double> values);

/// An allocation instance whose padded marginals are all integers.
struct SlaInstance {
  CostMatrix cost;
  AllocationConfig config;
};

/// Random n in [1, max_n], k in [2, max_k]; b_j = m_j / n and rho = s / n for
/// integers m_j, s. Costs are negative log-softmax of N(0, spread^2) logits.
SlaInstance random_integral_instance(std::mt19937_64& rng, std::size_t max_n, std::size_t max_k,
                                     double spread = 3.0);

/// `count` instances drawn from one seed (n <= 10, k <= 4).
std::vector<SlaInstance> certification_suite(std::size_t count, std::uint64_t seed);

/// |<block, C> - LP*| <= 0.05 (1 + |LP*|)
double gap_tolerance(double lp_optimum);

}  // namespace sla
