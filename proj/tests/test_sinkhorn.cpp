// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include "doctest.h"
#include "sla/errors.hpp"
#include "sla/lp_oracle.hpp"
#include "sla/sinkhorn.hpp"
#include "support/oracles.hpp"

using namespace sla;

namespace {

TransportProblem random_integral_problem(std::mt19937_64& rng, std::size_t m, std::size_t p, int total) {
  TransportProblem prob;
  prob.cost = testing::random_matrix(rng, m, p, 0.0, 1.0);
  for (int x : testing::random_composition(rng, m, total)) prob.row_targets.push_back(x);
  for (int x : testing::random_composition(rng, p, total)) prob.col_targets.push_back(x);
  return prob;
}

}  // namespace

TEST_CASE("1x1 problem converges immediately to the forced plan") {
  TransportProblem prob{Matrix{{5.0}}, {3.0}, {3.0}};
  const auto res = sinkhorn_solve(prob, {});
  CHECK(res.status.converged);
  const Matrix plan = transport_plan(prob, res.scaling, 100.0);
  CHECK(plan(0, 0) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("uniform cost gives the independent coupling") {
  TransportProblem prob{Matrix(3, 2, 1.0), {1.0, 2.0, 3.0}, {2.0, 4.0}};
  const auto res = sinkhorn_solve(prob, {10.0, 1e-12, 1000});
  const Matrix plan = transport_plan(prob, res.scaling, 10.0);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      CHECK(plan(i, j) == doctest::Approx(prob.row_targets[i] * prob.col_targets[j] / 6.0).epsilon(1e-10));
}

TEST_CASE("log-domain solve matches plain Sinkhorn at small gamma") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    TransportProblem prob;
    prob.cost = testing::random_matrix(rng, 5, 4, 0.0, 2.0);
    prob.row_targets = {1, 2, 3, 1, 1};
    prob.col_targets = {2, 2, 2, 2};
    const auto res = sinkhorn_solve(prob, {2.0, 1e-13, 100000});
    REQUIRE(res.status.converged);
    const Matrix plan = transport_plan(prob, res.scaling, 2.0);
    const Matrix ref = testing::naive_sinkhorn_plan(prob.cost, prob.row_targets, prob.col_targets, 2.0, 5000);
    for (std::size_t t = 0; t < plan.size(); ++t) CHECK(plan.flat()[t] == doctest::Approx(ref.flat()[t]).epsilon(1e-9));
  }
}

TEST_CASE("fixed-point feasibility after convergence") {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 20; ++rep) {
    const auto prob = random_integral_problem(rng, 6, 3, 12);
    const SinkhornParams params{10.0, 1e-8, 200000};
    const auto res = sinkhorn_solve(prob, params);
    REQUIRE(res.status.converged);
    const auto resid = marginal_residuals(prob, transport_plan(prob, res.scaling, params.gamma));
    CHECK(resid.col <= params.tolerance * (1 + 1e-9));
    CHECK(resid.row <= 1e-12 * 12);
  }
}

TEST_CASE("random 6x3 integral problem at gamma 1000 is close to the LP optimum") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 10; ++rep) {
    const auto prob = random_integral_problem(rng, 6, 3, 9);
    const double lp = exact_transport(prob).objective;
    const SinkhornParams params{1000.0, 1e-6 * l1_norm(prob.col_targets), 2000000};
    const auto res = sinkhorn_solve(prob, params);
    CHECK(res.status.converged);
    const double value = frobenius(transport_plan(prob, res.scaling, params.gamma), prob.cost);
    CHECK(std::abs(value - lp) <= 0.05 * (1 + std::abs(lp)));
  }
}

TEST_CASE("zero targets are excluded from the plan") {
  TransportProblem prob{Matrix{{0.0, 1.0, 2.0}, {1.0, 0.0, 3.0}}, {2.0, 0.0}, {1.0, 0.0, 1.0}};
  const auto res = sinkhorn_solve(prob, {5.0, 1e-10, 10000});
  CHECK(res.status.converged);
  const Matrix plan = transport_plan(prob, res.scaling, 5.0);
  for (std::size_t j = 0; j < 3; ++j) CHECK(plan(1, j) == 0.0);
  CHECK(plan(0, 1) == 0.0);
  CHECK(plan(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("warm start from a converged solution needs no further iterations") {
  std::mt19937_64 rng(8);
  const auto prob = random_integral_problem(rng, 5, 4, 10);
  const SinkhornParams params{20.0, 1e-9, 100000};
  const auto cold = sinkhorn_solve(prob, params);
  REQUIRE(cold.status.converged);
  const auto warm = sinkhorn_solve(prob, params, cold.scaling);
  CHECK(warm.status.converged);
  CHECK(warm.status.iterations == 0);
  CHECK_THROWS_AS(sinkhorn_solve(prob, params, ScalingVars{{0.0}, {0.0}}), InvalidInput);
}

TEST_CASE("iteration cap is reported, not thrown") {
  std::mt19937_64 rng(9);
  const auto prob = random_integral_problem(rng, 6, 4, 12);
  const auto res = sinkhorn_solve(prob, {1000.0, 1e-12, 3});
  CHECK_FALSE(res.status.converged);
  CHECK(res.status.iterations == 3);
  CHECK(res.status.residual > 1e-12);
}

TEST_CASE("validation") {
  CHECK_THROWS_AS(sinkhorn_solve(TransportProblem{Matrix{{1.0}}, {1.0}, {2.0}}, {}), InvalidInput);
  CHECK_THROWS_AS(sinkhorn_solve(TransportProblem{Matrix{{-1.0}}, {1.0}, {1.0}}, {}), InvalidInput);
  CHECK_THROWS_AS(sinkhorn_solve(TransportProblem{Matrix{{1.0, 2.0}}, {1.0}, {1.0}}, {}), InvalidInput);
  CHECK_THROWS_AS(sinkhorn_solve(TransportProblem{Matrix{{NAN}}, {1.0}, {1.0}}, {}), InvalidInput);
  CHECK_THROWS_AS(sinkhorn_solve(TransportProblem{Matrix{{1.0}}, {1.0}, {1.0}}, {0.0, 1e-6, 10}), InvalidInput);
  CHECK_THROWS_AS(sinkhorn_solve(TransportProblem{Matrix{{1.0}}, {1.0}, {1.0}}, {1.0, 1e-6, 0}), InvalidInput);
}

TEST_CASE("marginal residuals of an exact plan are zero") {
  TransportProblem prob{Matrix{{0.0, 1.0}, {1.0, 0.0}}, {1.0, 1.0}, {1.0, 1.0}};
  const auto r = marginal_residuals(prob, Matrix{{1.0, 0.0}, {0.0, 1.0}});
  CHECK(r.row == 0.0);
  CHECK(r.col == 0.0);
}

TEST_CASE("objective gap shrinks as gamma grows on a unique-optimum instance") {
  // Costs with distinct values so the LP optimum is unique.
  TransportProblem prob{Matrix{{0.1, 0.7, 1.3}, {0.9, 0.2, 0.5}, {0.4, 1.1, 0.3}}, {2, 1, 1}, {1, 2, 1}};
  const double lp = exact_transport(prob).objective;
  double prev = 1e300;
  for (double gamma : {1.0, 10.0, 100.0, 1000.0}) {
    const SinkhornParams params{gamma, 1e-6 * l1_norm(prob.col_targets), 5000000};
    const auto res = sinkhorn_solve(prob, params);
    REQUIRE(res.status.converged);
    const double gap = frobenius(transport_plan(prob, res.scaling, gamma), prob.cost) - lp;
    CHECK(gap <= prev + 1e-6);
    prev = gap;
  }
}
