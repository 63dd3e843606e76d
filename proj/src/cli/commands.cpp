// SPDX-License-Identifier: Apache-2.0
#include "sla/cli/commands.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <ostream>
#include <random>

#include "sla/allocation.hpp"
#include "sla/cli/experiment.hpp"
#include "sla/cli/io.hpp"
#include "sla/errors.hpp"
#include "sla/lp_oracle.hpp"
#include "sla/sinkhorn.hpp"

namespace sla::cli {
namespace {

using io::Json;

Matrix matrix_from_json(const Json& j, const char* what) {
  if (!j.is_array() || j.empty() || !j.front().is_array())
    throw InvalidInput(std::string(what) + ": expected a non-empty array of rows");
  Matrix m(j.size(), j.front().size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (j[i].size() != m.cols())
      throw InvalidInput(std::string(what) + ": row " + std::to_string(i) + " has the wrong length");
    for (std::size_t c = 0; c < m.cols(); ++c) m(i, c) = j[i][c].get<double>();
  }
  return m;
}

Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    rows.push_back(Vector(r.begin(), r.end()));
  }
  return rows;
}

Matrix top_left(const Matrix& m, std::size_t rows, std::size_t cols) {
  Matrix out(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out(i, j) = m(i, j);
  return out;
}

struct OracleOutcome {
  Json report;
  bool gap_failed = false;
  bool nonconverged = false;
};

// Solves one instance exactly and, when asked, with Sinkhorn; `supplied` is
// an externally produced plan of the instance's natural shape.
OracleOutcome run_instance(const Json& inst, const OracleOptions& opts,
                           const std::optional<Matrix>& supplied) {
  const std::string kind = inst.value("kind", std::string("sla"));
  std::optional<double> gamma = opts.gamma;
  if (auto it = inst.find("gamma"); it != inst.end()) gamma = it->get<double>();

  OracleOutcome outcome;
  Json& rep = outcome.report;
  rep["kind"] = kind;
  Matrix natural_cost;
  ExactSolution exact;
  std::optional<Matrix> approx;

  if (kind == "transport") {
    TransportProblem problem;
    problem.cost = matrix_from_json(inst.at("cost"), "cost");
    problem.row_targets = inst.at("row_targets").get<Vector>();
    problem.col_targets = inst.at("col_targets").get<Vector>();
    exact = exact_transport(problem);
    natural_cost = problem.cost;
    if (gamma) {
      SinkhornParams params{*gamma, opts.tolerance_factor * l1_norm(problem.col_targets), opts.max_iters};
      const SinkhornResult res = sinkhorn_solve(problem, params);
      rep["sinkhorn"] = io::to_json(res.status);
      outcome.nonconverged = !res.status.converged;
      approx = transport_plan(problem, res.scaling, *gamma);
    }
  } else if (kind == "sla") {
    const CostMatrix cost(matrix_from_json(inst.at("cost"), "cost"));
    AllocationConfig config;
    config.upper_bounds = inst.at("upper_bounds").get<Vector>();
    config.rho = inst.at("rho").get<double>();
    config.tolerance_factor = opts.tolerance_factor;
    config.max_iters = opts.max_iters;
    exact = exact_sla_lp(cost, config);
    natural_cost = cost.values();
    if (gamma) {
      config.gamma = *gamma;
      const SinkhornResult res = allocate(cost, config);
      rep["sinkhorn"] = io::to_json(res.status);
      outcome.nonconverged = !res.status.converged;
      const TransportProblem padded = build_padded_problem(cost, config);
      const Matrix plan = transport_plan(padded, res.scaling, *gamma);
      const FeasibilityReport f = check_feasibility(plan, config);
      const double eps = config.tolerance_factor * l1_norm(padded.col_targets);
      rep["feasibility"] = Json{{"max_row_excess", f.max_row_excess},
                                {"max_col_excess", f.max_col_excess},
                                {"mass_deficit", f.mass_deficit},
                                {"epsilon", eps},
                                {"within_epsilon", f.within(eps)}};
      approx = top_left(plan, cost.n(), cost.k());
    }
  } else {
    throw InvalidInput("instance kind must be 'transport' or 'sla', got '" + kind + "'");
  }

  rep["objective"] = exact.objective;
  rep["plan"] = matrix_to_json(exact.plan);
  if (supplied) {
    if (supplied->rows() != natural_cost.rows() || supplied->cols() != natural_cost.cols())
      throw InvalidInput("supplied plan shape does not match the instance cost");
    approx = supplied;
  }
  if (approx) {
    const double value = frobenius(*approx, natural_cost);
    const double gap = value - exact.objective;
    const double tol = gap_tolerance(exact.objective);
    rep["approx_objective"] = value;
    rep["gap"] = gap;
    rep["gap_tolerance"] = tol;
    rep["gap_ok"] = std::abs(gap) <= tol;
    outcome.gap_failed = !(std::abs(gap) <= tol);
  }
  return outcome;
}

Json instance_to_json(const SlaInstance& inst) {
  return Json{{"kind", "sla"},
              {"cost", matrix_to_json(inst.cost.values())},
              {"upper_bounds", inst.config.upper_bounds},
              {"rho", inst.config.rho}};
}

void apply_overrides(ExperimentConfig& cfg, const TrainOverrides& o) {
  auto& a = cfg.train.assigner;
  if (o.seed) cfg.seeds = {*o.seed};
  if (o.out) cfg.output_dir = *o.out;
  if (o.gamma) a.gamma = *o.gamma;
  if (o.rho) a.schedule = {AllocationSchedule::Kind::constant, *o.rho};
  if (o.bounds) {
    a.bounds = selftrain::BoundsSource::explicit_values;
    a.explicit_bounds = *o.bounds;
  }
  if (o.tolerance_factor) a.tolerance_factor = *o.tolerance_factor;
  cfg.train.validate();
}

std::string slug(const Json& v) {
  std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  for (char& c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_')) c = '_';
  return s;
}

// Runs every seed of `cfg` under `dir`; returns kExitNumerical if any failed.
int run_all_seeds(const ExperimentConfig& cfg, const std::filesystem::path& dir, Aggregate& agg,
                  std::ostream& out, std::ostream& err) {
  std::vector<RunRecord> runs;
  int code = kExitOk;
  for (std::uint64_t seed : cfg.seeds) {
    const auto run_dir = dir / ("seed_" + std::to_string(seed));
    runs.push_back(run_seed(cfg, seed, run_dir));
    const auto& r = runs.back().result;
    if (r.failure) {
      err << "seed " << seed << ": numerical failure: " << *r.failure << "\n"
          << "  diagnostic checkpoint: " << (run_dir / "failure.json").string() << "\n";
      code = kExitNumerical;
    } else {
      out << "seed " << seed << ": final test error " << io::format_double(r.final_test_error) << "\n";
    }
  }
  agg = aggregate(runs);
  io::write_json(dir / "aggregate.json", to_json(agg));
  return code;
}

template <typename Body>
int guarded(std::ostream& err, Body&& body) {
  try {
    return body();
  } catch (const InvalidInput& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const UnsupportedInstance& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  }
}

}  // namespace

int cmd_solve(const SolveOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.cost_csv.has_value() == opts.probs_csv.has_value())
      throw InvalidInput("solve: give exactly one of --cost and --probs");
    const CostMatrix cost = opts.cost_csv ? CostMatrix(io::read_matrix_csv(*opts.cost_csv))
                                          : cost_from_probabilities(io::read_matrix_csv(*opts.probs_csv));
    AllocationConfig config;
    config.upper_bounds = opts.bounds.value_or(Vector(cost.k(), 1.0));
    config.rho = opts.rho;
    config.gamma = opts.gamma;
    config.tolerance_factor = opts.tolerance_factor;
    config.max_iters = opts.max_iters;

    const SinkhornResult res = allocate(cost, config);
    const TransportProblem padded = build_padded_problem(cost, config);
    const Matrix plan = transport_plan(padded, res.scaling, config.gamma);
    const AllocationSummary summary = allocation_summary(plan);
    const FeasibilityReport f = check_feasibility(plan, config);

    io::write_matrix_csv(opts.out / "plan.csv", top_left(plan, cost.n(), cost.k()));
    io::write_matrix_csv(opts.out / "padded_plan.csv", plan);
    io::write_json(opts.out / "scalings.json", io::to_json(res.scaling));
    Json s = io::to_json(summary);
    s["status"] = io::to_json(res.status);
    s["objective"] = frobenius(top_left(plan, cost.n(), cost.k()), cost.values());
    s["epsilon"] = config.tolerance_factor * l1_norm(padded.col_targets);
    s["feasibility"] = Json{{"max_row_excess", f.max_row_excess},
                            {"max_col_excess", f.max_col_excess},
                            {"mass_deficit", f.mass_deficit},
                            {"mass_lower_bound", f.mass_lower_bound}};
    io::write_json(opts.out / "summary.json", s);

    out << "allocated_fraction " << io::format_double(summary.allocated_fraction) << "\n"
        << "iterations " << res.status.iterations << "\n";
    if (!res.status.converged) {
      err << "solve: no convergence after " << res.status.iterations << " iterations (residual "
          << io::format_double(res.status.residual) << ")\n";
      return int{kExitNonConvergence};
    }
    return int{kExitOk};
  });
}

int cmd_oracle(const OracleOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.generate) {
      Json suite{{"seed", opts.seed}, {"instances", Json::array()}};
      for (const SlaInstance& inst : certification_suite(*opts.generate, opts.seed))
        suite["instances"].push_back(instance_to_json(inst));
      io::write_json(opts.out / "suite.json", suite);
      out << "wrote " << *opts.generate << " instances to " << (opts.out / "suite.json").string() << "\n";
      return int{kExitOk};
    }
    if (!opts.instance) throw InvalidInput("oracle: --instance or --generate is required");
    const Json doc = io::read_json(*opts.instance);
    const bool is_suite = doc.contains("instances");
    if (is_suite && opts.plan_csv) throw InvalidInput("oracle: --plan applies to a single instance");
    std::optional<Matrix> supplied;
    if (opts.plan_csv) supplied = io::read_matrix_csv(*opts.plan_csv);

    Json reports = Json::array();
    std::size_t gap_failures = 0;
    std::size_t nonconverged = 0;
    const Json single = Json::array({doc});
    const Json& list = is_suite ? doc.at("instances") : single;
    for (std::size_t i = 0; i < list.size(); ++i) {
      OracleOutcome o;
      try {
        o = run_instance(list[i], opts, supplied);
      } catch (const InvalidInput& e) {
        throw InvalidInput("instance " + std::to_string(i) + ": " + e.what());
      } catch (const UnsupportedInstance& e) {
        throw UnsupportedInstance("instance " + std::to_string(i) + ": " + e.what());
      } catch (const nlohmann::json::exception& e) {
        throw InvalidInput("instance " + std::to_string(i) + ": " + e.what());
      }
      gap_failures += o.gap_failed;
      nonconverged += o.nonconverged;
      reports.push_back(std::move(o.report));
    }
    io::write_json(opts.out / "oracle.json",
                   Json{{"instances", reports},
                        {"gap_failures", gap_failures},
                        {"nonconverged", nonconverged}});
    if (!is_suite) {
      out << "objective " << io::format_double(reports[0]["objective"].get<double>()) << "\n";
      if (reports[0].contains("gap"))
        out << "gap " << io::format_double(reports[0]["gap"].get<double>()) << "\n";
    } else {
      out << list.size() << " instances, " << gap_failures << " gap failures, " << nonconverged
          << " non-converged\n";
    }
    if (gap_failures) return int{kExitGap};
    if (nonconverged) return int{kExitNonConvergence};
    return int{kExitOk};
  });
}

int cmd_train(const std::filesystem::path& config_path, const TrainOverrides& overrides,
              std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig cfg = load_experiment_config(config_path);
    apply_overrides(cfg, overrides);
    if (cfg.sweep) err << "note: config has a sweep section; 'train' ignores it\n";
    Aggregate agg;
    const int code = run_all_seeds(cfg, cfg.output_dir, agg, out, err);
    out << "mean " << io::format_double(agg.mean_error) << " std " << io::format_double(agg.std_error)
        << " over " << agg.n_seeds << " seeds\n";
    return code;
  });
}

int cmd_sweep(const std::filesystem::path& config_path, const TrainOverrides& overrides,
              std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ExperimentConfig base = load_experiment_config(config_path);
    apply_overrides(base, overrides);
    if (!base.sweep) throw InvalidInput("sweep: config has no 'sweep' section");
    const SweepSpec sweep = *base.sweep;
    Json entries = Json::array();
    int code = kExitOk;
    for (const Json& value : sweep.values) {
      ExperimentConfig cfg = apply_sweep_value(base, sweep.parameter, value);
      const auto dir = base.output_dir / (sweep.parameter + "=" + slug(value));
      out << sweep.parameter << " = " << value.dump() << "\n";
      Aggregate agg;
      if (run_all_seeds(cfg, dir, agg, out, err) != kExitOk) code = kExitNumerical;
      Json entry = to_json(agg);
      entry["value"] = value;
      entry["dir"] = dir.string();
      entries.push_back(entry);
    }
    io::write_json(base.output_dir / "sweep.json",
                   Json{{"parameter", sweep.parameter}, {"results", entries}});
    return code;
  });
}

}  // namespace sla::cli
