// SPDX-License-Identifier: Apache-2.0
#pragma once

// Subcommand bodies for the `sla` tool. Each returns a process exit code and
// reports diagnostics on `err`; none of them throws.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

#include "sla/matrix.hpp"

namespace sla::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitInput = 1,
  kExitNonConvergence = 2,
  kExitNumerical = 3,
  kExitGap = 4,  // oracle: a Sinkhorn objective missed the gap tolerance
};

struct SolveOptions {
  std::optional<std::filesystem::path> cost_csv;   // exactly one of cost_csv,
  std::optional<std::filesystem::path> probs_csv;  // probs_csv
  std::optional<Vector> bounds;                    // default 1_k
  double rho = 1.0;
  double gamma = 100.0;
  double tolerance_factor = 0.01;
  int max_iters = 10000;
  std::filesystem::path out = "solve_out";
};

/// Writes plan.csv (n x k block), padded_plan.csv, scalings.json and summary.json.
int cmd_solve(const SolveOptions& opts, std::ostream& out, std::ostream& err);

struct OracleOptions {
  std::optional<std::filesystem::path> instance;  // instance or suite JSON
  std::optional<std::filesystem::path> plan_csv;  // supplied Sinkhorn plan (single instance)
  std::optional<double> gamma;                    // also solve with Sinkhorn and report the gap
  double tolerance_factor = 1e-6;
  int max_iters = 100000;
  std::optional<std::size_t> generate;            // write a random suite instead
  std::uint64_t seed = 0;
  std::filesystem::path out = "oracle_out";
};

/// Instance JSON:
///   {"kind": "transport", "cost": [[..]], "row_targets": [..], "col_targets": [..]}
///   {"kind": "sla", "cost": [[..]], "upper_bounds": [..], "rho": x}
/// optionally with "gamma". A suite is {"instances": [...]}.
int cmd_oracle(const OracleOptions& opts, std::ostream& out, std::ostream& err);

struct TrainOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<double> gamma;
  std::optional<double> rho;  // constant schedule
  std::optional<Vector> bounds;
  std::optional<double> tolerance_factor;
};

/// One run directory per seed plus aggregate.json.
int cmd_train(const std::filesystem::path& config_path, const TrainOverrides& overrides,
              std::ostream& out, std::ostream& err);

/// One aggregate per sweep value plus sweep.json.
int cmd_sweep(const std::filesystem::path& config_path, const TrainOverrides& overrides,
              std::ostream& out, std::ostream& err);

}  // namespace sla::cli
