// SPDX-License-Identifier: Apache-2.0
#pragma once

// Experiment configuration documents and run-directory bookkeeping.
//
// A configuration is a JSON object with the sections "dataset", "train",
// "assigner", "seeds", "output_dir" and optionally "sweep". Unknown keys are
// rejected at every level.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sla/cli/io.hpp"
#include "sla/selftrain/dataset.hpp"
#include "sla/selftrain/trainer.hpp"

namespace sla::cli {

struct SweepSpec {
  std::string parameter;       // gamma, tolerance_factor, threshold, rho, cap, unlabeled_weight, assigner
  std::vector<io::Json> values;
};

struct ExperimentConfig {
  selftrain::DatasetSpec dataset;
  bool dataset_seed_fixed = false;  // otherwise each run uses its own seed
  std::optional<std::filesystem::path> train_csv;
  std::optional<std::filesystem::path> test_csv;
  selftrain::TrainConfig train;
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path output_dir = "runs";
  std::optional<SweepSpec> sweep;
};

/// Throws InvalidInput with the offending key path on any schema violation.
ExperimentConfig parse_experiment_config(const io::Json& doc);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
io::Json to_json(const ExperimentConfig& config);

/// Applies one sweep value to a copy of the configuration.
ExperimentConfig apply_sweep_value(const ExperimentConfig& config, const std::string& parameter,
                                   const io::Json& value);

/// Dataset for a run seed: generated from the spec or imported from CSV.
selftrain::Dataset load_dataset(const ExperimentConfig& config, std::uint64_t run_seed);

struct RunRecord {
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  selftrain::TrainResult result;
};

/// Runs one seed and writes config.json, manifest.json, trace.jsonl and
/// summary.json (plus failure.json on numerical failure) under `dir`.
RunRecord run_seed(const ExperimentConfig& config, std::uint64_t seed,
                   const std::filesystem::path& dir);

struct Aggregate {
  double mean_error = 0.0;
  double std_error = 0.0;  // sample standard deviation (n - 1)
  std::size_t n_seeds = 0;
  std::vector<double> errors;
  std::size_t failed_runs = 0;
  double nonconverged_fraction = 0.0;  // over all SLA solves of all runs
};

Aggregate aggregate(const std::vector<RunRecord>& runs);
io::Json to_json(const Aggregate& a);

}  // namespace sla::cli
