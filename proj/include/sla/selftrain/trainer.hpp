// SPDX-License-Identifier: Apache-2.0
#pragma once

// Self-training loop with consistency regularization.
//
// Each iteration draws a labeled and an unlabeled minibatch, computes soft
// labels for the unlabeled weak views with the pre-update model, takes one
// Nesterov step on labeled cross-entropy plus lambda times the soft-label
// cross-entropy of the strong views, then refreshes the visited rows of the
// persistent cost matrix and re-solves the allocation problem for rho_t
// (warm-started from the previous scalings).

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sla/allocation.hpp"
#include "sla/selftrain/dataset.hpp"
#include "sla/selftrain/model.hpp"
#include "sla/sinkhorn.hpp"

namespace sla::selftrain {

/// One-hot at the argmax when max probability >= threshold, else full abstention.
std::vector<SoftLabel> assign_confidence_threshold(const Matrix& probs, double threshold);

enum class AssignerKind { sla, confidence_threshold, pseudo_label, supervised_only };
enum class BoundsSource { empirical, wilson, vacuous, explicit_values };

AssignerKind parse_assigner_kind(const std::string& s);
std::string to_string(AssignerKind kind);
BoundsSource parse_bounds_source(const std::string& s);
std::string to_string(BoundsSource source);

struct ScheduleSpec {
  AllocationSchedule::Kind kind = AllocationSchedule::Kind::linear_ramp;
  double parameter = 1.0;  // cap for truncated, value for constant

  AllocationSchedule build(int horizon) const;
};

struct AssignerConfig {
  AssignerKind kind = AssignerKind::sla;
  // sla
  double gamma = 100.0;
  double tolerance_factor = 0.01;
  int max_iters = 10000;
  BoundsSource bounds = BoundsSource::empirical;
  Vector explicit_bounds;
  double wilson_confidence = 0.8;
  ScheduleSpec schedule;
  bool warm_start = true;
  int sla_every = 1;
  // confidence_threshold
  double threshold = 0.95;
};

struct TrainConfig {
  int iterations = 20000;
  std::size_t labeled_batch = 8;
  std::size_t unlabeled_batch = 56;
  double unlabeled_weight = 1.0;
  double lr_peak = 0.03;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double ema_decay = 0.999;
  double weak_noise = 0.05;
  double strong_noise = 0.3;
  std::size_t hidden = 32;
  int eval_every = 1000;
  std::uint64_t seed = 0;
  AssignerConfig assigner;

  void validate() const;
};

/// Upper bounds b for the configured source and labeled class counts.
Vector resolve_bounds(const AssignerConfig& assigner, std::span<const std::int64_t> counts);

struct AllocationMetrics {
  double allocated_fraction = 0.0;
  Vector per_class_mass;
  std::size_t abstained_rows = 0;
  int sinkhorn_iters = 0;
  double col_residual = 0.0;
  double row_residual = 0.0;
  bool converged = false;
  double epsilon = 0.0;
  double total_mass = 0.0;
  double mass_lower_bound = 0.0;  // n (rho_t - mu_+) - 1
  double max_col_excess = 0.0;    // max_j colmass_j - (1 + n b_j)
  double max_row_excess = 0.0;
  Vector beta;
};

struct Checkpoint {
  int t = 0;
  std::optional<double> rho_t;
  double lr = 0.0;
  double test_error = 0.0;      // current parameters
  double ema_test_error = 0.0;  // EMA parameters
  double labeled_loss = 0.0;
  double unlabeled_loss = 0.0;
  std::optional<double> batch_assigned_mass;  // mean sum(q) over the last unlabeled batch
  std::optional<AllocationMetrics> allocation;
  bool failed = false;
  std::string failure;
};

struct TrainerState {
  ClassifierParams params;
  ClassifierParams ema_params;
  Vector momentum_buffer;
  std::optional<CostMatrix> cost;          // rows follow Dataset::unlabeled_indices
  std::optional<ScalingVars> scaling;      // latest allocation scalings
  std::optional<SolveStatus> last_status;
  std::optional<double> last_rho;
  std::vector<char> visited;               // per cost row
  AllocationConfig allocation;             // bounds, gamma, tolerance (rho set per solve)
  int t = 0;
};

struct TrainObserver {
  std::function<void(int t, std::span<const std::size_t> labeled,
                     std::span<const std::size_t> unlabeled, const LossResult& loss)>
      on_step;
  std::function<void(const TrainerState&, const Checkpoint&)> on_checkpoint;
};

struct TrainStats {
  int sla_solves = 0;
  int nonconverged_solves = 0;
  long long sinkhorn_iterations = 0;
  double seconds = 0.0;
  double sla_seconds = 0.0;
};

struct TrainResult {
  ClassifierParams params;
  ClassifierParams ema_params;
  std::vector<Checkpoint> trace;
  TrainStats stats;
  double final_test_error = 0.0;      // EMA model
  double final_raw_test_error = 0.0;  // current parameters
  std::optional<std::string> failure; // set when a numerical failure aborted the run
};

TrainResult self_train(const Dataset& dataset, const TrainConfig& config,
                       const TrainObserver& observer = {});

}  // namespace sla::selftrain
