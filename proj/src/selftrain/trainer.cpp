// SPDX-License-Identifier: Apache-2.0
#include "sla/selftrain/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "sla/selftrain/optim.hpp"

namespace sla::selftrain {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Independent generator per purpose so that, e.g., the labeled batch sequence
// does not depend on which assigner is active.
Rng make_stream(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return Rng(seq);
}

// Cycles through a shuffled pool, reshuffling at every epoch boundary.
class EpochSampler {
 public:
  EpochSampler(std::vector<std::size_t> pool, Rng rng) : pool_(std::move(pool)), rng_(rng) {
    std::shuffle(pool_.begin(), pool_.end(), rng_);
  }

  std::vector<std::size_t> next(std::size_t count) {
    std::vector<std::size_t> out;
    out.reserve(count);
    while (out.size() < count && !pool_.empty()) {
      if (pos_ == pool_.size()) {
        std::shuffle(pool_.begin(), pool_.end(), rng_);
        pos_ = 0;
      }
      out.push_back(pool_[pos_++]);
    }
    return out;
  }

 private:
  std::vector<std::size_t> pool_;
  Rng rng_;
  std::size_t pos_ = 0;
};

Matrix gather_views(const Matrix& features, std::span<const std::size_t> idx, double sigma, Rng& rng) {
  Matrix out(idx.size(), features.cols());
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const Vector v = augment(features.row(idx[r]), sigma, rng);
    std::copy(v.begin(), v.end(), out.row(r).begin());
  }
  return out;
}

std::vector<SoftLabel> pseudo_labels(const Matrix& probs) {
  std::vector<SoftLabel> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto row = probs.row(i);
    out[i].q.assign(row.size(), 0.0);
    out[i].q[static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin())] = 1.0;
  }
  return out;
}

AllocationMetrics allocation_metrics(const TrainerState& state) {
  AllocationMetrics m;
  const TransportProblem problem = build_padded_problem(*state.cost, state.allocation);
  const Matrix plan = transport_plan(problem, *state.scaling, state.allocation.gamma);
  const AllocationSummary summary = allocation_summary(plan);
  const FeasibilityReport feas = check_feasibility(plan, state.allocation);
  const MarginalResiduals res = marginal_residuals(problem, plan);
  m.allocated_fraction = summary.allocated_fraction;
  m.per_class_mass = summary.per_class_mass;
  m.abstained_rows = summary.abstained_rows;
  m.sinkhorn_iters = state.last_status->iterations;
  m.col_residual = res.col;
  m.row_residual = res.row;
  m.converged = state.last_status->converged;
  m.epsilon = state.allocation.tolerance_factor * l1_norm(problem.col_targets);
  m.total_mass = summary.allocated_fraction * static_cast<double>(state.cost->n());
  m.mass_lower_bound = feas.mass_lower_bound;
  m.max_col_excess = feas.max_col_excess;
  m.max_row_excess = feas.max_row_excess;
  m.beta = state.scaling->beta;
  return m;
}

}  // namespace

std::vector<SoftLabel> assign_confidence_threshold(const Matrix& probs, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw InvalidInput("confidence threshold must lie in (0, 1)");
  std::vector<SoftLabel> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    auto row = probs.row(i);
    const auto best = std::max_element(row.begin(), row.end());
    out[i].q.assign(row.size(), 0.0);
    if (*best >= threshold) {
      out[i].q[static_cast<std::size_t>(best - row.begin())] = 1.0;
    } else {
      out[i].abstain_weight = 1.0;
    }
  }
  return out;
}

AssignerKind parse_assigner_kind(const std::string& s) {
  if (s == "sla") return AssignerKind::sla;
  if (s == "confidence_threshold") return AssignerKind::confidence_threshold;
  if (s == "pseudo_label") return AssignerKind::pseudo_label;
  if (s == "supervised_only") return AssignerKind::supervised_only;
  throw InvalidInput("unknown assigner: " + s);
}

std::string to_string(AssignerKind kind) {
  switch (kind) {
    case AssignerKind::sla: return "sla";
    case AssignerKind::confidence_threshold: return "confidence_threshold";
    case AssignerKind::pseudo_label: return "pseudo_label";
    case AssignerKind::supervised_only: return "supervised_only";
  }
  return "unknown";
}

BoundsSource parse_bounds_source(const std::string& s) {
  if (s == "empirical") return BoundsSource::empirical;
  if (s == "wilson") return BoundsSource::wilson;
  if (s == "vacuous" || s == "none") return BoundsSource::vacuous;
  if (s == "explicit") return BoundsSource::explicit_values;
  throw InvalidInput("unknown bounds source: " + s);
}

std::string to_string(BoundsSource source) {
  switch (source) {
    case BoundsSource::empirical: return "empirical";
    case BoundsSource::wilson: return "wilson";
    case BoundsSource::vacuous: return "vacuous";
    case BoundsSource::explicit_values: return "explicit";
  }
  return "unknown";
}

AllocationSchedule ScheduleSpec::build(int horizon) const {
  switch (kind) {
    case AllocationSchedule::Kind::linear_ramp: return AllocationSchedule::linear(horizon);
    case AllocationSchedule::Kind::truncated_ramp: return AllocationSchedule::truncated(parameter, horizon);
    case AllocationSchedule::Kind::constant: return AllocationSchedule::constant(parameter, horizon);
  }
  throw InvalidInput("unknown schedule kind");
}

void TrainConfig::validate() const {
  if (iterations < 2) throw InvalidInput("train: iterations must be >= 2");
  if (labeled_batch < 1 || unlabeled_batch < 1) throw InvalidInput("train: batch sizes must be >= 1");
  if (!(unlabeled_weight >= 0.0)) throw InvalidInput("train: unlabeled_weight must be >= 0");
  if (!(lr_peak > 0.0)) throw InvalidInput("train: lr_peak must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidInput("train: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw InvalidInput("train: weight_decay must be >= 0");
  if (!(ema_decay >= 0.0 && ema_decay < 1.0)) throw InvalidInput("train: ema_decay must lie in [0, 1)");
  if (!(weak_noise >= 0.0) || !(strong_noise >= weak_noise))
    throw InvalidInput("train: need 0 <= weak_noise <= strong_noise");
  if (eval_every < 1) throw InvalidInput("train: eval_every must be >= 1");
  if (assigner.sla_every < 1) throw InvalidInput("train: sla_every must be >= 1");
  if (assigner.kind == AssignerKind::confidence_threshold &&
      !(assigner.threshold > 0.0 && assigner.threshold < 1.0))
    throw InvalidInput("train: threshold must lie in (0, 1)");
  if (assigner.kind == AssignerKind::sla) {
    if (!(assigner.gamma > 0.0)) throw InvalidInput("train: gamma must be > 0");
    if (!(assigner.tolerance_factor > 0.0)) throw InvalidInput("train: tolerance_factor must be > 0");
    assigner.schedule.build(iterations);
  }
}

Vector resolve_bounds(const AssignerConfig& assigner, std::span<const std::int64_t> counts) {
  switch (assigner.bounds) {
    case BoundsSource::empirical: return empirical_bounds(counts);
    case BoundsSource::wilson: return wilson_upper_bounds(counts, assigner.wilson_confidence);
    case BoundsSource::vacuous: return Vector(counts.size(), 1.0);
    case BoundsSource::explicit_values:
      if (assigner.explicit_bounds.size() != counts.size())
        throw InvalidInput("explicit bounds need one entry per class");
      return assigner.explicit_bounds;
  }
  throw InvalidInput("unknown bounds source");
}

TrainResult self_train(const Dataset& dataset, const TrainConfig& config,
                       const TrainObserver& observer) {
  dataset.validate();
  config.validate();
  const auto start = Clock::now();
  const std::size_t k = dataset.num_classes;
  const int total = config.iterations;
  const AssignerConfig& assigner = config.assigner;
  const bool use_unlabeled = assigner.kind != AssignerKind::supervised_only;
  const bool use_sla = assigner.kind == AssignerKind::sla;
  if (use_unlabeled && dataset.unlabeled_indices.empty())
    throw InvalidInput("train: assigner needs unlabeled examples");

  Rng init_rng = make_stream(config.seed, 1);
  EpochSampler labeled_sampler(dataset.labeled_indices, make_stream(config.seed, 2));
  EpochSampler unlabeled_sampler(dataset.unlabeled_indices, make_stream(config.seed, 3));
  Rng labeled_aug = make_stream(config.seed, 4);
  Rng unlabeled_aug = make_stream(config.seed, 5);

  TrainerState state;
  const ModelShape shape{dataset.dim(), config.hidden, k};
  state.params = ClassifierParams::initialize(shape, init_rng);
  state.ema_params = state.params;
  state.momentum_buffer.assign(state.params.values().size(), 0.0);

  std::vector<std::size_t> cost_row(dataset.n(), 0);
  std::optional<AllocationSchedule> schedule;
  if (use_sla) {
    for (std::size_t r = 0; r < dataset.unlabeled_indices.size(); ++r)
      cost_row[dataset.unlabeled_indices[r]] = r;
    state.cost = CostMatrix::uniform(dataset.unlabeled_indices.size(), k);
    state.visited.assign(dataset.unlabeled_indices.size(), 0);
    std::vector<int> labeled_labels;
    for (std::size_t i : dataset.labeled_indices) labeled_labels.push_back(dataset.labels[i]);
    state.allocation.upper_bounds = resolve_bounds(assigner, class_counts(labeled_labels, k));
    state.allocation.gamma = assigner.gamma;
    state.allocation.tolerance_factor = assigner.tolerance_factor;
    state.allocation.max_iters = assigner.max_iters;
    state.allocation.rho = 0.0;
    schedule = assigner.schedule.build(total);
  }

  TrainResult result;
  Vector beta_zero(k + 1, 0.0);
  LossResult loss;
  double assigned_mass = 0.0;

  auto emit = [&](Checkpoint cp) {
    if (observer.on_checkpoint) observer.on_checkpoint(state, cp);
    result.trace.push_back(std::move(cp));
  };
  auto make_checkpoint = [&](int t) {
    Checkpoint cp;
    cp.t = t;
    cp.lr = cosine_lr(std::max(t, 1), total, config.lr_peak);
    cp.test_error = evaluate(state.params, dataset.test_features, dataset.test_labels);
    cp.ema_test_error = evaluate(state.ema_params, dataset.test_features, dataset.test_labels);
    cp.labeled_loss = loss.labeled_loss;
    cp.unlabeled_loss = loss.unlabeled_loss;
    if (use_unlabeled) cp.batch_assigned_mass = assigned_mass;
    if (use_sla) {
      cp.rho_t = state.last_rho;
      if (state.scaling && state.last_status) cp.allocation = allocation_metrics(state);
    }
    return cp;
  };

  for (int t = 1; t <= total; ++t) {
    state.t = t;
    const std::vector<std::size_t> lab = labeled_sampler.next(config.labeled_batch);
    const std::vector<std::size_t> unl =
        use_unlabeled ? unlabeled_sampler.next(config.unlabeled_batch) : std::vector<std::size_t>{};

    const Matrix labeled_x = gather_views(dataset.features, lab, config.weak_noise, labeled_aug);
    std::vector<int> labeled_y(lab.size());
    for (std::size_t r = 0; r < lab.size(); ++r) labeled_y[r] = dataset.labels[lab[r]];

    Matrix weak_u(0, dataset.dim());
    Matrix strong_u(0, dataset.dim());
    Matrix probs_u;
    std::vector<SoftLabel> soft;
    if (use_unlabeled) {
      weak_u = gather_views(dataset.features, unl, config.weak_noise, unlabeled_aug);
      strong_u = gather_views(dataset.features, unl, config.strong_noise, unlabeled_aug);
      probs_u = predict(state.params, weak_u);
      switch (assigner.kind) {
        case AssignerKind::sla:
          soft = soft_labels(probs_u, state.scaling ? std::span<const double>(state.scaling->beta)
                                                    : std::span<const double>(beta_zero),
                             assigner.gamma);
          break;
        case AssignerKind::confidence_threshold:
          soft = assign_confidence_threshold(probs_u, assigner.threshold);
          break;
        case AssignerKind::pseudo_label:
          soft = pseudo_labels(probs_u);
          break;
        case AssignerKind::supervised_only:
          break;
      }
      assigned_mass = 0.0;
      for (const SoftLabel& s : soft) assigned_mass += sum(s.q);
      assigned_mass /= static_cast<double>(soft.size());
    }

    loss = loss_and_grad(state.params, labeled_x, labeled_y, strong_u, soft, config.unlabeled_weight);
    nesterov_step(state.params, loss.grads, state.momentum_buffer,
                  cosine_lr(t, total, config.lr_peak), config.momentum, config.weight_decay);
    ema_update(state.ema_params, state.params, config.ema_decay);

    if (use_sla) {
      for (std::size_t r = 0; r < unl.size(); ++r) {
        const std::size_t row = cost_row[unl[r]];
        state.cost->set_row_from_probabilities(row, probs_u.row(r));
        state.visited[row] = 1;
      }
      if (t % assigner.sla_every == 0 || t == total) {
        state.allocation.rho = schedule->value(t);
        const auto solve_start = Clock::now();
        try {
          SinkhornResult solved =
              allocate(*state.cost, state.allocation,
                       assigner.warm_start ? state.scaling : std::optional<ScalingVars>{});
          state.scaling = std::move(solved.scaling);
          state.last_status = solved.status;
          state.last_rho = state.allocation.rho;
        } catch (const NumericalFailure& e) {
          Checkpoint cp = make_checkpoint(t);
          cp.failed = true;
          cp.failure = e.what();
          emit(std::move(cp));
          result.failure = e.what();
          break;
        }
        result.stats.sla_seconds += seconds_since(solve_start);
        ++result.stats.sla_solves;
        result.stats.sinkhorn_iterations += state.last_status->iterations;
        if (!state.last_status->converged) ++result.stats.nonconverged_solves;
      }
    }

    if (observer.on_step) observer.on_step(t, lab, unl, loss);
    if (t % config.eval_every == 0 || t == total) emit(make_checkpoint(t));
  }

  result.params = state.params;
  result.ema_params = state.ema_params;
  result.final_test_error = evaluate(state.ema_params, dataset.test_features, dataset.test_labels);
  result.final_raw_test_error = evaluate(state.params, dataset.test_features, dataset.test_labels);
  result.stats.seconds = seconds_since(start);
  return result;
}

}  // namespace sla::selftrain
