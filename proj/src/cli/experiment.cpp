// SPDX-License-Identifier: Apache-2.0
#include "sla/cli/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sla/kernels.hpp"

namespace sla::cli {
namespace {

using io::Json;
using selftrain::AssignerKind;
using selftrain::BoundsSource;
using Kind = AllocationSchedule::Kind;

void check_keys(const Json& obj, std::initializer_list<std::string_view> allowed,
                const std::string& where) {
  if (!obj.is_object()) throw InvalidInput(where + ": expected an object");
  for (const auto& [key, _] : obj.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw InvalidInput(where + ": unknown key '" + key + "'");
}

template <typename T>
void read(const Json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) out = it->template get<T>();
}

std::string schedule_name(Kind k) {
  switch (k) {
    case Kind::linear_ramp: return "linear";
    case Kind::truncated_ramp: return "truncated";
    case Kind::constant: return "constant";
  }
  return "unknown";
}

Kind parse_schedule_kind(const std::string& s) {
  if (s == "linear") return Kind::linear_ramp;
  if (s == "truncated") return Kind::truncated_ramp;
  if (s == "constant") return Kind::constant;
  throw InvalidInput("assigner.schedule.kind: unknown schedule '" + s + "'");
}

void parse_dataset(const Json& j, ExperimentConfig& cfg) {
  check_keys(j, {"kind", "classes", "spread", "n", "labels_per_class", "n_test", "seed", "train_csv",
                 "test_csv"},
             "dataset");
  auto& d = cfg.dataset;
  if (auto it = j.find("kind"); it != j.end())
    d.kind = selftrain::parse_dataset_kind(it->get<std::string>());
  read(j, "classes", d.classes);
  read(j, "spread", d.spread);
  read(j, "n", d.n);
  read(j, "labels_per_class", d.labels_per_class);
  read(j, "n_test", d.n_test);
  if (auto it = j.find("seed"); it != j.end()) {
    d.seed = it->get<std::uint64_t>();
    cfg.dataset_seed_fixed = true;
  }
  if (auto it = j.find("train_csv"); it != j.end()) cfg.train_csv = it->get<std::string>();
  if (auto it = j.find("test_csv"); it != j.end()) cfg.test_csv = it->get<std::string>();
  if (cfg.train_csv.has_value() != cfg.test_csv.has_value())
    throw InvalidInput("dataset: train_csv and test_csv must be given together");
}

void parse_train(const Json& j, selftrain::TrainConfig& t) {
  check_keys(j, {"iterations", "labeled_batch", "unlabeled_batch", "unlabeled_weight", "lr_peak",
                 "momentum", "weight_decay", "ema_decay", "weak_noise", "strong_noise", "hidden",
                 "eval_every"},
             "train");
  read(j, "iterations", t.iterations);
  read(j, "labeled_batch", t.labeled_batch);
  read(j, "unlabeled_batch", t.unlabeled_batch);
  read(j, "unlabeled_weight", t.unlabeled_weight);
  read(j, "lr_peak", t.lr_peak);
  read(j, "momentum", t.momentum);
  read(j, "weight_decay", t.weight_decay);
  read(j, "ema_decay", t.ema_decay);
  read(j, "weak_noise", t.weak_noise);
  read(j, "strong_noise", t.strong_noise);
  read(j, "hidden", t.hidden);
  read(j, "eval_every", t.eval_every);
}

void parse_assigner(const Json& j, selftrain::AssignerConfig& a) {
  check_keys(j, {"kind", "gamma", "tolerance_factor", "max_iters", "bounds", "wilson_confidence",
                 "schedule", "warm_start", "sla_every", "threshold"},
             "assigner");
  if (auto it = j.find("kind"); it != j.end()) a.kind = selftrain::parse_assigner_kind(it->get<std::string>());
  read(j, "gamma", a.gamma);
  read(j, "tolerance_factor", a.tolerance_factor);
  read(j, "max_iters", a.max_iters);
  read(j, "wilson_confidence", a.wilson_confidence);
  read(j, "warm_start", a.warm_start);
  read(j, "sla_every", a.sla_every);
  read(j, "threshold", a.threshold);
  if (auto it = j.find("bounds"); it != j.end()) {
    if (it->is_array()) {
      a.bounds = BoundsSource::explicit_values;
      a.explicit_bounds = it->get<Vector>();
    } else {
      a.bounds = selftrain::parse_bounds_source(it->get<std::string>());
      if (a.bounds == BoundsSource::explicit_values)
        throw InvalidInput("assigner.bounds: give explicit bounds as an array");
    }
  }
  if (auto it = j.find("schedule"); it != j.end()) {
    check_keys(*it, {"kind", "cap", "value"}, "assigner.schedule");
    a.schedule.kind = parse_schedule_kind(it->value("kind", std::string("linear")));
    if (a.schedule.kind == Kind::truncated_ramp) a.schedule.parameter = it->value("cap", 0.8);
    if (a.schedule.kind == Kind::constant) a.schedule.parameter = it->value("value", 1.0);
    if (a.schedule.kind == Kind::linear_ramp) a.schedule.parameter = 1.0;
  }
}

}  // namespace

ExperimentConfig parse_experiment_config(const Json& doc) {
  try {
    check_keys(doc, {"dataset", "train", "assigner", "seeds", "output_dir", "sweep"}, "config");
    ExperimentConfig cfg;
    if (auto it = doc.find("dataset"); it != doc.end()) parse_dataset(*it, cfg);
    if (auto it = doc.find("train"); it != doc.end()) parse_train(*it, cfg.train);
    if (auto it = doc.find("assigner"); it != doc.end()) parse_assigner(*it, cfg.train.assigner);
    if (auto it = doc.find("seeds"); it != doc.end()) {
      cfg.seeds = it->get<std::vector<std::uint64_t>>();
      if (cfg.seeds.empty()) throw InvalidInput("seeds: need at least one seed");
    }
    if (auto it = doc.find("output_dir"); it != doc.end()) cfg.output_dir = it->get<std::string>();
    if (auto it = doc.find("sweep"); it != doc.end()) {
      check_keys(*it, {"parameter", "values"}, "sweep");
      SweepSpec sweep;
      sweep.parameter = it->at("parameter").get<std::string>();
      for (const auto& v : it->at("values")) sweep.values.push_back(v);
      if (sweep.values.empty()) throw InvalidInput("sweep.values: empty");
      for (const auto& v : sweep.values) apply_sweep_value(cfg, sweep.parameter, v);
      cfg.sweep = std::move(sweep);
    }
    cfg.train.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(io::read_json(path));
}

Json to_json(const ExperimentConfig& c) {
  Json dataset{{"kind", selftrain::to_string(c.dataset.kind)},
               {"classes", c.dataset.classes},
               {"spread", c.dataset.spread},
               {"n", c.dataset.n},
               {"labels_per_class", c.dataset.labels_per_class},
               {"n_test", c.dataset.n_test}};
  if (c.dataset_seed_fixed) dataset["seed"] = c.dataset.seed;
  if (c.train_csv) {
    dataset["train_csv"] = c.train_csv->string();
    dataset["test_csv"] = c.test_csv->string();
  }
  const auto& t = c.train;
  Json train{{"iterations", t.iterations},        {"labeled_batch", t.labeled_batch},
             {"unlabeled_batch", t.unlabeled_batch}, {"unlabeled_weight", t.unlabeled_weight},
             {"lr_peak", t.lr_peak},              {"momentum", t.momentum},
             {"weight_decay", t.weight_decay},    {"ema_decay", t.ema_decay},
             {"weak_noise", t.weak_noise},        {"strong_noise", t.strong_noise},
             {"hidden", t.hidden},                {"eval_every", t.eval_every}};
  const auto& a = t.assigner;
  Json schedule{{"kind", schedule_name(a.schedule.kind)}};
  if (a.schedule.kind == Kind::truncated_ramp) schedule["cap"] = a.schedule.parameter;
  if (a.schedule.kind == Kind::constant) schedule["value"] = a.schedule.parameter;
  Json assigner{{"kind", selftrain::to_string(a.kind)},
                {"gamma", a.gamma},
                {"tolerance_factor", a.tolerance_factor},
                {"max_iters", a.max_iters},
                {"bounds", a.bounds == BoundsSource::explicit_values ? Json(a.explicit_bounds)
                                                                     : Json(selftrain::to_string(a.bounds))},
                {"wilson_confidence", a.wilson_confidence},
                {"schedule", schedule},
                {"warm_start", a.warm_start},
                {"sla_every", a.sla_every},
                {"threshold", a.threshold}};
  Json doc{{"dataset", dataset}, {"train", train}, {"assigner", assigner},
           {"seeds", c.seeds},   {"output_dir", c.output_dir.string()}};
  if (c.sweep) doc["sweep"] = Json{{"parameter", c.sweep->parameter}, {"values", c.sweep->values}};
  return doc;
}

ExperimentConfig apply_sweep_value(const ExperimentConfig& config, const std::string& parameter,
                                   const Json& value) {
  ExperimentConfig out = config;
  auto& a = out.train.assigner;
  auto number = [&]() {
    if (!value.is_number()) throw InvalidInput("sweep." + parameter + ": values must be numbers");
    return value.get<double>();
  };
  if (parameter == "gamma") {
    a.gamma = number();
  } else if (parameter == "tolerance_factor") {
    a.tolerance_factor = number();
  } else if (parameter == "threshold") {
    a.threshold = number();
  } else if (parameter == "rho") {
    a.schedule = {Kind::constant, number()};
  } else if (parameter == "cap") {
    a.schedule = {Kind::truncated_ramp, number()};
  } else if (parameter == "unlabeled_weight") {
    out.train.unlabeled_weight = number();
  } else if (parameter == "assigner") {
    if (!value.is_string()) throw InvalidInput("sweep.assigner: values must be strings");
    a.kind = selftrain::parse_assigner_kind(value.get<std::string>());
  } else {
    throw InvalidInput("sweep.parameter: unsupported parameter '" + parameter + "'");
  }
  out.train.validate();
  return out;
}

selftrain::Dataset load_dataset(const ExperimentConfig& config, std::uint64_t run_seed) {
  if (config.train_csv) {
    std::ifstream train_in(*config.train_csv);
    std::ifstream test_in(*config.test_csv);
    if (!train_in || !test_in) throw InvalidInput("cannot open dataset CSV files");
    io::LabeledSplit train = io::read_split_csv(train_in);
    io::LabeledSplit test = io::read_split_csv(test_in);
    int top = 0;
    for (int y : train.labels) top = std::max(top, y);
    for (int y : test.labels) top = std::max(top, y);
    return selftrain::dataset_from_labels(std::move(train.features), std::move(train.labels),
                                          std::move(test.features), std::move(test.labels),
                                          static_cast<std::size_t>(top) + 1);
  }
  selftrain::DatasetSpec spec = config.dataset;
  if (!config.dataset_seed_fixed) spec.seed = run_seed;
  return selftrain::make_dataset(spec);
}

RunRecord run_seed(const ExperimentConfig& config, std::uint64_t seed,
                   const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  ExperimentConfig effective = config;
  effective.seeds = {seed};
  effective.sweep.reset();
  effective.output_dir = dir;
  if (!effective.dataset_seed_fixed && !effective.train_csv) {
    effective.dataset.seed = seed;
    effective.dataset_seed_fixed = true;
  }
  effective.train.seed = seed;

  const std::string snapshot = to_json(effective).dump(2) + "\n";
  {
    std::ofstream out(dir / "config.json");
    out << snapshot;
  }
  // The output location is not an input; leave it out of the hash.
  Json inputs = to_json(effective);
  inputs.erase("output_dir");
  std::string hashed = inputs.dump();
  if (config.train_csv) {
    for (const auto& p : {*config.train_csv, *config.test_csv}) {
      std::ifstream in(p, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      hashed += ss.str();
    }
  }
  io::write_json(dir / "manifest.json",
                 Json{{"seed", seed},
                      {"input_hash", io::git_blob_hash(hashed)},
                      {"kernel_backend", std::string(kernels::name(kernels::active().backend))}});

  const selftrain::Dataset dataset = load_dataset(config, seed);
  std::ofstream trace(dir / "trace.jsonl");
  selftrain::TrainObserver observer;
  observer.on_checkpoint = [&](const selftrain::TrainerState&, const selftrain::Checkpoint& cp) {
    trace << io::to_json(cp).dump() << '\n';
    trace.flush();
  };

  RunRecord record;
  record.seed = seed;
  record.dir = dir;
  record.result = selftrain::self_train(dataset, effective.train, observer);
  const auto& r = record.result;
  Json summary{{"seed", seed},
               {"assigner", selftrain::to_string(effective.train.assigner.kind)},
               {"final_test_error", r.final_test_error},
               {"final_raw_test_error", r.final_raw_test_error},
               {"sla_solves", r.stats.sla_solves},
               {"nonconverged_solves", r.stats.nonconverged_solves},
               {"sinkhorn_iterations", r.stats.sinkhorn_iterations},
               {"seconds", r.stats.seconds},
               {"sla_seconds", r.stats.sla_seconds},
               {"failed", r.failure.has_value()}};
  if (effective.train.assigner.sla_every > 1) summary["sla_every_deviation"] = effective.train.assigner.sla_every;
  if (r.failure) {
    summary["failure"] = *r.failure;
    io::write_json(dir / "failure.json", io::to_json(r.trace.back()));
  }
  io::write_json(dir / "summary.json", summary);
  return record;
}

Aggregate aggregate(const std::vector<RunRecord>& runs) {
  Aggregate a;
  long long solves = 0;
  long long nonconverged = 0;
  for (const auto& run : runs) {
    if (run.result.failure) {
      ++a.failed_runs;
      continue;
    }
    a.errors.push_back(run.result.final_test_error);
    solves += run.result.stats.sla_solves;
    nonconverged += run.result.stats.nonconverged_solves;
  }
  a.n_seeds = a.errors.size();
  if (a.n_seeds > 0) {
    a.mean_error = std::accumulate(a.errors.begin(), a.errors.end(), 0.0) / static_cast<double>(a.n_seeds);
    if (a.n_seeds > 1) {
      double ss = 0.0;
      for (double e : a.errors) ss += (e - a.mean_error) * (e - a.mean_error);
      a.std_error = std::sqrt(ss / static_cast<double>(a.n_seeds - 1));
    }
  }
  a.nonconverged_fraction = solves > 0 ? static_cast<double>(nonconverged) / static_cast<double>(solves) : 0.0;
  return a;
}

Json to_json(const Aggregate& a) {
  return Json{{"mean_error", a.mean_error},
              {"std_error", a.std_error},
              {"n_seeds", a.n_seeds},
              {"errors", a.errors},
              {"failed_runs", a.failed_runs},
              {"nonconverged_fraction", a.nonconverged_fraction},
              {"nonconvergence_dominates", a.nonconverged_fraction > 0.5}};
}

}  // namespace sla::cli
