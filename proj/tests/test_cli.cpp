// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "sla/cli/commands.hpp"
#include "sla/cli/experiment.hpp"
#include "sla/cli/io.hpp"
#include "sla/errors.hpp"
#include "sla/lp_oracle.hpp"

using namespace sla;
using namespace sla::cli;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("sla_test_" + std::to_string(std::random_device{}()) + "_" + std::to_string(counter()++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
};

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p);
  out << s;
}

io::Json small_experiment(const fs::path& out) {
  io::Json j = io::Json::parse(R"({
    "dataset": {"kind": "gaussian_blobs", "n": 120, "n_test": 60, "labels_per_class": 2},
    "train": {"iterations": 60, "eval_every": 20, "hidden": 4},
    "assigner": {"kind": "sla", "schedule": {"kind": "linear"}},
    "seeds": [1, 2]
  })");
  j["output_dir"] = out.string();
  return j;
}

}  // namespace

TEST_CASE("number formatting round-trips") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    CHECK(io::parse_double(io::format_double(x), "x") == x);
  }
  CHECK_THROWS_AS(io::parse_double("1.5x", "ctx"), InvalidInput);
  CHECK_THROWS_AS(io::parse_double("", "ctx"), InvalidInput);
  CHECK(io::parse_list("0.1, 0.2,0.7", "b") == Vector{0.1, 0.2, 0.7});
}

TEST_CASE("matrix CSV") {
  const Matrix m{{0.1, 1.0 / 3}, {1e-300, 18.420680743952367}};
  std::stringstream ss;
  io::write_matrix_csv(ss, m);
  CHECK(io::read_matrix_csv(ss) == m);

  std::istringstream commented("# cost\n\n2,1\n1.5\n2.5\n");
  CHECK(io::read_matrix_csv(commented) == Matrix{{1.5}, {2.5}});

  auto error_of = [](const std::string& text) {
    std::istringstream in(text);
    try {
      io::read_matrix_csv(in);
    } catch (const InvalidInput& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(error_of("2,2\n1,2\n3,x\n").find("line 3") != std::string::npos);
  CHECK(error_of("2,2\n1,2\n3\n").find("line 3") != std::string::npos);
  CHECK(error_of("2,2\n1,2\n").find("expected 2 data rows") != std::string::npos);
  CHECK(error_of("1,2\n1,2\n3,4\n").find("line 3") != std::string::npos);
  CHECK(error_of("a,b\n").find("line 1") != std::string::npos);
  CHECK_FALSE(error_of("").empty());
}

TEST_CASE("dataset CSV export and import are bitwise") {
  selftrain::DatasetSpec spec;
  spec.n = 100;
  spec.n_test = 20;
  spec.labels_per_class = 3;
  const auto d = selftrain::make_dataset(spec);
  std::stringstream ss;
  io::write_split_csv(ss, d.features, d.labels);
  const auto back = io::read_split_csv(ss);
  CHECK(back.features == d.features);
  CHECK(back.labels == d.labels);
}

TEST_CASE("content hash uses the git blob convention") {
  CHECK(io::git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(io::git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("experiment config parsing") {
  const auto cfg = parse_experiment_config(small_experiment("runs_x"));
  CHECK(cfg.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(cfg.train.iterations == 60);
  CHECK(cfg.dataset.n == 120);
  CHECK_FALSE(cfg.dataset_seed_fixed);
  // Snapshot parses back to the same document.
  CHECK(to_json(parse_experiment_config(to_json(cfg))) == to_json(cfg));

  auto bad = small_experiment("x");
  bad["train"]["iterationz"] = 5;
  CHECK_THROWS_WITH_AS(parse_experiment_config(bad), doctest::Contains("iterationz"), InvalidInput);
  bad = small_experiment("x");
  bad["extra"] = 1;
  CHECK_THROWS_AS(parse_experiment_config(bad), InvalidInput);
  bad = small_experiment("x");
  bad["train"]["iterations"] = "many";
  CHECK_THROWS_AS(parse_experiment_config(bad), InvalidInput);
  bad = small_experiment("x");
  bad["assigner"]["kind"] = "mixmatch";
  CHECK_THROWS_AS(parse_experiment_config(bad), InvalidInput);
  bad = small_experiment("x");
  bad["sweep"] = {{"parameter", "depth"}, {"values", {1, 2}}};
  CHECK_THROWS_AS(parse_experiment_config(bad), InvalidInput);

  auto with_bounds = small_experiment("x");
  with_bounds["assigner"]["bounds"] = {0.3, 0.3, 0.3, 0.3};
  const auto b = parse_experiment_config(with_bounds);
  CHECK(b.train.assigner.bounds == selftrain::BoundsSource::explicit_values);

  const auto swept = apply_sweep_value(cfg, "rho", 1.0);
  CHECK(swept.train.assigner.schedule.kind == AllocationSchedule::Kind::constant);
  CHECK(apply_sweep_value(cfg, "assigner", "supervised_only").train.assigner.kind ==
        selftrain::AssignerKind::supervised_only);
  CHECK_THROWS_AS(apply_sweep_value(cfg, "gamma", "big"), InvalidInput);
}

TEST_CASE("aggregate statistics") {
  std::vector<RunRecord> runs(3);
  runs[0].result.final_test_error = 0.1;
  runs[1].result.final_test_error = 0.2;
  runs[2].result.final_test_error = 0.3;
  const auto a = aggregate(runs);
  CHECK(a.mean_error == doctest::Approx(0.2));
  CHECK(a.std_error == doctest::Approx(0.1));
  CHECK(a.n_seeds == 3);
  runs[2].result.failure = "boom";
  CHECK(aggregate(runs).failed_runs == 1);
}

TEST_CASE("solve command") {
  TempDir tmp;
  std::ostringstream out, err;
  write_text(tmp.path / "u.csv", "4,2\n"
                                    "0.6931471805599453,0.6931471805599453\n"
                                    "0.6931471805599453,0.6931471805599453\n"
                                    "0.6931471805599453,0.6931471805599453\n"
                                    "0.6931471805599453,0.6931471805599453\n");
  SolveOptions opts;
  opts.cost_csv = tmp.path / "u.csv";
  opts.out = tmp.path / "s1";
  REQUIRE(cmd_solve(opts, out, err) == kExitOk);
  const auto summary = io::read_json(tmp.path / "s1" / "summary.json");
  // Uniform costs: the mass floor n (rho - mu_+) - 1 = 3 binds, so 3 of 4 rows' mass is allocated.
  CHECK(summary["allocated_fraction"].get<double>() >= 0.75 - summary["epsilon"].get<double>() / 4);
  CHECK(summary["allocated_fraction"].get<double>() <= 1.0);
  const auto mass = summary["per_class_mass"].get<Vector>();
  CHECK(mass[0] == doctest::Approx(mass[1]).epsilon(1e-9));
  CHECK(fs::exists(tmp.path / "s1" / "plan.csv"));
  CHECK(fs::exists(tmp.path / "s1" / "scalings.json"));

  opts.rho = 0.0;
  opts.out = tmp.path / "s2";
  CHECK(cmd_solve(opts, out, err) == kExitOk);
  CHECK(io::read_json(tmp.path / "s2" / "summary.json")["allocated_fraction"].get<double>() < 1e-6);

  opts.rho = 1.0;
  opts.gamma = 1000.0;
  opts.max_iters = 1;
  opts.tolerance_factor = 1e-12;
  CHECK(cmd_solve(opts, out, err) == kExitNonConvergence);

  write_text(tmp.path / "bad.csv", "2,2\n0.1,0.2\n0.3,oops\n");
  opts.cost_csv = tmp.path / "bad.csv";
  std::ostringstream err2;
  CHECK(cmd_solve(opts, out, err2) == kExitInput);
  CHECK(err2.str().find("line 3") != std::string::npos);

  opts.probs_csv = tmp.path / "u.csv";
  CHECK(cmd_solve(opts, out, err) == kExitInput);
}

TEST_CASE("solve command on the 4x2 oracle instance") {
  TempDir tmp;
  const CostMatrix cost(Matrix{{0.1, 3.0}, {0.2, 2.5}, {2.0, 0.3}, {1.9, 0.05}});
  io::write_matrix_csv(tmp.path / "c.csv", cost.values());
  SolveOptions opts;
  opts.cost_csv = tmp.path / "c.csv";
  opts.bounds = Vector{0.5, 0.5};
  opts.gamma = 1000.0;
  opts.tolerance_factor = 1e-6;
  opts.max_iters = 2000000;
  opts.out = tmp.path / "s";
  std::ostringstream out, err;
  REQUIRE(cmd_solve(opts, out, err) == kExitOk);
  const Matrix plan = io::read_matrix_csv(tmp.path / "s" / "plan.csv");
  AllocationConfig config;
  config.upper_bounds = {0.5, 0.5};
  const auto exact = exact_sla_lp(cost, config);
  for (std::size_t t = 0; t < plan.size(); ++t) CHECK(std::abs(plan.flat()[t] - exact.plan.flat()[t]) <= 0.05);
}

TEST_CASE("oracle command") {
  TempDir tmp;
  std::ostringstream out, err;
  OracleOptions opts;
  opts.out = tmp.path / "o";

  write_text(tmp.path / "one.json",
             R"({"kind": "transport", "cost": [[5]], "row_targets": [3], "col_targets": [3]})");
  opts.instance = tmp.path / "one.json";
  REQUIRE(cmd_oracle(opts, out, err) == kExitOk);
  CHECK(io::read_json(tmp.path / "o" / "oracle.json")["instances"][0]["objective"].get<double>() == 15.0);

  write_text(tmp.path / "unbalanced.json",
             R"({"kind": "transport", "cost": [[1, 2]], "row_targets": [3], "col_targets": [1, 1]})");
  opts.instance = tmp.path / "unbalanced.json";
  CHECK(cmd_oracle(opts, out, err) == kExitInput);

  write_text(tmp.path / "frac.json",
             R"({"kind": "transport", "cost": [[1]], "row_targets": [1.5], "col_targets": [1.5]})");
  opts.instance = tmp.path / "frac.json";
  CHECK(cmd_oracle(opts, out, err) == kExitInput);

  // A deliberately bad supplied plan trips the gap check.
  write_text(tmp.path / "id.json",
             R"({"kind": "transport", "cost": [[0, 5], [5, 0]], "row_targets": [1, 1], "col_targets": [1, 1]})");
  io::write_matrix_csv(tmp.path / "anti.csv", Matrix{{0.0, 1.0}, {1.0, 0.0}});
  opts.instance = tmp.path / "id.json";
  opts.plan_csv = tmp.path / "anti.csv";
  CHECK(cmd_oracle(opts, out, err) == kExitGap);
  opts.plan_csv.reset();

  OracleOptions gen;
  gen.generate = 15;
  gen.seed = 4;
  gen.out = tmp.path / "suite";
  REQUIRE(cmd_oracle(gen, out, err) == kExitOk);
  OracleOptions run;
  run.instance = tmp.path / "suite" / "suite.json";
  run.gamma = 1000.0;
  run.max_iters = 2000000;
  run.out = tmp.path / "suite";
  CHECK(cmd_oracle(run, out, err) == kExitOk);
  const auto report = io::read_json(tmp.path / "suite" / "oracle.json");
  CHECK(report["gap_failures"].get<int>() == 0);
  CHECK(report["instances"].size() == 15);
}

TEST_CASE("train and sweep commands write run directories") {
  TempDir tmp;
  io::write_json(tmp.path / "cfg.json", small_experiment(tmp.path / "runs"));
  std::ostringstream out, err;
  REQUIRE(cmd_train(tmp.path / "cfg.json", {}, out, err) == kExitOk);
  for (const char* seed : {"seed_1", "seed_2"}) {
    const auto dir = tmp.path / "runs" / seed;
    for (const char* f : {"config.json", "manifest.json", "trace.jsonl", "summary.json"})
      CHECK(fs::exists(dir / f));
    std::ifstream trace(dir / "trace.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(trace, line)) {
      const auto j = io::Json::parse(line);
      for (const char* key : {"t", "rho_t", "test_error", "ema_test_error", "allocated_fraction",
                              "per_class_mass", "sinkhorn_iters", "col_residual", "lr"})
        CHECK(j.contains(key));
      ++lines;
    }
    CHECK(lines == 3);
  }
  const auto agg = io::read_json(tmp.path / "runs" / "aggregate.json");
  CHECK(agg["n_seeds"].get<int>() == 2);
  CHECK(agg.contains("mean_error"));
  CHECK(agg.contains("std_error"));

  // The run directory alone reproduces the run.
  const auto snapshot = tmp.path / "runs" / "seed_2" / "config.json";
  TrainOverrides again;
  again.out = tmp.path / "rerun";
  REQUIRE(cmd_train(snapshot, again, out, err) == kExitOk);
  CHECK(io::read_json(tmp.path / "rerun" / "seed_2" / "summary.json")["final_test_error"] ==
        io::read_json(tmp.path / "runs" / "seed_2" / "summary.json")["final_test_error"]);
  CHECK(io::read_json(tmp.path / "rerun" / "seed_2" / "manifest.json")["input_hash"] ==
        io::read_json(tmp.path / "runs" / "seed_2" / "manifest.json")["input_hash"]);

  auto sweep = small_experiment(tmp.path / "sweep");
  sweep["seeds"] = {1};
  sweep["sweep"] = {{"parameter", "gamma"}, {"values", {1, 100}}};
  io::write_json(tmp.path / "sweep.json", sweep);
  REQUIRE(cmd_sweep(tmp.path / "sweep.json", {}, out, err) == kExitOk);
  const auto summary = io::read_json(tmp.path / "sweep" / "sweep.json");
  CHECK(summary["results"].size() == 2);
  CHECK(summary["results"][0].contains("nonconvergence_dominates"));

  CHECK(cmd_train(tmp.path / "missing.json", {}, out, err) == kExitInput);
  CHECK(cmd_sweep(tmp.path / "cfg.json", {}, out, err) == kExitInput);
}
