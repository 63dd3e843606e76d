// SPDX-License-Identifier: Apache-2.0
// sla: solve allocation instances, verify against the exact oracle, and run
// self-training experiments.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "sla/cli/commands.hpp"
#include "sla/cli/io.hpp"
#include "sla/errors.hpp"
#include "sla/kernels.hpp"

namespace {

// Every flag can also be set through SLA_<FLAG> (upper case, '-' -> '_').
std::string env_for(const std::string& flag) {
  std::string name = "SLA_";
  for (char c : flag) name += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return name;
}

template <typename T>
CLI::Option* flag(CLI::App* app, const std::string& name, T& target, const std::string& help) {
  return app->add_option("--" + name, target, help)->envname(env_for(name));
}

}  // namespace

int main(int argc, char** argv) {
  using namespace sla::cli;

  CLI::App app{"Sinkhorn label allocation"};
  app.require_subcommand(1);
  std::string kernels = "auto";
  app.add_option("--kernels", kernels, "scalar | avx2 | neon | auto")->envname("SLA_KERNELS");

  std::string bounds_csv;
  std::string out_dir;
  double gamma = 0.0;
  double rho = 0.0;
  double tolerance_factor = 0.01;
  std::uint64_t seed = 0;
  std::string config;

  // solve
  SolveOptions solve;
  std::string cost_csv;
  std::string probs_csv;
  auto* s = app.add_subcommand("solve", "Solve one allocation instance with Sinkhorn");
  flag(s, "cost", cost_csv, "cost matrix CSV");
  flag(s, "probs", probs_csv, "class probability CSV (costs are -log p)");
  flag(s, "bounds", bounds_csv, "per-class upper bounds, comma separated (default 1 per class)");
  flag(s, "rho", solve.rho, "allocation fraction")->capture_default_str();
  flag(s, "gamma", solve.gamma, "entropic regularization")->capture_default_str();
  flag(s, "tolerance-factor", solve.tolerance_factor, "epsilon = factor * ||c||_1")->capture_default_str();
  flag(s, "max-iters", solve.max_iters, "Sinkhorn iteration cap")->capture_default_str();
  flag(s, "out", out_dir, "output directory")->default_str("solve_out");

  // oracle
  OracleOptions oracle;
  std::string instance;
  std::string plan_csv;
  std::size_t generate = 0;
  auto* o = app.add_subcommand("oracle", "Exact min-cost-flow solution and Sinkhorn gap");
  flag(o, "instance", instance, "instance or suite JSON");
  flag(o, "plan", plan_csv, "Sinkhorn plan CSV to compare against the optimum");
  flag(o, "gamma", gamma, "also run Sinkhorn at this gamma");
  flag(o, "tolerance-factor", oracle.tolerance_factor, "Sinkhorn epsilon factor")->capture_default_str();
  flag(o, "max-iters", oracle.max_iters, "Sinkhorn iteration cap")->capture_default_str();
  flag(o, "generate", generate, "write a random integral suite of N instances");
  flag(o, "seed", seed, "suite seed");
  flag(o, "out", out_dir, "output directory")->default_str("oracle_out");

  // train / sweep
  auto add_experiment = [&](const std::string& name, const std::string& help) {
    auto* sub = app.add_subcommand(name, help);
    flag(sub, "config", config, "experiment config JSON")->required();
    flag(sub, "seed", seed, "run this seed only");
    flag(sub, "out", out_dir, "output directory (overrides config)");
    flag(sub, "gamma", gamma, "entropic regularization");
    flag(sub, "rho", rho, "constant allocation fraction");
    flag(sub, "bounds", bounds_csv, "explicit per-class upper bounds");
    flag(sub, "tolerance-factor", tolerance_factor, "epsilon = factor * ||c||_1");
    return sub;
  };
  auto* t = add_experiment("train", "Self-train for every seed in the config");
  auto* w = add_experiment("sweep", "Run the config's sweep");

  CLI11_PARSE(app, argc, argv);

  try {
    if (kernels != "auto") sla::kernels::set_backend(sla::kernels::parse_backend(kernels));
    std::optional<sla::Vector> bounds;
    if (!bounds_csv.empty()) bounds = sla::io::parse_list(bounds_csv, "--bounds");

    if (s->parsed()) {
      if (!cost_csv.empty()) solve.cost_csv = cost_csv;
      if (!probs_csv.empty()) solve.probs_csv = probs_csv;
      solve.bounds = bounds;
      solve.out = out_dir.empty() ? "solve_out" : out_dir;
      return cmd_solve(solve, std::cout, std::cerr);
    }
    if (o->parsed()) {
      if (!instance.empty()) oracle.instance = instance;
      if (!plan_csv.empty()) oracle.plan_csv = plan_csv;
      if (o->count("--gamma") || std::getenv("SLA_GAMMA")) oracle.gamma = gamma;
      if (o->count("--generate") || std::getenv("SLA_GENERATE")) oracle.generate = generate;
      oracle.seed = seed;
      oracle.out = out_dir.empty() ? "oracle_out" : out_dir;
      return cmd_oracle(oracle, std::cout, std::cerr);
    }
    auto* sub = t->parsed() ? t : w;
    auto given = [&](const char* name) { return (*sub)[std::string("--") + name]->count() > 0 ||
                                                 std::getenv(env_for(name).c_str()) != nullptr; };
    TrainOverrides ov;
    if (given("seed")) ov.seed = seed;
    if (!out_dir.empty()) ov.out = out_dir;
    if (given("gamma")) ov.gamma = gamma;
    if (given("rho")) ov.rho = rho;
    ov.bounds = bounds;
    if (given("tolerance-factor")) ov.tolerance_factor = tolerance_factor;
    return t->parsed() ? cmd_train(config, ov, std::cout, std::cerr)
                       : cmd_sweep(config, ov, std::cout, std::cerr);
  } catch (const sla::InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  }
}
