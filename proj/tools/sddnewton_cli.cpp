#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sddnewton/errors.hpp"
#include "sddnewton/experiment.hpp"
#include "sddnewton/verify.hpp"

namespace {

using namespace sddnewton;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string message_unit;
};

void apply(ExperimentConfig& cfg, const Overrides& o) {
  if (o.seed) {
    cfg.graph.seed = *o.seed;
    cfg.problem.seed = *o.seed + 1;
  }
  if (!o.out.empty()) {
    cfg.output_dir = o.out;
  } else if (const char* env = std::getenv("SDDNEWTON_OUT"); env && *env) {
    cfg.output_dir = env;
  }
  if (!o.message_unit.empty()) cfg.message_unit = message_unit_from_string(o.message_unit);
}

void print_summary(const ExperimentResult& r, const ExperimentConfig& cfg) {
  std::cout << "algorithm      iters  iters_to_tol  msgs_to_tol   final_gap     final_consensus  messages\n";
  for (const auto& a : r.algorithms) {
    std::printf("%-14s %5d  %12s  %11s   %-12.3e  %-15.3e  %lld\n", a.name.c_str(), a.trace.rows.back().iter,
                a.iterations_to_tolerance ? std::to_string(*a.iterations_to_tolerance).c_str() : "-",
                a.messages_to_tolerance ? std::to_string(*a.messages_to_tolerance).c_str() : "-", a.final_gap,
                a.final_consensus, a.total_messages);
  }
  std::cout << "wrote " << cfg.output_dir << "/summary.json\n";
}

int run(ExperimentConfig cfg, const Overrides& o) {
  apply(cfg, o);
  const ExperimentResult r = run_experiment(cfg);
  print_summary(r, cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed SDD-Newton consensus optimization experiments"};
  app.require_subcommand(1);

  Overrides ov;
  std::uint64_t seed = 0;

  auto* run_cmd = app.add_subcommand("run", "Run an experiment described by a JSON config");
  std::string config_path;
  run_cmd->add_option("config", config_path, "Experiment config (JSON)")->required();

  auto* preset_cmd = app.add_subcommand("preset", "Run a built-in experiment");
  std::string preset_name;
  bool dump = false;
  preset_cmd->add_option("name", preset_name, "Preset name")->required();
  preset_cmd->add_flag("--dump", dump, "Print the preset config and exit");

  for (auto* cmd : {run_cmd, preset_cmd}) {
    cmd->add_option("--seed", seed, "Graph seed (problem seed is seed + 1)");
    cmd->add_option("--out", ov.out, "Output directory (default: $SDDNEWTON_OUT or the config's)");
    cmd->add_option("--message-unit", ov.message_unit, "Message unit")->check(CLI::IsMember({"scalar", "vector"}));
  }

  auto* verify_cmd = app.add_subcommand("verify", "Run oracle/property suites and print a pass matrix");
  std::string suite;
  VerifyOptions vopt;
  verify_cmd->add_option("suite", suite, "Suite")->required()->check(CLI::IsMember({"sdd", "dual", "newton", "all"}));
  verify_cmd->add_flag("--quick", vopt.quick, "Subsample instances");
  verify_cmd->add_flag("--inject-fault", vopt.inject_fault, "Corrupt the SDD chain (test-only)");
  verify_cmd->add_option("--seed", vopt.seed, "Seed for generated instances");

  CLI11_PARSE(app, argc, argv);
  for (auto* cmd : {run_cmd, preset_cmd})
    if (cmd->count("--seed")) ov.seed = seed;

  try {
    if (*run_cmd) return run(ExperimentConfig::load(config_path), ov);
    if (*preset_cmd) {
      ExperimentConfig cfg = preset(preset_name);
      if (dump) {
        apply(cfg, ov);
        std::cout << cfg.to_json().dump(2) << '\n';
        return 0;
      }
      return run(std::move(cfg), ov);
    }
    const VerifyReport rep = run_verify(suite, vopt);
    print_matrix(rep, std::cout);
    return rep.failures() == 0 ? 0 : 1;
  } catch (const ConfigError& ex) {
    std::cerr << "config error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
}
