#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sddnewton/consensus.hpp"
#include "sddnewton/sim.hpp"

namespace sddnewton {

struct GraphSpec {
  int n = 20;
  int m = 40;
  std::uint64_t seed = 1;
  std::string file;  ///< non-empty: load Graph JSON instead of generating
};

struct ProblemSpec {
  std::string kind = "regression";  ///< regression | logistic | logistic_l1 | rl
  int p = 5;
  int total_points = 400;
  double noise_sigma = 1.0;
  double mu = 0.05;
  std::uint64_t seed = 2;
  double alpha = 20.0;  ///< smoothing parameter for logistic_l1
  int trajectories_per_node = 10;
  int horizon = 20;
  std::string manifest;  ///< non-empty: load the instance from a manifest
};

struct AlgorithmSpec {
  std::string name;  ///< sdd_newton | admm | averaging | subgradient
  nlohmann::json params = nlohmann::json::object();
};

struct ExperimentConfig {
  int schema_version = 1;
  GraphSpec graph;
  ProblemSpec problem;
  std::vector<AlgorithmSpec> algorithms;
  std::string output_dir = "out";
  MessageUnit message_unit = MessageUnit::vector;
  double objective_tol = 1e-6;

  nlohmann::json to_json() const;
  /// Validates the schema; unknown keys and bad values raise ConfigError
  /// naming the offending field path.
  static ExperimentConfig from_json(const nlohmann::json& j);
  /// Parses a file; syntax errors report line and column.
  static ExperimentConfig load(const std::string& path);
};

ExperimentConfig preset(const std::string& name);
std::vector<std::string> preset_names();

/// Builds the instance a config describes and attaches the centralized reference.
ProblemInstance build_experiment_instance(const ExperimentConfig& cfg);

struct AlgorithmResult {
  std::string name;
  RunTrace trace;
  std::optional<int> iterations_to_tolerance;
  std::optional<long long> messages_to_tolerance;
  double final_gap = 0.0;
  double final_consensus = 0.0;
  long long total_messages = 0;
  std::string csv_path;
};

struct ExperimentResult {
  std::vector<AlgorithmResult> algorithms;
  nlohmann::json summary;
};

/// First trace row whose relative gap and normalized consensus error are both <= tol.
std::optional<std::size_t> first_row_meeting(const ProblemInstance& inst, const RunTrace& trace, double tol);

/// Runs every algorithm, writes <output_dir>/<name>.csv, <name>.json and summary.json.
ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write_files = true);

}  // namespace sddnewton
