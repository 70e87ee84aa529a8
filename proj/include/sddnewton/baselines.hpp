#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sddnewton/consensus.hpp"
#include "sddnewton/sim.hpp"

namespace sddnewton {

enum class BaselineKind { admm, averaging, subgradient };
std::string to_string(BaselineKind k);
BaselineKind baseline_kind_from_string(const std::string& s);

/// How `beta` is interpreted: as is, divided by Gamma, or multiplied by Gamma.
enum class StepScale { absolute, inverse_Gamma, Gamma };
std::string to_string(StepScale s);
StepScale step_scale_from_string(const std::string& s);

struct BaselineConfig {
  double beta = 1.0;
  StepScale scale = StepScale::absolute;
  /// Non-empty: run a pilot for each value and keep the best.
  std::vector<double> beta_grid;
  int pilot_iters = 100;
  int max_iters = 500;
  MessageUnit message_unit = MessageUnit::vector;

  nlohmann::json to_json() const;
  static BaselineConfig from_json(const nlohmann::json& j);
  static BaselineConfig defaults_for(BaselineKind k);
};

double effective_beta(const ProblemInstance& inst, StepScale scale, double beta);

/// theta: n x p node estimates. lambda: one multiplier row per edge (a, b),
/// a < b, i.e. lambda_ab with a a predecessor of b. Both endpoints hold a
/// copy; the simulator stores one. `view` holds each node's last received
/// copy of its neighbors' theta, aligned with Graph::neighbors.
struct AdmmState {
  Eigen::MatrixXd theta;
  Eigen::MatrixXd lambda;
  std::vector<std::vector<Eigen::VectorXd>> view;
  double beta = 1.0;
};

AdmmState admm_init(const ProblemInstance& inst, double beta);
/// Sequential sweep over nodes 0..n-1, then multiplier updates.
void admm_step(const ProblemInstance& inst, AdmmState& s, Network& net);

struct AveragingState {
  Eigen::MatrixXd theta;
  Eigen::MatrixXd omega;
  Eigen::MatrixXd z;
  Eigen::MatrixXd omega_sum;  ///< sum of omega(1..t)
  int t = 1;
  double beta = 1.0;

  Eigen::MatrixXd running_average() const { return omega_sum / static_cast<double>(t); }
};

AveragingState averaging_init(const ProblemInstance& inst, double beta);
void averaging_step(const ProblemInstance& inst, AveragingState& s, Network& net);

struct SubgradientState {
  Eigen::MatrixXd theta;
  double beta = 1.0;
};

SubgradientState subgradient_init(const ProblemInstance& inst, double beta);
void subgradient_step(const ProblemInstance& inst, SubgradientState& s, Network& net);

struct BaselineRunInfo {
  double beta = 0.0;  ///< effective step or penalty
  std::vector<std::pair<double, double>> pilot_scores;
};

/// Rows hold the instantaneous iterate (omega for averaging); final_theta is
/// that iterate, and the averaging running average lands in `extra`.
RunTrace run_baseline(BaselineKind kind, const ProblemInstance& inst, const BaselineConfig& cfg,
                      BaselineRunInfo* info = nullptr, AccessLog* log = nullptr);

}  // namespace sddnewton
