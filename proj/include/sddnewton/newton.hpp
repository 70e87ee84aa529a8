#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sddnewton/consensus.hpp"
#include "sddnewton/sdd.hpp"
#include "sddnewton/sim.hpp"

namespace sddnewton {

enum class StepMode { alpha_star, fixed, grid };

std::string to_string(StepMode m);
StepMode step_mode_from_string(const std::string& s);

struct NewtonConfig {
  double eps0 = 0.1;  ///< relative accuracy of every Laplacian solve
  StepMode step_mode = StepMode::alpha_star;
  double alpha = 1.0;  ///< used by StepMode::fixed
  std::vector<double> grid{0.01, 0.1, 0.2, 0.3, 0.5, 0.6, 0.9, 1.0};
  int pilot_iters = 10;
  int max_iters = 500;
  double tol_grad_mnorm = -1.0;  ///< < 0 selects tol_grad_relative * ||g0||_M
  double tol_grad_relative = 1e-6;
  double tol_consensus = 1e-8;
  int chain_depth = -1;  ///< < 0 selects default_chain_depth(n)
  /// Shift z by a constant per coordinate so the second system's right-hand
  /// side lies in range(L) before projection (see README).
  bool kernel_correction = true;
  MessageUnit message_unit = MessageUnit::vector;
  int divergence_window = 10;

  nlohmann::json to_json() const;
  static NewtonConfig from_json(const nlohmann::json& j);
};

enum class Phase { strict_decrease, quadratic, terminal };
std::string to_string(Phase p);
Phase classify_phase(double grad_mnorm, const ConvergenceConstants& c);

/// The Laplacian inverse chain shared by every solve of one run.
struct NewtonContext {
  InverseChain chain;
  static NewtonContext build(const ProblemInstance& inst, int chain_depth = -1);
};

struct DirectionReport {
  std::vector<long long> first_solve_applies;   ///< per coordinate block
  std::vector<long long> second_solve_applies;  ///< per coordinate block
  std::vector<int> richardson_iters;            ///< both solves, blocks in order
  bool all_converged = true;
  Eigen::VectorXd correction;  ///< constant added to each block of z (empty if disabled)
};

/// Approximate Newton direction d with M F^{-1} M d = M y, where F is the
/// block-diagonal primal Hessian at y. Ascent direction: lambda + alpha d.
Eigen::VectorXd newton_direction(const ProblemInstance& inst, const NewtonContext& ctx, const DualState& state,
                                 double eps0, bool kernel_correction = true, DirectionReport* report = nullptr);

/// Recomputes y and g by exchanging lambda and then y between neighbors over `net`.
DualState distributed_evaluate(const ProblemInstance& inst, Network& net, Eigen::VectorXd lambda);

/// Messages charged for one Newton iteration's solves and reductions (the
/// neighbor exchanges are counted by the network itself).
StepCost newton_solver_cost(const DirectionReport& rep, int p, bool kernel_correction);

struct NewtonIterate {
  int k = 0;
  DualState state;
  Eigen::VectorXd d_tilde;
  Phase phase = Phase::terminal;
  DirectionReport report;
};

/// One update lambda <- lambda + alpha d; alpha = 0 returns the state unchanged.
NewtonIterate step(const ProblemInstance& inst, const NewtonContext& ctx, const DualState& state,
                   const NewtonConfig& cfg, double alpha, const ConvergenceConstants& constants,
                   Network* net = nullptr);

struct NewtonRunInfo {
  ConvergenceConstants constants;
  double theorem_eps = 0.0;
  double alpha = 0.0;
  bool diverged = false;
  bool converged = false;
  std::vector<std::pair<double, double>> pilot_scores;  ///< (alpha, score) in grid mode
};

/// Full run from lambda = 0. Row 0 is the initial state.
RunTrace run_newton(const ProblemInstance& inst, const NewtonConfig& cfg, NewtonRunInfo* info = nullptr,
                    AccessLog* log = nullptr);

/// Accuracy of the Newton direction that the phase constants are evaluated
/// at: the composed bound when it is below 1, otherwise eps0.
double theorem_epsilon(const ProblemInstance& inst, double eps0);

}  // namespace sddnewton
