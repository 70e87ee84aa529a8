#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sddnewton/graph.hpp"
#include "sddnewton/sim.hpp"

namespace sddnewton {

/// Strictly convex, twice differentiable local objective f_i : R^p -> R.
class LocalObjective {
 public:
  virtual ~LocalObjective() = default;
  virtual int dim() const = 0;
  virtual double value(const Eigen::VectorXd& theta) const = 0;
  virtual Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const = 0;
  virtual Eigen::MatrixXd hessian(const Eigen::VectorXd& theta) const = 0;
  /// The theta with grad f(theta) = -z.
  virtual Eigen::VectorXd recover_primal(const Eigen::VectorXd& z) const = 0;
  virtual nlohmann::json describe() const { return nlohmann::json::object(); }
};

using LocalPtr = std::shared_ptr<const LocalObjective>;

struct ReferenceSolution {
  Eigen::VectorXd theta;  ///< consensus minimizer of sum_i f_i
  double value = 0.0;
};

struct ProblemInstance {
  Graph graph;
  Eigen::MatrixXd L;
  SpectralInfo spectrum;
  int p = 0;
  std::vector<LocalPtr> locals;
  double gamma = 0.0;  ///< lower Hessian bound over all nodes
  double Gamma = 0.0;  ///< upper Hessian bound over all nodes
  double delta = 0.0;  ///< Lipschitz constant of the inverse Hessian
  std::optional<ReferenceSolution> reference;
  std::string kind = "custom";

  int n() const { return graph.num_nodes(); }
};

/// Computes L and its spectrum and checks that every local has dimension p
/// and that 0 < gamma <= Gamma, delta >= 0.
ProblemInstance make_instance(Graph graph, std::vector<LocalPtr> locals, double gamma, double Gamma,
                              double delta, std::string kind);

/// (I_p kron L) v without forming the np x np matrix. v is block-major.
Eigen::VectorXd big_m_apply(const Eigen::MatrixXd& L, int p, const Eigen::VectorXd& v);

/// z(i) with z_r(i) = (L lambda_r)_i, computed from node i's own entries and
/// its neighbors' only.
Eigen::VectorXd local_dual_input(const ProblemInstance& inst, const Eigen::VectorXd& lambda, int node,
                                 AccessLog* log = nullptr);

/// Stacked primal y(lambda). Local solver failures are rethrown as NodeError.
Eigen::VectorXd recover_primal(const ProblemInstance& inst, const Eigen::VectorXd& lambda,
                               AccessLog* log = nullptr);

Eigen::VectorXd dual_gradient(const ProblemInstance& inst, const Eigen::VectorXd& lambda);

struct DualState {
  Eigen::VectorXd lambda;
  Eigen::VectorXd y;
  Eigen::VectorXd g;
};

DualState evaluate_dual(const ProblemInstance& inst, Eigen::VectorXd lambda, AccessLog* log = nullptr);

/// q(lambda) = sum_i f_i(y_i) + y^T M lambda at the recovered primal.
double dual_value(const ProblemInstance& inst, const Eigen::VectorXd& lambda);
double dual_value(const ProblemInstance& inst, const DualState& state);

/// sum_i f_i(theta_i) for an n x p matrix of node estimates.
double primal_objective(const ProblemInstance& inst, const Eigen::MatrixXd& theta);

/// |sum_i f_i(theta_i) - f*| / |f*|; NaN without a reference solution.
double relative_objective_gap(const ProblemInstance& inst, const Eigen::MatrixXd& theta);
/// consensus_error / (sqrt|E| ||theta*||), or the raw error without a reference.
double normalized_consensus_error(const ProblemInstance& inst, const Eigen::MatrixXd& theta);
/// Both the relative gap and the normalized consensus error are <= tol.
bool meets_tolerance(const ProblemInstance& inst, const Eigen::MatrixXd& theta, double tol);
/// max(relative gap, normalized consensus error); +inf for non-finite values.
double tolerance_score(const ProblemInstance& inst, const Eigen::MatrixXd& theta);

/// -M (grad^2 f(y(lambda)))^{-1} M v.
Eigen::VectorXd dual_hessian_apply(const ProblemInstance& inst, const Eigen::VectorXd& lambda,
                                   const Eigen::VectorXd& v);

struct ConvergenceConstants {
  double eps = 0.0;
  double B = 0.0;
  double alpha_star = 0.0;
  double alpha = 0.0;  ///< step the remaining constants were evaluated at
  double zeta = 0.0;
  double xi = 0.0;
  double eta0 = 0.0;  ///< +inf when xi == 0
  double eta1 = 0.0;  ///< +inf when xi == 0
  double admissible_eps = 0.0;
  bool eps_admissible = true;
  double strict_decrease = 0.0;  ///< guaranteed dual improvement per strict-phase step
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

/// eps must lie in [0, 1). Falling outside the admissible interval is
/// reported in `warnings`, not rejected.
ConvergenceConstants compute_constants(const ProblemInstance& inst, double eps,
                                       std::optional<double> alpha = std::nullopt);
ConvergenceConstants compute_constants(double gamma, double Gamma, double delta, int p, double mu2,
                                       double muN, double eps, std::optional<double> alpha = std::nullopt);

/// Accuracy of the Newton direction when both Laplacian solves have relative
/// accuracy eps0.
double composed_direction_epsilon(double eps0, double gamma, double Gamma, double mu2, double muN);

/// Upper bound on ||g^{k+1}||_M / ||g^k||_M in the sampled recursion test.
double gradient_ratio_bound(const ConvergenceConstants& c, double grad_mnorm);

}  // namespace sddnewton
