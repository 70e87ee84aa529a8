#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Cholesky>

#include "sddnewton/consensus.hpp"

namespace sddnewton {

/// Local data of one node: feature columns B (p x m) and labels a (m).
struct NodeData {
  Eigen::MatrixXd B;
  Eigen::VectorXd a;
  int samples() const { return static_cast<int>(a.size()); }
};

/// One rollout: per-step features (p x T), actions (T) and a nonnegative reward.
struct Trajectory {
  double reward = 0.0;
  Eigen::MatrixXd B;
  Eigen::VectorXd a;
};
using RlNodeData = std::vector<Trajectory>;

/// Objectives that admit a minimizer of f(theta) + lin^T theta + quad/2 ||theta||^2.
class ShiftedMinimizable : public LocalObjective {
 public:
  virtual Eigen::VectorXd minimize_shifted(const Eigen::VectorXd& lin, double quad) const = 0;
  Eigen::VectorXd recover_primal(const Eigen::VectorXd& z) const override { return minimize_shifted(z, 0.0); }
};

/// f(theta) = theta^T P theta - 2 c^T theta + u.
class QuadraticLocal : public ShiftedMinimizable {
 public:
  QuadraticLocal(Eigen::MatrixXd P, Eigen::VectorXd c, double u);

  int dim() const override { return static_cast<int>(c_.size()); }
  double value(const Eigen::VectorXd& theta) const override;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const override;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& theta) const override;
  /// P^{-1} (c - z/2).
  Eigen::VectorXd recover_primal(const Eigen::VectorXd& z) const override;
  Eigen::VectorXd minimize_shifted(const Eigen::VectorXd& lin, double quad) const override;
  nlohmann::json describe() const override;

  const Eigen::MatrixXd& P() const { return P_; }
  const Eigen::VectorXd& c() const { return c_; }
  double u() const { return u_; }

 private:
  Eigen::MatrixXd P_;
  Eigen::VectorXd c_;
  double u_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

enum class Regularizer { L2, SmoothedL1 };

/// (1/alpha) [log(1 + e^{-alpha x}) + log(1 + e^{alpha x})], evaluated stably.
double smooth_abs(double x, double alpha);
/// Numerically stable log(1 + e^t).
double softplus(double t);
double sigmoid(double t);

struct InnerNewtonOptions {
  int max_iters = 100;
  double grad_tol = 1e-10;  ///< relative to max(1, ||gradient at the start||)
};

/// sum_j [log(1 + e^{b_j^T theta}) - a_j b_j^T theta] + mu m R(theta), with
/// R = ||.||^2 or sum_r |theta_r|_(alpha).
class LogisticLocal : public ShiftedMinimizable {
 public:
  LogisticLocal(Eigen::MatrixXd B, Eigen::VectorXd a, double mu, Regularizer reg, double alpha = 20.0,
                InnerNewtonOptions inner = {});

  int dim() const override { return static_cast<int>(B_.rows()); }
  double value(const Eigen::VectorXd& theta) const override;
  Eigen::VectorXd gradient(const Eigen::VectorXd& theta) const override;
  Eigen::MatrixXd hessian(const Eigen::VectorXd& theta) const override;
  /// Damped Newton with step halving from theta = 0; throws after max_iters.
  Eigen::VectorXd minimize_shifted(const Eigen::VectorXd& lin, double quad) const override;
  nlohmann::json describe() const override;

  /// Hessian lower bound valid on the box ||theta||_inf <= radius, and the global upper bound.
  double curvature_lower(double radius) const;
  double curvature_upper() const;

  Regularizer regularizer() const { return reg_; }
  double alpha() const { return alpha_; }
  double reg_weight() const { return mu_m_; }
  const Eigen::MatrixXd& B() const { return B_; }
  const Eigen::VectorXd& a() const { return a_; }

 private:
  Eigen::MatrixXd B_;
  Eigen::VectorXd a_;
  double mu_m_;
  Regularizer reg_;
  double alpha_;
  InnerNewtonOptions inner_;
};

/// Per-node P_i = B_i B_i^T + mu m_i I, c_i = B_i a_i, u_i = a_i^T a_i.
ProblemInstance build_regression(Graph graph, const std::vector<NodeData>& data, double mu);

struct LogisticOptions {
  Regularizer reg = Regularizer::L2;
  double alpha = 20.0;
  /// Box radius used for the smoothed-L1 curvature lower bound.
  double box_radius = 5.0;
  int delta_samples = 20;
  std::uint64_t delta_seed = 12345;
};
ProblemInstance build_logistic(Graph graph, const std::vector<NodeData>& data, double mu,
                               const LogisticOptions& options = {});

/// F_i = sum_j R_j B_j B_j^T + mu m_i I, g_i = sum_j R_j B_j a_j, u_i = sum_j R_j a_j^T a_j.
ProblemInstance build_rl(Graph graph, const std::vector<RlNodeData>& data, double mu);

/// Largest sampled ||H(x)^{-1} - H(x')^{-1}||_2 / ||x - x'|| over all nodes, times a safety factor.
double estimate_inverse_hessian_lipschitz(const std::vector<LocalPtr>& locals, int samples, std::uint64_t seed);

std::vector<NodeData> generate_synthetic_regression(int n_nodes, int p, int total_points, double noise_sigma,
                                                    std::uint64_t seed);
std::vector<NodeData> generate_synthetic_logistic(int n_nodes, int p, int total_points, std::uint64_t seed);
std::vector<RlNodeData> generate_synthetic_rl(int n_nodes, int p, int trajectories_per_node, int horizon,
                                              std::uint64_t seed);

/// Quadratic locals with P_i = I + spread * A_i A_i^T / p (A_i standard
/// normal) and c_i standard normal; gamma/Gamma from the spectra of 2 P_i.
ProblemInstance random_quadratic_instance(Graph graph, int p, std::uint64_t seed, double spread = 1.0);

/// Minimizer of sum_i f_i over a single shared theta, by damped Newton on the
/// pooled objective (one step for quadratics).
ReferenceSolution centralized_optimum(const ProblemInstance& inst);
void attach_reference(ProblemInstance& inst);

/// Data behind an instance, as loaded from or written to disk.
struct Dataset {
  std::string kind;  ///< regression | logistic | logistic_l1 | rl
  std::vector<NodeData> nodes;
  std::vector<RlNodeData> rl_nodes;
};

ProblemInstance build_instance(Graph graph, const Dataset& data, double mu, double alpha = 20.0);

/// Writes graph.json, node_<i>.csv and manifest.json into `dir`; returns the manifest path.
std::string write_manifest(const std::string& dir, const ProblemInstance& inst, const Dataset& data, double mu,
                           double alpha = 20.0);
/// Builds the instance a manifest describes. Declared gamma/Gamma/delta override the computed ones.
ProblemInstance load_manifest(const std::string& path);

void write_node_csv(const std::string& path, const NodeData& d);
NodeData read_node_csv(const std::string& path);
void write_rl_csv(const std::string& path, const RlNodeData& d);
RlNodeData read_rl_csv(const std::string& path);

}  // namespace sddnewton
