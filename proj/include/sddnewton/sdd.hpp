#pragma once

#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace sddnewton {

/// M = diag(D0) - A0 with A0 >= 0, symmetric, zero diagonal.
struct Splitting {
  Eigen::VectorXd D0;
  Eigen::MatrixXd A0;
};

/// Rejects non-symmetric input, positive off-diagonals and rows that are not
/// diagonally dominant (NotSddError carries the row index).
Splitting split(const Eigen::MatrixXd& M, double tol = 1e-12);

/// Inverse-approximated chain {D_i, A_i}, i = 0..depth, with D_i = D0 and
/// A_i = D0 (D0^{-1} A0)^{2^i}, built by repeated squaring
/// A_{i+1} = A_i D0^{-1} A_i.
struct InverseChain {
  int depth = 0;
  Eigen::VectorXd D;
  Eigen::VectorXd D_inv;
  std::vector<Eigen::MatrixXd> A;  // A[0] .. A[depth]
  Eigen::MatrixXd M;               // D0 - A0
  /// Every row of M sums to zero: M is a connected-graph Laplacian whose
  /// kernel is span(1). Right-hand sides and iterates are kept in 1-perp.
  bool laplacian_kernel = false;
  /// Spectral radius of (I - Z0 M) restricted to range(M), where Z0 is the
  /// crude solver's linear operator. Equals the crude solver's M-norm accuracy.
  double contraction = 0.0;
  /// Test-only fault injection: scales the crude solver output.
  double output_scale = 1.0;

  int size() const { return static_cast<int>(D.size()); }
};

/// ceil(log2 n) + 2, clamped to [2, 30].
int default_chain_depth(int n);

InverseChain build_chain(const Splitting& s, int depth);

/// Corrupts the chain so the crude solver over-shoots by a factor 3.
void inject_fault_for_testing(InverseChain& chain);

/// Work performed by the solver, in units the message accounting charges.
struct SolveCounters {
  long long crude_applications = 0;
  long long level_applies = 0;  ///< one per chain level in each crude loop
  long long m_applies = 0;      ///< products with M inside Richardson
  long long laplacian_applies() const { return level_applies + m_applies; }
};

/// Two-loop pass: forward b_i = (I + A_{i-1} D^{-1}) b_{i-1}, x_d = D^{-1} b_d,
/// backward x_i = 1/2 [D^{-1} b_i + (I + D^{-1} A_i) x_{i+1}].
Eigen::VectorXd crude_solve(const InverseChain& chain, const Eigen::VectorXd& b,
                            SolveCounters* counters = nullptr);

struct ExactSolveOptions {
  double eps = 1e-6;
  int max_iters = -1;  ///< < 0 selects ceil(iter_cap_constant * ln(1/eps))
  double iter_cap_constant = 10.0;
  bool record_iterates = false;
};

struct SolveReport {
  Eigen::VectorXd solution;
  double residual_mnorm = 0.0;  ///< surrogate ||M x - b||_2
  double error_bound = 0.0;     ///< certified bound on ||x - x*||_M / ||x*||_M
  int richardson_iters = 0;
  int chain_depth = 0;
  bool converged = true;
  SolveCounters counters;
  std::vector<Eigen::VectorXd> iterates;  ///< y_0 .. y_k when requested

  nlohmann::json to_json() const;
};

/// Richardson refinement y_k = y_{k-1} + Z0 (b - M y_{k-1}) from y_0 = Z0 b.
/// Stops once rho/(1-rho) ||y_k - y_{k-1}||_M certifies eps relative accuracy.
SolveReport exact_solve(const InverseChain& chain, const Eigen::VectorXd& b,
                        const ExactSolveOptions& options);
SolveReport exact_solve(const InverseChain& chain, const Eigen::VectorXd& b, double eps,
                        int max_iters = -1);

/// ||u||_M = sqrt(u^T M u), clamped at 0 for roundoff.
double m_norm(const Eigen::MatrixXd& M, const Eigen::VectorXd& u);

}  // namespace sddnewton
