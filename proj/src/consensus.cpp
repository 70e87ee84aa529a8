#include "sddnewton/consensus.hpp"

#include <cmath>
#include <limits>

#include "sddnewton/errors.hpp"

namespace sddnewton {

ProblemInstance make_instance(Graph graph, std::vector<LocalPtr> locals, double gamma, double Gamma,
                              double delta, std::string kind) {
  const int n = graph.num_nodes();
  if (static_cast<int>(locals.size()) != n)
    throw DimensionError("instance needs one local objective per node (" + std::to_string(n) + "), got " +
                         std::to_string(locals.size()));
  if (!locals[0]) throw ConfigError("null local objective at node 0");
  const int p = locals[0]->dim();
  for (int i = 0; i < n; ++i) {
    if (!locals[i]) throw ConfigError("null local objective at node " + std::to_string(i));
    if (locals[i]->dim() != p) throw DimensionError("local dimension differs at node " + std::to_string(i));
  }
  if (!(gamma > 0.0) || !(Gamma >= gamma)) throw ConfigError("curvature bounds need 0 < gamma <= Gamma");
  if (!(delta >= 0.0)) throw ConfigError("delta must be >= 0");

  Eigen::MatrixXd L = laplacian(graph);
  SpectralInfo spec = spectral_info(L);
  return ProblemInstance{std::move(graph), std::move(L), spec, p, std::move(locals), gamma, Gamma, delta,
                         std::nullopt, std::move(kind)};
}

Eigen::VectorXd big_m_apply(const Eigen::MatrixXd& L, int p, const Eigen::VectorXd& v) {
  const auto n = L.rows();
  if (p < 1 || v.size() != n * p)
    throw DimensionError("big_m_apply: vector length " + std::to_string(v.size()) + " is not n*p = " +
                         std::to_string(n * p));
  Eigen::VectorXd out(v.size());
  for (int r = 0; r < p; ++r) out.segment(r * n, n).noalias() = L * v.segment(r * n, n);
  return out;
}

Eigen::VectorXd local_dual_input(const ProblemInstance& inst, const Eigen::VectorXd& lambda, int node,
                                 AccessLog* log) {
  const int n = inst.n();
  const int p = inst.p;
  const auto& nb = inst.graph.neighbors(node);
  Eigen::VectorXd z(p);
  if (log) {
    log->record(node, node);
    for (int j : nb) log->record(node, j);
  }
  for (int r = 0; r < p; ++r) {
    const double* lam = lambda.data() + static_cast<std::ptrdiff_t>(r) * n;
    double s = static_cast<double>(nb.size()) * lam[node];
    for (int j : nb) s -= lam[j];
    z(r) = s;
  }
  return z;
}

Eigen::VectorXd recover_primal(const ProblemInstance& inst, const Eigen::VectorXd& lambda, AccessLog* log) {
  const int n = inst.n();
  const int p = inst.p;
  if (lambda.size() != static_cast<Eigen::Index>(n) * p) throw DimensionError("recover_primal: lambda length mismatch");
  Eigen::VectorXd y(lambda.size());
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd theta;
    try {
      theta = inst.locals[i]->recover_primal(local_dual_input(inst, lambda, i, log));
    } catch (const NodeError&) {
      throw;
    } catch (const std::exception& ex) {
      throw NodeError(i, ex.what());
    }
    for (int r = 0; r < p; ++r) y(static_cast<Eigen::Index>(r) * n + i) = theta(r);
  }
  return y;
}

Eigen::VectorXd dual_gradient(const ProblemInstance& inst, const Eigen::VectorXd& lambda) {
  return big_m_apply(inst.L, inst.p, recover_primal(inst, lambda));
}

DualState evaluate_dual(const ProblemInstance& inst, Eigen::VectorXd lambda, AccessLog* log) {
  DualState s;
  s.y = recover_primal(inst, lambda, log);
  s.g = big_m_apply(inst.L, inst.p, s.y);
  s.lambda = std::move(lambda);
  return s;
}

double primal_objective(const ProblemInstance& inst, const Eigen::MatrixXd& theta) {
  if (theta.rows() != inst.n() || theta.cols() != inst.p) throw DimensionError("primal_objective: expected n x p");
  double f = 0.0;
  for (int i = 0; i < inst.n(); ++i) f += inst.locals[i]->value(theta.row(i).transpose());
  return f;
}

double relative_objective_gap(const ProblemInstance& inst, const Eigen::MatrixXd& theta) {
  if (!inst.reference) return std::numeric_limits<double>::quiet_NaN();
  const double fstar = inst.reference->value;
  return std::abs(primal_objective(inst, theta) - fstar) / std::max(std::abs(fstar), 1e-300);
}

double normalized_consensus_error(const ProblemInstance& inst, const Eigen::MatrixXd& theta) {
  const double err = consensus_error(inst.graph, theta);
  if (!inst.reference) return err;
  return err / (std::sqrt(static_cast<double>(inst.graph.num_edges())) * std::max(inst.reference->theta.norm(), 1e-300));
}

bool meets_tolerance(const ProblemInstance& inst, const Eigen::MatrixXd& theta, double tol) {
  return tolerance_score(inst, theta) <= tol;
}

double tolerance_score(const ProblemInstance& inst, const Eigen::MatrixXd& theta) {
  double s = normalized_consensus_error(inst, theta);
  if (inst.reference) s = std::max(s, relative_objective_gap(inst, theta));
  return std::isfinite(s) ? s : std::numeric_limits<double>::infinity();
}

double dual_value(const ProblemInstance& inst, const DualState& state) {
  return primal_objective(inst, unstack(state.y, inst.n(), inst.p)) + state.lambda.dot(state.g);
}

double dual_value(const ProblemInstance& inst, const Eigen::VectorXd& lambda) {
  return dual_value(inst, evaluate_dual(inst, lambda));
}

Eigen::VectorXd dual_hessian_apply(const ProblemInstance& inst, const Eigen::VectorXd& lambda,
                                   const Eigen::VectorXd& v) {
  const int n = inst.n();
  const int p = inst.p;
  const Eigen::VectorXd y = recover_primal(inst, lambda);
  const Eigen::VectorXd Mv = big_m_apply(inst.L, p, v);
  Eigen::VectorXd w(Mv.size());
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd yi(p), ui(p);
    for (int r = 0; r < p; ++r) {
      yi(r) = y(static_cast<Eigen::Index>(r) * n + i);
      ui(r) = Mv(static_cast<Eigen::Index>(r) * n + i);
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(inst.locals[i]->hessian(yi));
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 0.0)
      throw NodeError(i, "local Hessian is not positive definite");
    Eigen::VectorXd wi = ldlt.solve(ui);
    for (int r = 0; r < p; ++r) w(static_cast<Eigen::Index>(r) * n + i) = wi(r);
  }
  return -big_m_apply(inst.L, p, w);
}

ConvergenceConstants compute_constants(double gamma, double Gamma, double delta, int p, double mu2, double muN,
                                       double eps, std::optional<double> alpha) {
  if (!(eps >= 0.0 && eps < 1.0)) throw ConfigError("solver accuracy eps must lie in [0, 1)");
  if (!(gamma > 0.0 && Gamma >= gamma)) throw ConfigError("curvature bounds need 0 < gamma <= Gamma");
  if (!(mu2 > 0.0 && muN >= mu2)) throw ConfigError("spectral bounds need 0 < mu2 <= muN");
  if (delta < 0.0 || p < 1) throw ConfigError("delta must be >= 0 and p >= 1");

  ConvergenceConstants c;
  c.eps = eps;
  const double kappa_f = Gamma / gamma;
  const double kappa_g = muN / mu2;
  c.B = (delta * p / gamma) * muN * muN * std::sqrt(muN);
  c.alpha_star = std::pow(gamma / Gamma, 2) * std::pow(mu2 / muN, 4) * (1.0 - eps) / ((1.0 + eps) * (1.0 + eps));
  c.alpha = alpha.value_or(c.alpha_star);
  if (!(c.alpha > 0.0)) throw ConfigError("step size must be > 0");

  c.admissible_eps = (mu2 / muN) * std::sqrt(kappa_f * (mu2 / muN));
  c.eps_admissible = eps <= c.admissible_eps;
  if (!c.eps_admissible)
    c.warnings.push_back("eps " + std::to_string(eps) + " exceeds the admissible bound " +
                         std::to_string(c.admissible_eps));

  const double inner = 1.0 - c.alpha + eps * c.alpha * std::sqrt(kappa_f * kappa_g * kappa_g * kappa_g);
  c.zeta = std::sqrt(std::max(0.0, inner));
  const double zeta_cap = 1.0 - 1e-12;
  if (c.zeta > zeta_cap) {
    c.warnings.push_back("zeta " + std::to_string(c.zeta) + " clamped below 1");
    c.zeta = zeta_cap;
  }
  const double a = c.alpha * Gamma * (1.0 + eps);
  c.xi = c.B * a * a / (2.0 * std::pow(mu2, 4));
  if (c.xi > 0.0) {
    c.eta0 = c.zeta * (1.0 - c.zeta) / c.xi;
    c.eta1 = (1.0 - c.zeta) / c.xi;
  } else {
    c.eta0 = c.eta1 = std::numeric_limits<double>::infinity();
  }
  const double ratio = (1.0 - eps) / (1.0 + eps);
  c.strict_decrease = std::pow(gamma, 3) / (Gamma * Gamma) * ratio * ratio * std::pow(mu2, 4) /
                      std::pow(muN, 7) * c.eta1 * c.eta1;
  return c;
}

ConvergenceConstants compute_constants(const ProblemInstance& inst, double eps, std::optional<double> alpha) {
  return compute_constants(inst.gamma, inst.Gamma, inst.delta, inst.p, inst.spectrum.mu2, inst.spectrum.muN, eps,
                           alpha);
}

double composed_direction_epsilon(double eps0, double gamma, double Gamma, double mu2, double muN) {
  const double kf = Gamma / gamma;
  const double kg = muN / mu2;
  return eps0 * std::sqrt(kf * kg) * (1.0 + eps0 * kg * std::sqrt(kf) + std::sqrt(kg));
}

double gradient_ratio_bound(const ConvergenceConstants& c, double grad_mnorm) {
  return c.zeta * c.zeta + c.xi * grad_mnorm;
}

nlohmann::json ConvergenceConstants::to_json() const {
  auto num = [](double x) -> nlohmann::json {
    if (std::isfinite(x)) return x;
    return x > 0 ? "inf" : "-inf";
  };
  return {{"eps", eps},
          {"B", B},
          {"alpha_star", alpha_star},
          {"alpha", alpha},
          {"zeta", zeta},
          {"xi", xi},
          {"eta0", num(eta0)},
          {"eta1", num(eta1)},
          {"admissible_eps", admissible_eps},
          {"eps_admissible", eps_admissible},
          {"strict_decrease", num(strict_decrease)},
          {"warnings", warnings}};
}

}  // namespace sddnewton
