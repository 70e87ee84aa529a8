#include "sddnewton/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <random>
#include <sstream>

#include "sddnewton/consensus.hpp"
#include "sddnewton/errors.hpp"
#include "sddnewton/graph.hpp"
#include "sddnewton/newton.hpp"
#include "sddnewton/problems.hpp"
#include "sddnewton/sdd.hpp"

namespace sddnewton {

int VerifyReport::failures() const {
  return static_cast<int>(std::count_if(results.begin(), results.end(), [](const auto& r) { return !r.passed; }));
}

namespace {

/// Accumulates the worst case over many instances of one property.
struct Tally {
  PropertyResult r;
  double worst = 0.0;
  std::string worst_case;

  Tally(std::string suite, std::string property) {
    r.suite = std::move(suite);
    r.property = std::move(property);
    r.passed = true;
  }
  /// value is the observed quantity, limit its allowed maximum.
  void check(double value, double limit, const std::string& label) {
    ++r.cases;
    const double slack = limit > 0 ? value / limit : value;
    if (!(value <= limit)) {
      if (r.passed) {
        std::ostringstream os;
        os << "first failure " << label << ": " << value << " > " << limit;
        r.detail = os.str();
      }
      r.passed = false;
    }
    if (!(slack <= worst) || worst_case.empty()) {
      worst = std::isfinite(slack) ? slack : std::numeric_limits<double>::infinity();
      worst_case = label;
    }
  }
  void fail(const std::string& why) {
    ++r.cases;
    if (r.passed) r.detail = why;
    r.passed = false;
  }
  PropertyResult done() {
    if (r.passed) {
      std::ostringstream os;
      os << "worst value/limit " << std::setprecision(3) << worst << " (" << worst_case << ")";
      r.detail = os.str();
    }
    return r;
  }
};

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& A, double rel = 1e-10) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  const double cut = rel * std::max(es.eigenvalues().cwiseAbs().maxCoeff(), 1e-300);
  Eigen::VectorXd inv = es.eigenvalues().unaryExpr([cut](double x) { return std::abs(x) > cut ? 1.0 / x : 0.0; });
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

double seminorm(const Eigen::MatrixXd& A, const Eigen::VectorXd& u) { return std::sqrt(std::max(0.0, u.dot(A * u))); }

Graph random_connected(std::mt19937_64& rng, int n_lo, int n_hi) {
  const int n = std::uniform_int_distribution<int>(n_lo, n_hi)(rng);
  const int max_m = n * (n - 1) / 2;
  const int m = std::uniform_int_distribution<int>(n - 1, std::min(max_m, 3 * n))(rng);
  return generate_random_graph(n, m, rng());
}

Eigen::VectorXd normal_vector(std::mt19937_64& rng, Eigen::Index size) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(size);
  for (Eigen::Index k = 0; k < size; ++k) v(k) = normal(rng);
  return v;
}

/// Dense I_p (x) L in block-major order, and the matching permuted F^{-1}.
Eigen::MatrixXd dense_big_m(const ProblemInstance& inst) {
  const int n = inst.n();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n * inst.p, n * inst.p);
  for (int r = 0; r < inst.p; ++r) M.block(r * n, r * n, n, n) = inst.L;
  return M;
}

Eigen::MatrixXd dense_inverse_hessian(const ProblemInstance& inst, const Eigen::VectorXd& y) {
  const int n = inst.n();
  const int p = inst.p;
  Eigen::MatrixXd Finv = Eigen::MatrixXd::Zero(n * p, n * p);
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd yi(p);
    for (int r = 0; r < p; ++r) yi(r) = y(r * n + i);
    const Eigen::MatrixXd Hi = inst.locals[i]->hessian(yi).inverse();
    for (int r = 0; r < p; ++r)
      for (int s = 0; s < p; ++s) Finv(r * n + i, s * n + i) = Hi(r, s);
  }
  return Finv;
}

// ---------------------------------------------------------------- sdd suite

PropertyResult sdd_splitting_identity(const VerifyOptions& o) {
  Tally t("sdd", "splitting_identity");
  std::mt19937_64 rng(o.seed * 7919 + 11);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int count = o.quick ? 5 : 20;
  for (int k = 0; k < count; ++k) {
    const int n = std::uniform_int_distribution<int>(2, 10)(rng);
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (unif(rng) < 0.6) M(i, j) = M(j, i) = -unif(rng);
    for (int i = 0; i < n; ++i) M(i, i) = -M.row(i).sum() + M(i, i) + 0.05 + unif(rng);
    const Splitting s = split(M);
    const Eigen::MatrixXd Dinv = s.D0.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd inner = Eigen::MatrixXd(s.D0.asDiagonal()) - s.A0 * Dinv * s.A0;
    const Eigen::MatrixXd formula = 0.5 * (Dinv + (I + Dinv * s.A0) * inner.inverse() * (I + s.A0 * Dinv));
    const Eigen::MatrixXd exact = M.inverse();
    t.check((formula - exact).norm() / exact.norm(), 1e-10, "matrix " + std::to_string(k));
  }
  return t.done();
}

PropertyResult sdd_eps_certification(const VerifyOptions& o) {
  Tally t("sdd", "eps_certification");
  std::mt19937_64 rng(o.seed * 104729 + 3);
  const int count = o.quick ? 10 : 50;
  for (int k = 0; k < count; ++k) {
    const Graph g = random_connected(rng, 3, 40);
    const Eigen::MatrixXd L = laplacian(g);
    InverseChain chain = build_chain(split(L), default_chain_depth(g.num_nodes()));
    if (o.inject_fault) inject_fault_for_testing(chain);
    const Eigen::MatrixXd Lp = pseudo_inverse(L);
    Eigen::VectorXd b = normal_vector(rng, g.num_nodes());
    b.array() -= b.mean();
    const Eigen::VectorXd xstar = Lp * b;
    for (double eps : {0.1, 0.01, 1e-4}) {
      SolveReport rep = exact_solve(chain, b, eps);
      const double err = seminorm(L, rep.solution - xstar);
      t.check(err, eps * seminorm(L, xstar), "laplacian " + std::to_string(k) + " eps " + std::to_string(eps));
    }
  }
  return t.done();
}

PropertyResult sdd_crude_contraction(const VerifyOptions& o) {
  Tally t("sdd", "crude_contraction");
  std::mt19937_64 rng(o.seed * 15485863 + 5);
  const int count = o.quick ? 5 : 20;
  for (int k = 0; k < count; ++k) {
    const Graph g = random_connected(rng, 3, 30);
    const Eigen::MatrixXd L = laplacian(g);
    InverseChain chain = build_chain(split(L), default_chain_depth(g.num_nodes()));
    if (o.inject_fault) inject_fault_for_testing(chain);
    if (!(chain.contraction < 1.0)) {
      t.fail("contraction " + std::to_string(chain.contraction) + " >= 1 on graph " + std::to_string(k));
      continue;
    }
    Eigen::VectorXd b = normal_vector(rng, g.num_nodes());
    b.array() -= b.mean();
    const Eigen::VectorXd xstar = pseudo_inverse(L) * b;
    const Eigen::VectorXd x = crude_solve(chain, b);
    t.check(seminorm(L, x - xstar), (chain.contraction + 1e-9) * seminorm(L, xstar), "graph " + std::to_string(k));
  }
  return t.done();
}

// --------------------------------------------------------------- dual suite

std::vector<ProblemInstance> dual_instances(const VerifyOptions& o, std::uint64_t salt, int count) {
  std::mt19937_64 rng(o.seed * 2654435761u + salt);
  std::vector<ProblemInstance> out;
  for (int k = 0; k < count; ++k) {
    Graph g = random_connected(rng, 3, 12);
    const int p = std::uniform_int_distribution<int>(1, 4)(rng);
    out.push_back(random_quadratic_instance(std::move(g), p, rng()));
  }
  return out;
}

PropertyResult dual_gradient_fd(const VerifyOptions& o) {
  Tally t("dual", "gradient_finite_difference");
  std::mt19937_64 rng(o.seed + 101);
  int k = 0;
  for (const auto& inst : dual_instances(o, 17, o.quick ? 5 : 20)) {
    const Eigen::Index N = static_cast<Eigen::Index>(inst.n()) * inst.p;
    const Eigen::VectorXd lam = 0.3 * normal_vector(rng, N);
    const Eigen::VectorXd v = normal_vector(rng, N);
    const double h = 1e-5;
    const double fd = (dual_value(inst, Eigen::VectorXd(lam + h * v)) - dual_value(inst, Eigen::VectorXd(lam - h * v))) / (2 * h);
    const Eigen::VectorXd g = dual_gradient(inst, lam);
    const double an = g.dot(v);
    t.check(std::abs(fd - an), 1e-4 * std::max(std::abs(an), g.norm() * v.norm() * 1e-3 + 1e-8),
            "instance " + std::to_string(k++));
  }
  return t.done();
}

PropertyResult dual_hessian_fd(const VerifyOptions& o) {
  Tally t("dual", "hessian_finite_difference");
  std::mt19937_64 rng(o.seed + 202);
  int k = 0;
  for (const auto& inst : dual_instances(o, 29, o.quick ? 5 : 20)) {
    const Eigen::Index N = static_cast<Eigen::Index>(inst.n()) * inst.p;
    const Eigen::VectorXd lam = 0.3 * normal_vector(rng, N);
    const Eigen::VectorXd v = normal_vector(rng, N);
    const double h = 1e-5;
    const Eigen::VectorXd fd = (dual_gradient(inst, lam + h * v) - dual_gradient(inst, lam - h * v)) / (2 * h);
    const Eigen::VectorXd an = dual_hessian_apply(inst, lam, v);
    t.check((fd - an).norm(), 1e-4 * std::max(an.norm(), 1e-8), "instance " + std::to_string(k++));
  }
  return t.done();
}

PropertyResult dual_recovery_stationarity(const VerifyOptions& o) {
  Tally t("dual", "primal_recovery_stationarity");
  std::mt19937_64 rng(o.seed + 303);
  const int count = o.quick ? 2 : 5;
  for (int k = 0; k < count; ++k) {
    Graph g = random_connected(rng, 3, 10);
    const int n = g.num_nodes();
    const int p = 3;
    Dataset data;
    data.kind = k % 2 ? "logistic_l1" : "logistic";
    data.nodes = generate_synthetic_logistic(n, p, 30 * n, rng());
    const ProblemInstance inst = build_instance(std::move(g), data, 0.05);
    // The smoothed-L1 gradient range is bounded, so keep L lambda inside it.
    const Eigen::VectorXd lam = 0.1 * normal_vector(rng, static_cast<Eigen::Index>(n) * p);
    const Eigen::VectorXd y = recover_primal(inst, lam);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd z = local_dual_input(inst, lam, i, nullptr);
      Eigen::VectorXd yi(p);
      for (int r = 0; r < p; ++r) yi(r) = y(r * n + i);
      t.check((inst.locals[i]->gradient(yi) + z).norm(), 1e-7 * (1.0 + z.norm()),
              "instance " + std::to_string(k) + " node " + std::to_string(i));
    }
  }
  return t.done();
}

PropertyResult dual_locality(const VerifyOptions& o) {
  Tally t("dual", "recovery_locality");
  std::mt19937_64 rng(o.seed + 404);
  for (const auto& inst : dual_instances(o, 41, o.quick ? 2 : 5)) {
    AccessLog log;
    (void)evaluate_dual(inst, normal_vector(rng, static_cast<Eigen::Index>(inst.n()) * inst.p), &log);
    const AuditResult a = locality_audit(inst.graph, log);
    t.check(static_cast<double>(a.violations.size()), 0.0, "audit");
  }
  return t.done();
}

// ------------------------------------------------------------- newton suite

PropertyResult newton_direction_bound(const VerifyOptions& o) {
  Tally t("newton", "direction_error_bound");
  std::mt19937_64 rng(o.seed + 505);
  const int count = o.quick ? 5 : 20;
  for (int k = 0; k < count; ++k) {
    Graph g = random_connected(rng, 3, 15);
    const int p = std::uniform_int_distribution<int>(1, 4)(rng);
    const ProblemInstance inst = random_quadratic_instance(std::move(g), p, rng());
    const NewtonContext ctx = NewtonContext::build(inst);
    const DualState s = evaluate_dual(inst, normal_vector(rng, static_cast<Eigen::Index>(inst.n()) * p));
    const Eigen::MatrixXd M = dense_big_m(inst);
    const Eigen::MatrixXd H = M * dense_inverse_hessian(inst, s.y) * M;
    const Eigen::VectorXd dstar = pseudo_inverse(H) * (M * s.y);
    for (double eps0 : {0.1, 0.01}) {
      const Eigen::VectorXd d = newton_direction(inst, ctx, s, eps0);
      const double bound =
          composed_direction_epsilon(eps0, inst.gamma, inst.Gamma, inst.spectrum.mu2, inst.spectrum.muN);
      t.check(seminorm(H, d - dstar), bound * seminorm(H, dstar),
              "instance " + std::to_string(k) + " eps0 " + std::to_string(eps0));
    }
  }
  return t.done();
}

double grad_mnorm(const ProblemInstance& inst, const Eigen::VectorXd& g) {
  return std::sqrt(std::max(0.0, g.dot(big_m_apply(inst.L, inst.p, g))));
}

PropertyResult newton_one_step(const VerifyOptions& o) {
  Tally t("newton", "one_step_exactness");
  std::mt19937_64 rng(o.seed + 606);
  const int count = o.quick ? 3 : 10;
  for (int k = 0; k < count; ++k) {
    Graph g = random_connected(rng, 3, 15);
    const int p = std::uniform_int_distribution<int>(1, 4)(rng);
    const ProblemInstance inst = random_quadratic_instance(std::move(g), p, rng());
    NewtonConfig cfg;
    cfg.eps0 = 1e-12;
    cfg.step_mode = StepMode::fixed;
    cfg.alpha = 1.0;
    const NewtonContext ctx = NewtonContext::build(inst);
    const DualState s0 = evaluate_dual(inst, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(inst.n()) * p));
    const auto c = compute_constants(inst, 0.0, 1.0);
    const NewtonIterate it = step(inst, ctx, s0, cfg, 1.0, c);
    t.check(grad_mnorm(inst, it.state.g), 1e-8, "instance " + std::to_string(k));
  }
  return t.done();
}

/// Well-conditioned quadratic on a complete graph, with a declared inverse-Hessian
/// Lipschitz bound chosen so that eta1 is 1e-4 times the initial gradient M-norm.
/// Any delta >= 0 is a valid bound for a quadratic.
struct PhaseInstance {
  ProblemInstance inst;
  ConvergenceConstants c;
  double eps = 0.0;
};

PhaseInstance phase_instance(int n, int p, std::uint64_t seed, double eps0) {
  PhaseInstance out{random_quadratic_instance(complete_graph(n), p, seed, 0.1), {}, 0.0};
  auto& inst = out.inst;
  out.eps = composed_direction_epsilon(eps0, inst.gamma, inst.Gamma, inst.spectrum.mu2, inst.spectrum.muN);
  const ConvergenceConstants c0 = compute_constants(inst, out.eps);
  const DualState s0 = evaluate_dual(inst, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n) * p));
  const double g0 = grad_mnorm(inst, s0.g);
  const double xi_target = (1.0 - c0.zeta) / (1e-4 * g0);
  const double a = c0.alpha * inst.Gamma * (1.0 + out.eps);
  const double B = xi_target * 2.0 * std::pow(inst.spectrum.mu2, 4) / (a * a);
  inst.delta = B * inst.gamma / (p * std::pow(inst.spectrum.muN, 2.5));
  out.c = compute_constants(inst, out.eps);
  return out;
}

PropertyResult newton_phases(const VerifyOptions& o, bool strict) {
  Tally t("newton", strict ? "strict_decrease_phase" : "terminal_phase_ratio");
  const int count = o.quick ? 5 : 8;
  for (int k = 0; k < count; ++k) {
    PhaseInstance pi = phase_instance(4 + k % 5, 1 + k % 3, o.seed * 1000 + k, 1e-3);
    const auto& inst = pi.inst;
    if (!pi.c.eps_admissible) {
      t.fail("instance " + std::to_string(k) + " is not in the admissible regime");
      continue;
    }
    NewtonConfig cfg;
    cfg.eps0 = 1e-3;
    const NewtonContext ctx = NewtonContext::build(inst);
    DualState s = evaluate_dual(inst, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(inst.n()) * inst.p));
    int checked = 0;
    for (int it = 0; it < 60; ++it) {
      const double gk = grad_mnorm(inst, s.g);
      if (gk < 1e-11) break;
      const NewtonIterate next = step(inst, ctx, s, cfg, pi.c.alpha, pi.c);
      const std::string label = "instance " + std::to_string(k) + " iter " + std::to_string(it);
      if (strict && gk >= pi.c.eta1) {
        // The dual is maximized, so the bound on -q reads q_{k+1} - q_k >= const.
        const double gain = dual_value(inst, next.state) - dual_value(inst, s);
        t.check(pi.c.strict_decrease, gain, label);
        ++checked;
      }
      if (!strict && gk <= pi.c.eta0) {
        t.check(grad_mnorm(inst, next.state.g) / gk, pi.c.zeta, label);
        ++checked;
      }
      s = next.state;
    }
    if (checked == 0) t.fail("instance " + std::to_string(k) + " never entered the phase");
  }
  return t.done();
}

PropertyResult newton_gradient_recursion(const VerifyOptions& o) {
  Tally t("newton", "gradient_recursion");
  std::mt19937_64 rng(o.seed + 808);
  const int count = o.quick ? 3 : 8;
  for (int k = 0; k < count; ++k) {
    Graph g = random_connected(rng, 3, 12);
    const int p = std::uniform_int_distribution<int>(1, 3)(rng);
    const ProblemInstance inst = random_quadratic_instance(std::move(g), p, rng());
    NewtonConfig cfg;
    cfg.eps0 = 1e-3;
    const double eps = theorem_epsilon(inst, cfg.eps0);
    const auto c = compute_constants(inst, eps);
    const NewtonContext ctx = NewtonContext::build(inst);
    DualState s = evaluate_dual(inst, Eigen::VectorXd::Zero(static_cast<Eigen::Index>(inst.n()) * p));
    for (int it = 0; it < 5; ++it) {
      const double gk = grad_mnorm(inst, s.g);
      const NewtonIterate next = step(inst, ctx, s, cfg, c.alpha, c);
      t.check(grad_mnorm(inst, next.state.g) / gk, gradient_ratio_bound(c, gk),
              "instance " + std::to_string(k) + " iter " + std::to_string(it));
      s = next.state;
    }
  }
  return t.done();
}

PropertyResult guarded(const std::string& suite, const std::string& property,
                       const std::function<PropertyResult()>& fn) {
  try {
    return fn();
  } catch (const std::exception& ex) {
    return {suite, property, false, 0, std::string("exception: ") + ex.what()};
  }
}

}  // namespace

VerifyReport run_verify(const std::string& suite, const VerifyOptions& o) {
  if (suite != "sdd" && suite != "dual" && suite != "newton" && suite != "all")
    throw ConfigError("unknown verify suite '" + suite + "' (expected sdd, dual, newton or all)");
  VerifyReport rep;
  auto add = [&](const std::string& s, const std::string& name, std::function<PropertyResult()> fn) {
    if (suite == "all" || suite == s) rep.results.push_back(guarded(s, name, fn));
  };
  add("sdd", "splitting_identity", [&] { return sdd_splitting_identity(o); });
  add("sdd", "eps_certification", [&] { return sdd_eps_certification(o); });
  add("sdd", "crude_contraction", [&] { return sdd_crude_contraction(o); });
  add("dual", "gradient_finite_difference", [&] { return dual_gradient_fd(o); });
  add("dual", "hessian_finite_difference", [&] { return dual_hessian_fd(o); });
  add("dual", "primal_recovery_stationarity", [&] { return dual_recovery_stationarity(o); });
  add("dual", "recovery_locality", [&] { return dual_locality(o); });
  add("newton", "direction_error_bound", [&] { return newton_direction_bound(o); });
  add("newton", "one_step_exactness", [&] { return newton_one_step(o); });
  add("newton", "strict_decrease_phase", [&] { return newton_phases(o, true); });
  add("newton", "terminal_phase_ratio", [&] { return newton_phases(o, false); });
  add("newton", "gradient_recursion", [&] { return newton_gradient_recursion(o); });
  return rep;
}

void print_matrix(const VerifyReport& report, std::ostream& out) {
  for (const auto& r : report.results)
    out << std::left << std::setw(8) << r.suite << std::setw(32) << r.property << (r.passed ? "PASS" : "FAIL")
        << "  cases=" << std::setw(5) << r.cases << ' ' << r.detail << '\n';
  out << (report.failures() == 0 ? "all properties passed" : std::to_string(report.failures()) + " failing") << '\n';
}

}  // namespace sddnewton
