/// Acceptance checks. Each criterion prints one PASS/FAIL line; the exit
/// status is nonzero if any criterion fails.

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "sddnewton/baselines.hpp"
#include "sddnewton/experiment.hpp"
#include "sddnewton/newton.hpp"
#include "sddnewton/problems.hpp"
#include "sddnewton/sdd.hpp"

using namespace sddnewton;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// ------------------------------------------------------------------ 1

Outcome sdd_certification() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(1001);
  double worst = 0.0;
  int failures = 0;
  for (int t = 0; t < 50; ++t) {
    Graph g = oracle::random_graph(rng, 3, 40);
    const Eigen::MatrixXd L = laplacian(g);
    // Alternate shallow chains (Richardson does the work) with default depth.
    const InverseChain chain = build_chain(split(L), t % 2 ? 2 : default_chain_depth(g.num_nodes()));
    Eigen::VectorXd b = oracle::randn(rng, g.num_nodes());
    b.array() -= b.mean();
    const Eigen::VectorXd xstar = oracle::pinv(L) * b;
    const double ref = oracle::mnorm(L, xstar);
    for (double eps : {0.1, 0.01, 1e-4}) {
      const SolveReport r = exact_solve(chain, b, eps);
      const double rel = oracle::mnorm(L, r.solution - xstar) / ref;
      worst = std::max(worst, rel / eps);
      if (rel > eps) ++failures;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {failures == 0 && secs < 30.0, "150 solves, worst error/eps " + fmt("%.3g", worst) + ", " +
                                            std::to_string(failures) + " violations, " + fmt("%.2f", secs) + " s"};
}

// ------------------------------------------------------------------ 2

Outcome splitting_identity() {
  std::mt19937_64 rng(2002);
  std::uniform_real_distribution<double> u(0, 1);
  double worst = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int n = 2 + t % 9;
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (u(rng) < 0.6) M(i, j) = M(j, i) = -u(rng);
    for (int i = 0; i < n; ++i) M(i, i) = -M.row(i).sum() + 0.05 + u(rng);
    const Splitting s = split(M);
    const Eigen::MatrixXd D = s.D0.asDiagonal();
    const Eigen::MatrixXd Di = s.D0.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd rhs = 0.5 * (Di + (I + Di * s.A0) * (D - s.A0 * Di * s.A0).inverse() * (I + s.A0 * Di));
    const Eigen::MatrixXd inv = M.inverse();
    worst = std::max(worst, (rhs - inv).norm() / inv.norm());
  }
  return {worst <= 1e-10, "20 matrices, worst relative error " + fmt("%.2e", worst)};
}

// ------------------------------------------------------------------ 3

Outcome dual_calculus() {
  std::mt19937_64 rng(3003);
  double worst_g = 0.0, worst_h = 0.0;
  for (int t = 0; t < 20; ++t) {
    Graph g = oracle::random_graph(rng, 3, 10);
    const int p = 1 + t % 3;
    const ProblemInstance inst = random_quadratic_instance(g, p, rng());
    const oracle::QuadraticDual dual{inst};
    const Eigen::MatrixXd M = oracle::kron_identity(p, inst.L);
    const Eigen::VectorXd lam = oracle::randn(rng, inst.n() * p);
    const Eigen::VectorXd v = oracle::randn(rng, inst.n() * p);

    const Eigen::VectorXd g_lib = dual_gradient(inst, lam);
    const Eigen::VectorXd g_fd = oracle::fd_gradient([&](const Eigen::VectorXd& x) { return dual.value(x); }, lam);
    worst_g = std::max(worst_g, (g_lib - g_fd).norm() / std::max(1.0, g_fd.norm()));

    const Eigen::MatrixXd J =
        oracle::fd_jacobian([&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return M * dual.primal(x); }, lam);
    const Eigen::VectorXd h_fd = J * v;
    const Eigen::VectorXd h_lib = dual_hessian_apply(inst, lam, v);
    worst_h = std::max(worst_h, (h_lib - h_fd).norm() / std::max(1.0, h_fd.norm()));
  }
  return {worst_g <= 1e-4 && worst_h <= 1e-4,
          "20 instances, gradient rel err " + fmt("%.2e", worst_g) + ", Hessian rel err " + fmt("%.2e", worst_h)};
}

// ------------------------------------------------------------------ 4

Outcome direction_bound() {
  std::mt19937_64 rng(4004);
  double worst = 0.0;  // measured ratio / bound
  int violations = 0;
  for (int t = 0; t < 20; ++t) {
    Graph g = oracle::random_graph(rng, 3, 15);
    const int p = 1 + t % 4;
    const ProblemInstance inst = random_quadratic_instance(g, p, rng());
    // Depth-2 chains leave a visible solver error for the bound to control.
    const NewtonContext ctx = NewtonContext::build(inst, 2);
    const DualState s = evaluate_dual(inst, oracle::randn(rng, inst.n() * p));
    Eigen::MatrixXd H;
    const Eigen::VectorXd d = oracle::exact_direction(inst, s.y, &H);
    for (double eps0 : {0.1, 0.01}) {
      const Eigen::VectorXd dt = newton_direction(inst, ctx, s, eps0);
      const double ratio = oracle::mnorm(H, dt - d) / oracle::mnorm(H, d);
      const double bound =
          composed_direction_epsilon(eps0, inst.gamma, inst.Gamma, inst.spectrum.mu2, inst.spectrum.muN);
      worst = std::max(worst, ratio / bound);
      if (ratio > bound) ++violations;
    }
  }
  return {violations == 0, "40 directions, worst ratio/bound " + fmt("%.3g", worst)};
}

// ------------------------------------------------------------------ 5

Outcome one_step_exactness() {
  std::mt19937_64 rng(5005);
  double worst = 0.0;
  for (int t = 0; t < 10; ++t) {
    Graph g = oracle::random_graph(rng, 3, 20);
    const int p = 1 + t % 4;
    const ProblemInstance inst = random_quadratic_instance(g, p, rng());
    const Eigen::MatrixXd M = oracle::kron_identity(p, inst.L);
    NewtonConfig cfg;
    cfg.eps0 = 1e-12;
    const NewtonContext ctx = NewtonContext::build(inst);
    const auto c = compute_constants(inst, theorem_epsilon(inst, cfg.eps0), 1.0);
    const DualState s0 = evaluate_dual(inst, Eigen::VectorXd::Zero(inst.n() * p));
    const NewtonIterate it = step(inst, ctx, s0, cfg, 1.0, c);
    worst = std::max(worst, oracle::mnorm(M, it.state.g));
  }
  return {worst <= 1e-8, "10 instances, worst ||g||_M after one step " + fmt("%.2e", worst)};
}

// ------------------------------------------------------------------ 6

/// Quadratic instance on K_n with an artificial inverse-Hessian Lipschitz
/// constant chosen so the strict-decrease threshold sits at `frac` times the
/// initial dual gradient norm. delta = 0 would put every iterate in the
/// terminal phase.
struct PhaseCase {
  ProblemInstance inst;
  ConvergenceConstants c;
};

PhaseCase phase_case(int n, int p, std::uint64_t seed, double eps0, double frac) {
  PhaseCase out{random_quadratic_instance(complete_graph(n), p, seed, 0.1), {}};
  auto& inst = out.inst;
  const double eps = composed_direction_epsilon(eps0, inst.gamma, inst.Gamma, inst.spectrum.mu2, inst.spectrum.muN);
  const Eigen::MatrixXd M = oracle::kron_identity(p, inst.L);
  const double g0 = oracle::mnorm(M, evaluate_dual(inst, Eigen::VectorXd::Zero(n * p)).g);
  inst.delta = 1.0;
  const ConvergenceConstants unit = compute_constants(inst, eps);
  // eta1 scales as 1/delta.
  inst.delta = unit.eta1 / (frac * g0);
  out.c = compute_constants(inst, eps);
  return out;
}

Outcome convergence_phases() {
  int strict_checks = 0, terminal_checks = 0, instances_strict = 0, instances_terminal = 0;
  int strict_violations = 0, terminal_violations = 0;
  double min_gain_ratio = kInf;  // measured dual gain / printed strict-decrease constant
  double max_zeta_ratio = 0.0;   // terminal-phase ||g+||/||g|| over zeta
  std::string why;
  for (int k = 0; k < 6; ++k) {
    PhaseCase pc = phase_case(4 + k % 5, 1 + k % 3, 600 + k, 1e-3, 1e-4);
    const auto& inst = pc.inst;
    if (!pc.c.eps_admissible) {
      why += " instance " + std::to_string(k) + " inadmissible;";
      continue;
    }
    const oracle::QuadraticDual dual{inst};
    const Eigen::MatrixXd M = oracle::kron_identity(inst.p, inst.L);
    NewtonConfig cfg;
    cfg.eps0 = 1e-3;
    const NewtonContext ctx = NewtonContext::build(inst);
    DualState s = evaluate_dual(inst, Eigen::VectorXd::Zero(inst.n() * inst.p));
    bool saw_strict = false, saw_terminal = false;
    for (int it = 0; it < 60; ++it) {
      const double gk = oracle::mnorm(M, s.g);
      if (gk < 1e-11) break;
      const NewtonIterate next = step(inst, ctx, s, cfg, pc.c.alpha, pc.c);
      if (gk >= pc.c.eta1) {
        saw_strict = true;
        ++strict_checks;
        const double gain = dual.value(next.state.lambda) - dual.value(s.lambda);
        min_gain_ratio = std::min(min_gain_ratio, gain / pc.c.strict_decrease);
        if (gain < pc.c.strict_decrease) ++strict_violations;
      }
      if (gk <= pc.c.eta0) {
        saw_terminal = true;
        ++terminal_checks;
        const double r = oracle::mnorm(M, next.state.g) / gk / pc.c.zeta;
        max_zeta_ratio = std::max(max_zeta_ratio, r);
        if (r > 1.0) ++terminal_violations;
      }
      s = next.state;
    }
    instances_strict += saw_strict;
    instances_terminal += saw_terminal;
  }
  const bool pass = why.empty() && strict_violations == 0 && terminal_violations == 0 && instances_strict >= 5 &&
                    instances_terminal >= 5;
  return {pass, "strict phase: " + std::to_string(strict_checks) + " steps on " + std::to_string(instances_strict) +
                    " instances, " + std::to_string(strict_violations) + " below the constant, min gain/constant " +
                    fmt("%.3g", min_gain_ratio) + "; terminal phase: " + std::to_string(terminal_checks) +
                    " steps on " + std::to_string(instances_terminal) + " instances, " +
                    std::to_string(terminal_violations) + " above zeta, max ratio/zeta " +
                    fmt("%.3g", max_zeta_ratio) + why};
}

// ------------------------------------------------------------ 7, 8 shared

/// Relative gap and normalized consensus error computed from a trace row.
struct RowScore {
  double gap;
  double score;
};

RowScore row_score(const ProblemInstance& inst, const TraceRow& r) {
  const double fstar = inst.reference->value;
  const double gap = std::abs(r.objective - fstar) / std::abs(fstar);
  const double cons =
      r.consensus_error / (std::sqrt(static_cast<double>(inst.graph.num_edges())) * inst.reference->theta.norm());
  return {gap, std::max(gap, cons)};
}

std::string count_str(double v) { return std::isfinite(v) ? std::to_string(static_cast<long long>(v)) : "never"; }

// ------------------------------------------------------------------ 7

Outcome iteration_ordering(const ExperimentConfig& cfg, const ProblemInstance& inst, const ExperimentResult& res) {
  double newton_iters = kInf;
  bool pass = true;
  std::string detail;
  std::vector<std::pair<std::string, double>> baseline_iters;
  for (const auto& a : res.algorithms) {
    double first = kInf;
    for (const auto& r : a.trace.rows) {
      const RowScore s = row_score(inst, r);
      // Newton must meet the gap and the consensus band; baselines only the gap.
      const double metric = a.name == "sdd_newton" ? s.score : s.gap;
      if (metric <= cfg.objective_tol) {
        first = r.iter;
        break;
      }
    }
    const double final_score = tolerance_score(inst, a.trace.final_theta);
    if (!(final_score <= 1e-3)) pass = false;
    if (a.name == "sdd_newton")
      newton_iters = first;
    else
      baseline_iters.emplace_back(a.name, first);
    detail += a.name + " " + count_str(first) + " (final score " + fmt("%.1e", final_score) + "), ";
  }
  if (!std::isfinite(newton_iters)) pass = false;
  for (const auto& [name, it] : baseline_iters)
    if (!(newton_iters < it)) pass = false;
  if (baseline_iters.size() != 3) pass = false;
  detail.resize(detail.size() - 2);
  return {pass, "iterations to 1e-6: " + detail};
}

// ------------------------------------------------------------------ 8

Outcome message_growth(const ExperimentConfig& cfg, const ProblemInstance& inst) {
  const double tols[3] = {1e-2, 1e-4, 1e-6};
  auto messages_at = [&](const RunTrace& tr) {
    std::array<double, 3> m{kInf, kInf, kInf};
    for (const auto& r : tr.rows) {
      const double s = row_score(inst, r).score;
      for (int k = 0; k < 3; ++k)
        if (!std::isfinite(m[k]) && s <= tols[k]) m[k] = static_cast<double>(r.messages_cumulative);
    }
    return m;
  };

  NewtonConfig ncfg;
  for (const auto& a : cfg.algorithms)
    if (a.name == "sdd_newton") ncfg = NewtonConfig::from_json(a.params);
  ncfg.message_unit = cfg.message_unit;
  const RunTrace newton = run_newton(inst, ncfg);

  BaselineConfig scfg = BaselineConfig::defaults_for(BaselineKind::subgradient);
  scfg.max_iters = 20000;
  scfg.pilot_iters = 20000;
  scfg.message_unit = cfg.message_unit;
  BaselineRunInfo info;
  const RunTrace sub = run_baseline(BaselineKind::subgradient, inst, scfg, &info);

  const std::filesystem::path dir = "acceptance_artifacts";
  std::filesystem::create_directories(dir);
  newton.write((dir / "messages_sdd_newton.csv").string(), (dir / "messages_sdd_newton.json").string());
  sub.write((dir / "messages_subgradient.csv").string(), (dir / "messages_subgradient.json").string());

  const auto mn = messages_at(newton);
  const auto ms = messages_at(sub);
  auto growth = [](const std::array<double, 3>& m, int k) { return std::isfinite(m[0]) ? m[k] / m[0] : kInf; };
  bool pass = std::isfinite(mn[2]);
  for (int k = 1; k < 3; ++k) {
    const double gn = growth(mn, k), gs = growth(ms, k);
    // An unreached accuracy is infinite growth.
    if (!(gn < gs || (!std::isfinite(gs) && std::isfinite(gn)))) pass = false;
  }
  std::string detail = "messages at 1e-2/1e-4/1e-6: sdd_newton " + count_str(mn[0]) + "/" + count_str(mn[1]) + "/" +
                       count_str(mn[2]) + ", subgradient (beta " + fmt("%.3g", info.beta) + ") " + count_str(ms[0]) +
                       "/" + count_str(ms[1]) + "/" + count_str(ms[2]);
  return {pass, detail};
}

// ------------------------------------------------------------------ 9

Eigen::Matrix2d inverse2(const Eigen::Matrix2d& A) {
  const double det = A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0);
  Eigen::Matrix2d adj;
  adj << A(1, 1), -A(0, 1), -A(1, 0), A(0, 0);
  return adj / det;
}

Outcome baseline_fidelity() {
  std::mt19937_64 rng(9009);
  double admm_err = 0.0;
  {
    const ProblemInstance inst = random_quadratic_instance(Graph(2, {{0, 1}}), 2, 77);
    auto q0 = std::dynamic_pointer_cast<const QuadraticLocal>(inst.locals[0]);
    auto q1 = std::dynamic_pointer_cast<const QuadraticLocal>(inst.locals[1]);
    for (double beta : {0.5, 1.3}) {
      AdmmState s = admm_init(inst, beta);
      Eigen::Vector2d th0 = oracle::randn(rng, 2), th1 = oracle::randn(rng, 2), lam = oracle::randn(rng, 2);
      s.theta.row(0) = th0.transpose();
      s.theta.row(1) = th1.transpose();
      s.lambda.row(0) = lam.transpose();
      s.view[0][0] = th1;
      s.view[1][0] = th0;
      Network net(inst.graph, MessageUnit::vector);
      const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
      for (int k = 0; k < 3; ++k) {
        // Node 1 is a successor of node 0, node 0 a predecessor of node 1; d = 1.
        th0 = inverse2(q0->P() + 0.5 * beta * I) * (q0->c() + 0.5 * beta * (th1 + lam / beta));
        th1 = inverse2(q1->P() + 0.5 * beta * I) * (q1->c() + 0.5 * beta * (th0 - lam / beta));
        lam = lam - beta * (th0 - th1);
        admm_step(inst, s, net);
        admm_err = std::max({admm_err, (s.theta.row(0).transpose() - th0).cwiseAbs().maxCoeff(),
                             (s.theta.row(1).transpose() - th1).cwiseAbs().maxCoeff(),
                             (s.lambda.row(0).transpose() - lam).cwiseAbs().maxCoeff()});
      }
    }
  }

  double avg_err = 0.0;
  {
    Graph g = generate_random_graph(6, 9, 12);
    const ProblemInstance inst = random_quadratic_instance(g, 3, 5);
    const int n = 6;
    const double beta = 0.03;
    std::vector<Eigen::VectorXd> theta(n, Eigen::VectorXd::Zero(3)), omega = theta, z = theta;
    AveragingState s = averaging_init(inst, beta);
    Network net(g, MessageUnit::vector);
    for (int t = 0; t < 50; ++t) {
      std::vector<Eigen::VectorXd> nt(n), nw(n), nz(n);
      for (int i = 0; i < n; ++i) {
        const Eigen::VectorXd gi = inst.locals[i]->gradient(omega[i]);
        Eigen::VectorXd mix = Eigen::VectorXd::Zero(3);
        for (int j = 0; j < n; ++j)
          if (j != i && g.adjacent(i, j)) mix += (theta[j] - theta[i]) / std::max(g.degree(i), g.degree(j));
        nw[i] = theta[i] + 0.5 * mix - beta * gi;
        nz[i] = omega[i] - beta * gi;
        nt[i] = nw[i] + (1.0 - 2.0 / (9.0 * n + 1.0)) * (nw[i] - nz[i]);
      }
      theta = nt;
      omega = nw;
      z = nz;
      averaging_step(inst, s, net);
      for (int i = 0; i < n; ++i)
        avg_err = std::max({avg_err, (s.theta.row(i).transpose() - theta[i]).cwiseAbs().maxCoeff(),
                            (s.omega.row(i).transpose() - omega[i]).cwiseAbs().maxCoeff(),
                            (s.z.row(i).transpose() - z[i]).cwiseAbs().maxCoeff()});
    }
  }
  return {admm_err <= 1e-12 && avg_err <= 1e-12,
          "ADMM max deviation " + fmt("%.1e", admm_err) + ", averaging max deviation " + fmt("%.1e", avg_err)};
}

// ------------------------------------------------------------------ 10

std::string strip_wall(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  std::string out;
  for (std::string line; std::getline(in, line);) out += line.substr(0, line.rfind(',')) + "\n";
  return out;
}

Outcome determinism(ExperimentConfig cfg) {
  const std::filesystem::path a = "acceptance_artifacts/run_a", b = "acceptance_artifacts/run_b";
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
  cfg.output_dir = a.string();
  const ExperimentResult ra = run_experiment(cfg);
  cfg.output_dir = b.string();
  run_experiment(cfg);
  int files = 0;
  std::string mismatch;
  for (const auto& alg : ra.algorithms) {
    const std::string name = alg.name + ".csv";
    const std::string sa = strip_wall(a / name), sb = strip_wall(b / name);
    if (sa.empty() || sa != sb) mismatch += " " + name;
    ++files;
  }
  return {mismatch.empty() && files > 0,
          std::to_string(files) + " CSVs compared" + (mismatch.empty() ? ", identical" : "; differ:" + mismatch)};
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %-22s %s  %s [%.1f s]\n", id, name.c_str(), o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                secs);
    std::fflush(stdout);
    if (!o.pass) ++failed;
  };

  report(1, "sdd-certification", sdd_certification);
  report(2, "splitting-identity", splitting_identity);
  report(3, "dual-calculus", dual_calculus);
  report(4, "direction-bound", direction_bound);
  report(5, "one-step-exactness", one_step_exactness);
  report(6, "convergence-phases", convergence_phases);

  const ExperimentConfig cfg = preset("synthetic-regression-small");
  const ProblemInstance inst = build_experiment_instance(cfg);
  report(7, "iteration-ordering", [&] { return iteration_ordering(cfg, inst, run_experiment(cfg, false)); });
  report(8, "message-growth", [&] { return message_growth(cfg, inst); });
  report(9, "baseline-fidelity", baseline_fidelity);
  report(10, "determinism", [&] { return determinism(cfg); });

  std::printf("%d of 10 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
