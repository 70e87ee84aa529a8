#include "sddnewton/newton.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "sddnewton/errors.hpp"

namespace sddnewton {

std::string to_string(StepMode m) {
  switch (m) {
    case StepMode::alpha_star: return "alpha_star";
    case StepMode::fixed: return "fixed";
    case StepMode::grid: return "grid";
  }
  return "alpha_star";
}

StepMode step_mode_from_string(const std::string& s) {
  if (s == "alpha_star") return StepMode::alpha_star;
  if (s == "fixed") return StepMode::fixed;
  if (s == "grid") return StepMode::grid;
  throw ConfigError("unknown step_mode '" + s + "' (expected alpha_star|fixed|grid)");
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::strict_decrease: return "strict_decrease";
    case Phase::quadratic: return "quadratic";
    case Phase::terminal: return "terminal";
  }
  return "terminal";
}

Phase classify_phase(double grad_mnorm, const ConvergenceConstants& c) {
  if (grad_mnorm >= c.eta1) return Phase::strict_decrease;
  if (grad_mnorm >= c.eta0) return Phase::quadratic;
  return Phase::terminal;
}

nlohmann::json NewtonConfig::to_json() const {
  return {{"eps0", eps0},
          {"step_mode", to_string(step_mode)},
          {"alpha", alpha},
          {"grid", grid},
          {"pilot_iters", pilot_iters},
          {"max_iters", max_iters},
          {"tol_grad_mnorm", tol_grad_mnorm},
          {"tol_grad_relative", tol_grad_relative},
          {"tol_consensus", tol_consensus},
          {"chain_depth", chain_depth},
          {"kernel_correction", kernel_correction},
          {"message_unit", to_string(message_unit)},
          {"divergence_window", divergence_window}};
}

NewtonConfig NewtonConfig::from_json(const nlohmann::json& j) {
  NewtonConfig c;
  c.eps0 = j.value("eps0", c.eps0);
  c.step_mode = step_mode_from_string(j.value("step_mode", to_string(c.step_mode)));
  c.alpha = j.value("alpha", c.alpha);
  c.grid = j.value("grid", c.grid);
  c.pilot_iters = j.value("pilot_iters", c.pilot_iters);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.tol_grad_mnorm = j.value("tol_grad_mnorm", c.tol_grad_mnorm);
  c.tol_grad_relative = j.value("tol_grad_relative", c.tol_grad_relative);
  c.tol_consensus = j.value("tol_consensus", c.tol_consensus);
  c.chain_depth = j.value("chain_depth", c.chain_depth);
  c.kernel_correction = j.value("kernel_correction", c.kernel_correction);
  c.message_unit = message_unit_from_string(j.value("message_unit", to_string(c.message_unit)));
  c.divergence_window = j.value("divergence_window", c.divergence_window);
  if (!(c.eps0 > 0.0 && c.eps0 < 1.0)) throw ConfigError("eps0 must lie in (0, 1)");
  if (c.max_iters < 1 || c.pilot_iters < 1) throw ConfigError("iteration caps must be positive");
  if (c.step_mode == StepMode::grid && c.grid.empty()) throw ConfigError("grid step mode needs a non-empty grid");
  return c;
}

NewtonContext NewtonContext::build(const ProblemInstance& inst, int chain_depth) {
  const int d = chain_depth > 0 ? chain_depth : default_chain_depth(inst.n());
  return {build_chain(split(inst.L), d)};
}

namespace {

double block_mnorm(const ProblemInstance& inst, const Eigen::VectorXd& v) {
  return std::sqrt(std::max(0.0, v.dot(big_m_apply(inst.L, inst.p, v))));
}

Eigen::VectorXd node_slice(const Eigen::VectorXd& v, int n, int p, int i) {
  Eigen::VectorXd out(p);
  for (int r = 0; r < p; ++r) out(r) = v(static_cast<Eigen::Index>(r) * n + i);
  return out;
}

void set_node_slice(Eigen::VectorXd& v, int n, int i, const Eigen::VectorXd& s) {
  for (Eigen::Index r = 0; r < s.size(); ++r) v(r * n + i) = s(r);
}

}  // namespace

Eigen::VectorXd newton_direction(const ProblemInstance& inst, const NewtonContext& ctx, const DualState& state,
                                 double eps0, bool kernel_correction, DirectionReport* report) {
  const int n = inst.n();
  const int p = inst.p;
  if (state.g.size() != static_cast<Eigen::Index>(n) * p || state.y.size() != state.g.size())
    throw DimensionError("newton_direction: state has wrong length");
  DirectionReport local;
  DirectionReport& rep = report ? *report : local;
  rep = DirectionReport{};

  // First system, block r: L z_r = L y_r = g_r.
  Eigen::VectorXd z(state.g.size());
  for (int r = 0; r < p; ++r) {
    SolveReport s = exact_solve(ctx.chain, state.g.segment(static_cast<Eigen::Index>(r) * n, n), eps0);
    if (!s.converged) rep.all_converged = false;
    rep.first_solve_applies.push_back(s.counters.laplacian_applies());
    rep.richardson_iters.push_back(s.richardson_iters);
    z.segment(static_cast<Eigen::Index>(r) * n, n) = s.solution;
  }

  std::vector<Eigen::MatrixXd> F(n);
  for (int i = 0; i < n; ++i) F[i] = inst.locals[i]->hessian(node_slice(state.y, n, p, i));

  if (kernel_correction) {
    Eigen::MatrixXd S = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd t = Eigen::VectorXd::Zero(p);
    for (int i = 0; i < n; ++i) {
      S += F[i];
      t += F[i] * node_slice(z, n, p, i);
    }
    rep.correction = -S.llt().solve(t);
    for (int r = 0; r < p; ++r) z.segment(static_cast<Eigen::Index>(r) * n, n).array() += rep.correction(r);
  }

  Eigen::VectorXd b(z.size());
  for (int i = 0; i < n; ++i) set_node_slice(b, n, i, F[i] * node_slice(z, n, p, i));

  Eigen::VectorXd d(z.size());
  for (int r = 0; r < p; ++r) {
    Eigen::VectorXd br = b.segment(static_cast<Eigen::Index>(r) * n, n);
    br.array() -= br.mean();
    SolveReport s = exact_solve(ctx.chain, br, eps0);
    if (!s.converged) rep.all_converged = false;
    rep.second_solve_applies.push_back(s.counters.laplacian_applies());
    rep.richardson_iters.push_back(s.richardson_iters);
    d.segment(static_cast<Eigen::Index>(r) * n, n) = s.solution;
  }
  return d;
}

DualState distributed_evaluate(const ProblemInstance& inst, Network& net, Eigen::VectorXd lambda) {
  const int n = inst.n();
  const int p = inst.p;
  if (lambda.size() != static_cast<Eigen::Index>(n) * p) throw DimensionError("distributed_evaluate: bad lambda");
  const Graph& g = inst.graph;

  auto exchange_and_apply_laplacian = [&](const Eigen::VectorXd& v) {
    std::vector<Eigen::VectorXd> own(n);
    for (int i = 0; i < n; ++i) {
      own[i] = node_slice(v, n, p, i);
      net.broadcast(i, {own[i].data(), static_cast<std::size_t>(p)});
    }
    net.deliver();
    std::vector<Eigen::VectorXd> out(n);
    for (int i = 0; i < n; ++i) {
      Eigen::VectorXd acc = static_cast<double>(g.degree(i)) * own[i];
      for (int j : g.neighbors(i)) {
        auto msg = net.received(i, j);
        for (int r = 0; r < p; ++r) acc(r) -= msg[r];
      }
      out[i] = std::move(acc);
    }
    return out;
  };

  DualState s;
  const auto z = exchange_and_apply_laplacian(lambda);
  s.y.resize(lambda.size());
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd theta;
    try {
      theta = inst.locals[i]->recover_primal(z[i]);
    } catch (const std::exception& ex) {
      throw NodeError(i, ex.what());
    }
    set_node_slice(s.y, n, i, theta);
  }
  const auto gy = exchange_and_apply_laplacian(s.y);
  s.g.resize(lambda.size());
  for (int i = 0; i < n; ++i) set_node_slice(s.g, n, i, gy[i]);
  s.lambda = std::move(lambda);
  return s;
}

StepCost newton_solver_cost(const DirectionReport& rep, int p, bool kernel_correction) {
  StepCost c;
  c.solves.push_back({rep.first_solve_applies});
  c.solves.push_back({rep.second_solve_applies});
  if (kernel_correction) c.reductions.push_back({p * p + p, p});
  return c;
}

NewtonIterate step(const ProblemInstance& inst, const NewtonContext& ctx, const DualState& state,
                   const NewtonConfig& cfg, double alpha, const ConvergenceConstants& constants, Network* net) {
  NewtonIterate it;
  it.d_tilde = newton_direction(inst, ctx, state, cfg.eps0, cfg.kernel_correction, &it.report);
  if (net) net->charge(charge_messages(inst.graph, newton_solver_cost(it.report, inst.p, cfg.kernel_correction),
                                       cfg.message_unit));
  if (alpha == 0.0) {
    it.state = state;
  } else {
    Eigen::VectorXd next = state.lambda + alpha * it.d_tilde;
    it.state = net ? distributed_evaluate(inst, *net, std::move(next)) : evaluate_dual(inst, std::move(next));
  }
  it.phase = classify_phase(block_mnorm(inst, it.state.g), constants);
  return it;
}

double theorem_epsilon(const ProblemInstance& inst, double eps0) {
  const double e = composed_direction_epsilon(eps0, inst.gamma, inst.Gamma, inst.spectrum.mu2, inst.spectrum.muN);
  if (e < 1.0) return e;
  return std::min(eps0, 1.0 - 1e-9);
}

namespace {

double pilot_score(const ProblemInstance& inst, const DualState& s) {
  if (inst.reference) return tolerance_score(inst, unstack(s.y, inst.n(), inst.p));
  const double g = block_mnorm(inst, s.g);
  return std::isfinite(g) ? g : std::numeric_limits<double>::infinity();
}

}  // namespace

RunTrace run_newton(const ProblemInstance& inst, const NewtonConfig& cfg, NewtonRunInfo* info, AccessLog* log) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  NewtonRunInfo local;
  NewtonRunInfo& out = info ? *info : local;
  out = NewtonRunInfo{};

  const NewtonContext ctx = NewtonContext::build(inst, cfg.chain_depth);
  out.theorem_eps = theorem_epsilon(inst, cfg.eps0);
  const ConvergenceConstants star = compute_constants(inst, out.theorem_eps);
  const int n = inst.n();
  const int p = inst.p;
  const Eigen::VectorXd lambda0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n) * p);

  switch (cfg.step_mode) {
    case StepMode::alpha_star: out.alpha = star.alpha_star; break;
    case StepMode::fixed: out.alpha = cfg.alpha; break;
    case StepMode::grid: {
      double best = std::numeric_limits<double>::infinity();
      out.alpha = cfg.grid.front();
      for (double a : cfg.grid) {
        DualState s = evaluate_dual(inst, lambda0);
        double score = std::numeric_limits<double>::infinity();
        try {
          for (int k = 0; k < cfg.pilot_iters; ++k) s = step(inst, ctx, s, cfg, a, star, nullptr).state;
          score = pilot_score(inst, s);
        } catch (const std::exception&) {
          score = std::numeric_limits<double>::infinity();
        }
        out.pilot_scores.emplace_back(a, score);
        if (score < best) {
          best = score;
          out.alpha = a;
        }
      }
      break;
    }
  }
  if (!(out.alpha > 0.0)) throw ConfigError("Newton step size must be > 0");
  out.constants = compute_constants(inst, out.theorem_eps, out.alpha);

  RunTrace trace;
  trace.algorithm = "sdd_newton";
  trace.config_hash = stable_hash(cfg.to_json().dump());
  trace.seed = inst.graph.seed();
  trace.message_unit = cfg.message_unit;

  Network net(inst.graph, cfg.message_unit, log);
  DualState state = distributed_evaluate(inst, net, lambda0);
  auto ms = [&] { return std::chrono::duration<double, std::milli>(clock::now() - t0).count(); };
  auto make_row = [&](int k, const DualState& s) {
    const Eigen::MatrixXd theta = unstack(s.y, n, p);
    const double gnorm = block_mnorm(inst, s.g);
    return TraceRow{k,
                    primal_objective(inst, theta),
                    consensus_error(inst.graph, theta),
                    gnorm,
                    to_string(classify_phase(gnorm, out.constants)),
                    net.messages(),
                    ms()};
  };

  trace.rows.push_back(make_row(0, state));
  const double g0 = trace.rows.back().grad_mnorm;
  const double tol_grad = cfg.tol_grad_mnorm >= 0.0 ? cfg.tol_grad_mnorm : cfg.tol_grad_relative * g0;
  auto done = [&](const TraceRow& r) { return r.grad_mnorm <= tol_grad || r.consensus_error <= cfg.tol_consensus; };

  int increases = 0;
  int inner_failures = 0;
  out.converged = done(trace.rows.back());
  for (int k = 1; k <= cfg.max_iters && !out.converged; ++k) {
    NewtonIterate it = step(inst, ctx, state, cfg, out.alpha, out.constants, &net);
    if (!it.report.all_converged) ++inner_failures;
    state = std::move(it.state);
    trace.rows.push_back(make_row(k, state));
    const double prev = trace.rows[trace.rows.size() - 2].grad_mnorm;
    increases = trace.rows.back().grad_mnorm > prev ? increases + 1 : 0;
    if (increases >= cfg.divergence_window) out.diverged = true;
    if (!std::isfinite(trace.rows.back().grad_mnorm)) {
      out.diverged = true;
      break;
    }
    out.converged = done(trace.rows.back());
  }

  trace.final_theta = unstack(state.y, n, p);
  nlohmann::json pilots = nlohmann::json::array();
  for (const auto& [a, s] : out.pilot_scores) pilots.push_back({{"alpha", a}, {"score", std::isfinite(s) ? nlohmann::json(s) : nlohmann::json("inf")}});
  trace.extra = {{"config", cfg.to_json()},
                 {"alpha", out.alpha},
                 {"theorem_eps", out.theorem_eps},
                 {"constants", out.constants.to_json()},
                 {"chain_depth", ctx.chain.depth},
                 {"chain_contraction", ctx.chain.contraction},
                 {"diverged", out.diverged},
                 {"converged", out.converged},
                 {"inner_solver_failures", inner_failures},
                 {"pilot_scores", pilots}};
  return trace;
}

}  // namespace sddnewton
