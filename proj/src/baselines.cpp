#include "sddnewton/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "sddnewton/errors.hpp"
#include "sddnewton/problems.hpp"

namespace sddnewton {

std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::admm: return "admm";
    case BaselineKind::averaging: return "averaging";
    case BaselineKind::subgradient: return "subgradient";
  }
  return "admm";
}

BaselineKind baseline_kind_from_string(const std::string& s) {
  if (s == "admm") return BaselineKind::admm;
  if (s == "averaging") return BaselineKind::averaging;
  if (s == "subgradient") return BaselineKind::subgradient;
  throw ConfigError("unknown baseline '" + s + "'");
}

std::string to_string(StepScale s) {
  switch (s) {
    case StepScale::absolute: return "absolute";
    case StepScale::inverse_Gamma: return "inverse_Gamma";
    case StepScale::Gamma: return "Gamma";
  }
  return "absolute";
}

StepScale step_scale_from_string(const std::string& s) {
  if (s == "absolute") return StepScale::absolute;
  if (s == "inverse_Gamma") return StepScale::inverse_Gamma;
  if (s == "Gamma") return StepScale::Gamma;
  throw ConfigError("unknown beta scale '" + s + "' (expected absolute|inverse_Gamma|Gamma)");
}

nlohmann::json BaselineConfig::to_json() const {
  return {{"beta", beta},
          {"scale", to_string(scale)},
          {"beta_grid", beta_grid},
          {"pilot_iters", pilot_iters},
          {"max_iters", max_iters},
          {"message_unit", to_string(message_unit)}};
}

BaselineConfig BaselineConfig::from_json(const nlohmann::json& j) {
  BaselineConfig c;
  c.beta = j.value("beta", c.beta);
  c.scale = step_scale_from_string(j.value("scale", to_string(c.scale)));
  c.beta_grid = j.value("beta_grid", c.beta_grid);
  c.pilot_iters = j.value("pilot_iters", c.pilot_iters);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.message_unit = message_unit_from_string(j.value("message_unit", to_string(c.message_unit)));
  if (!(c.beta >= 0.0)) throw ConfigError("beta must be >= 0");
  for (double b : c.beta_grid)
    if (!(b > 0.0)) throw ConfigError("beta_grid entries must be > 0");
  if (c.max_iters < 1 || c.pilot_iters < 1) throw ConfigError("iteration caps must be positive");
  return c;
}

BaselineConfig BaselineConfig::defaults_for(BaselineKind k) {
  BaselineConfig c;
  if (k == BaselineKind::admm) {
    c.scale = StepScale::Gamma;
    c.beta_grid = {0.01, 0.03, 0.1, 0.3, 1.0, 3.0};
  } else {
    c.scale = StepScale::inverse_Gamma;
    c.beta_grid = {0.001, 0.003, 0.01, 0.03, 0.1, 0.3, 1.0};
  }
  return c;
}

double effective_beta(const ProblemInstance& inst, StepScale scale, double beta) {
  switch (scale) {
    case StepScale::absolute: return beta;
    case StepScale::inverse_Gamma: return beta / inst.Gamma;
    case StepScale::Gamma: return beta * inst.Gamma;
  }
  return beta;
}

namespace {

int edge_index(const Graph& g, int a, int b) {
  const Edge e{std::min(a, b), std::max(a, b)};
  auto it = std::lower_bound(g.edges().begin(), g.edges().end(), e);
  return static_cast<int>(it - g.edges().begin());
}

void broadcast_row(Network& net, int i, const Eigen::VectorXd& v) {
  net.broadcast(i, {v.data(), static_cast<std::size_t>(v.size())});
}

Eigen::VectorXd to_vec(std::span<const double> s) {
  return Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
}

}  // namespace

// --------------------------------------------------------------------- ADMM

AdmmState admm_init(const ProblemInstance& inst, double beta) {
  if (!(beta >= 0.0)) throw ConfigError("ADMM penalty beta must be >= 0");
  AdmmState s;
  s.beta = beta;
  s.theta = Eigen::MatrixXd::Zero(inst.n(), inst.p);
  s.lambda = Eigen::MatrixXd::Zero(inst.graph.num_edges(), inst.p);
  s.view.resize(inst.n());
  for (int i = 0; i < inst.n(); ++i)
    s.view[i].assign(inst.graph.neighbors(i).size(), Eigen::VectorXd::Zero(inst.p));
  return s;
}

void admm_step(const ProblemInstance& inst, AdmmState& s, Network& net) {
  const Graph& g = inst.graph;
  const int n = inst.n();
  const int p = inst.p;
  const double beta = s.beta;

  for (int i = 0; i < n; ++i) {
    const auto& nb = g.neighbors(i);
    const double d = static_cast<double>(nb.size());
    // w = sum_{j in S(i)} [theta_j + lambda_ij / beta] + sum_{j in P(i)} [theta_j - lambda_ji / beta]
    Eigen::VectorXd theta_sum = Eigen::VectorXd::Zero(p);
    Eigen::VectorXd lambda_sum = Eigen::VectorXd::Zero(p);  // sum lambda_ij - sum lambda_ji
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const int j = nb[k];
      const Eigen::VectorXd lam = s.lambda.row(edge_index(g, i, j)).transpose();
      theta_sum += s.view[i][k];
      lambda_sum += j > i ? lam : Eigen::VectorXd(-lam);
    }

    Eigen::VectorXd next;
    if (auto q = std::dynamic_pointer_cast<const QuadraticLocal>(inst.locals[i])) {
      Eigen::MatrixXd A = q->P();
      A.diagonal().array() += 0.5 * beta * d;
      Eigen::VectorXd rhs = q->c();
      if (beta > 0.0) {
        Eigen::VectorXd w = Eigen::VectorXd::Zero(p);
        for (std::size_t k = 0; k < nb.size(); ++k) {
          const int j = nb[k];
          const Eigen::VectorXd lam = s.lambda.row(edge_index(g, i, j)).transpose();
          w += j > i ? Eigen::VectorXd(s.view[i][k] + lam / beta) : Eigen::VectorXd(s.view[i][k] - lam / beta);
        }
        rhs += 0.5 * beta * w;
      } else {
        rhs += 0.5 * lambda_sum;
      }
      next = A.llt().solve(rhs);
    } else if (auto m = std::dynamic_pointer_cast<const ShiftedMinimizable>(inst.locals[i])) {
      // argmin f_i + (beta d / 2) ||theta||^2 - (beta w)^T theta
      const Eigen::VectorXd lin = -(beta * theta_sum + lambda_sum);
      try {
        next = m->minimize_shifted(lin, beta * d);
      } catch (const std::exception& ex) {
        throw NodeError(i, ex.what());
      }
    } else {
      throw ConfigError("ADMM needs quadratic or shift-minimizable local objectives");
    }
    s.theta.row(i) = next.transpose();
    broadcast_row(net, i, next);
    net.deliver();
    for (int j : nb) {
      const auto& nbj = g.neighbors(j);
      const auto k = std::lower_bound(nbj.begin(), nbj.end(), i) - nbj.begin();
      s.view[j][k] = to_vec(net.received(j, i));
    }
  }

  // lambda_ji <- lambda_ji - beta (theta_j - theta_i) for j in P(i), computed by i.
  for (int i = 0; i < n; ++i) {
    const auto& nb = g.neighbors(i);
    for (std::size_t k = 0; k < nb.size() && nb[k] < i; ++k) {
      const int e = edge_index(g, nb[k], i);
      s.lambda.row(e) -= beta * (s.view[i][k].transpose() - s.theta.row(i));
    }
  }
}

// ---------------------------------------------------------------- averaging

AveragingState averaging_init(const ProblemInstance& inst, double beta) {
  AveragingState s;
  s.beta = beta;
  s.theta = Eigen::MatrixXd::Zero(inst.n(), inst.p);
  s.omega = s.theta;
  s.z = s.theta;
  s.omega_sum = s.omega;
  s.t = 1;
  return s;
}

void averaging_step(const ProblemInstance& inst, AveragingState& s, Network& net) {
  const Graph& g = inst.graph;
  const int n = inst.n();
  const double kappa = 1.0 - 2.0 / (9.0 * n + 1.0);
  for (int i = 0; i < n; ++i) broadcast_row(net, i, s.theta.row(i).transpose());
  net.deliver();

  Eigen::MatrixXd theta(s.theta.rows(), s.theta.cols()), omega(theta.rows(), theta.cols()),
      z(theta.rows(), theta.cols());
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd th = s.theta.row(i).transpose();
    const Eigen::VectorXd w = s.omega.row(i).transpose();
    const Eigen::VectorXd grad = inst.locals[i]->gradient(w);
    Eigen::VectorXd mix = Eigen::VectorXd::Zero(th.size());
    for (int j : g.neighbors(i))
      mix += (to_vec(net.received(i, j)) - th) / static_cast<double>(std::max(g.degree(i), g.degree(j)));
    const Eigen::VectorXd om = th + 0.5 * mix - s.beta * grad;
    const Eigen::VectorXd zz = w - s.beta * grad;
    omega.row(i) = om.transpose();
    z.row(i) = zz.transpose();
    theta.row(i) = (om + kappa * (om - zz)).transpose();
  }
  s.theta = std::move(theta);
  s.omega = std::move(omega);
  s.z = std::move(z);
  s.omega_sum += s.omega;
  s.t += 1;
}

// -------------------------------------------------------------- subgradient

SubgradientState subgradient_init(const ProblemInstance& inst, double beta) {
  return {Eigen::MatrixXd::Zero(inst.n(), inst.p), beta};
}

void subgradient_step(const ProblemInstance& inst, SubgradientState& s, Network& net) {
  const Graph& g = inst.graph;
  const int n = inst.n();
  for (int i = 0; i < n; ++i) broadcast_row(net, i, s.theta.row(i).transpose());
  net.deliver();
  Eigen::MatrixXd next(s.theta.rows(), s.theta.cols());
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd th = s.theta.row(i).transpose();
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(th.size());
    double self = 1.0;
    for (int j : g.neighbors(i)) {
      const double w = 1.0 / (1.0 + std::max(g.degree(i), g.degree(j)));
      acc += w * to_vec(net.received(i, j));
      self -= w;
    }
    acc += self * th;
    next.row(i) = (acc - s.beta * inst.locals[i]->gradient(th)).transpose();
  }
  s.theta = std::move(next);
}

// --------------------------------------------------------------------- runs

namespace {

/// Runs `iters` steps from the initial state and returns the instantaneous iterate.
template <typename Fn>
RunTrace drive(BaselineKind kind, const ProblemInstance& inst, double beta, int iters, MessageUnit unit,
               AccessLog* log, bool record, Fn&& on_finish) {
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  Network net(inst.graph, unit, log);
  RunTrace trace;
  auto add_row = [&](int k, const Eigen::MatrixXd& theta) {
    if (!record) return;
    const double f = primal_objective(inst, theta);
    const double ce = consensus_error(inst.graph, theta);
    const Eigen::VectorXd y = stack(theta);
    const Eigen::VectorXd My = big_m_apply(inst.L, inst.p, y);
    const double gm = std::sqrt(std::max(0.0, My.dot(big_m_apply(inst.L, inst.p, My))));
    trace.rows.push_back({k, f, ce, gm, "none", net.messages(),
                          std::chrono::duration<double, std::milli>(clock::now() - t0).count()});
  };
  auto finite = [](const Eigen::MatrixXd& m) { return m.allFinite(); };

  switch (kind) {
    case BaselineKind::admm: {
      AdmmState s = admm_init(inst, beta);
      add_row(0, s.theta);
      for (int k = 1; k <= iters && finite(s.theta); ++k) {
        admm_step(inst, s, net);
        add_row(k, s.theta);
      }
      trace.final_theta = s.theta;
      on_finish(trace, s.theta);
      break;
    }
    case BaselineKind::averaging: {
      AveragingState s = averaging_init(inst, beta);
      add_row(0, s.omega);
      for (int k = 1; k <= iters && finite(s.theta); ++k) {
        averaging_step(inst, s, net);
        add_row(k, s.omega);
      }
      trace.final_theta = s.omega;
      on_finish(trace, s.running_average());
      break;
    }
    case BaselineKind::subgradient: {
      SubgradientState s = subgradient_init(inst, beta);
      add_row(0, s.theta);
      for (int k = 1; k <= iters && finite(s.theta); ++k) {
        subgradient_step(inst, s, net);
        add_row(k, s.theta);
      }
      trace.final_theta = s.theta;
      on_finish(trace, s.theta);
      break;
    }
  }
  return trace;
}

double score_of(const ProblemInstance& inst, const Eigen::MatrixXd& theta) {
  if (!theta.allFinite()) return std::numeric_limits<double>::infinity();
  return tolerance_score(inst, theta);
}

}  // namespace

RunTrace run_baseline(BaselineKind kind, const ProblemInstance& inst, const BaselineConfig& cfg,
                      BaselineRunInfo* info, AccessLog* log) {
  BaselineRunInfo local;
  BaselineRunInfo& out = info ? *info : local;
  out = BaselineRunInfo{};
  auto nothing = [](RunTrace&, const Eigen::MatrixXd&) {};

  out.beta = effective_beta(inst, cfg.scale, cfg.beta);
  if (!cfg.beta_grid.empty()) {
    double best = std::numeric_limits<double>::infinity();
    out.beta = effective_beta(inst, cfg.scale, cfg.beta_grid.front());
    for (double b : cfg.beta_grid) {
      const double eb = effective_beta(inst, cfg.scale, b);
      double score = std::numeric_limits<double>::infinity();
      try {
        RunTrace t = drive(kind, inst, eb, cfg.pilot_iters, cfg.message_unit, nullptr, false, nothing);
        score = score_of(inst, t.final_theta);
      } catch (const std::exception&) {
      }
      out.pilot_scores.emplace_back(eb, score);
      if (score < best) {
        best = score;
        out.beta = eb;
      }
    }
  }

  nlohmann::json average = nullptr;
  RunTrace trace = drive(kind, inst, out.beta, cfg.max_iters, cfg.message_unit, log, true,
                         [&](RunTrace&, const Eigen::MatrixXd& avg) {
                           if (kind == BaselineKind::averaging) {
                             average = nlohmann::json::array();
                             for (Eigen::Index i = 0; i < avg.rows(); ++i) {
                               std::vector<double> row(avg.cols());
                               for (Eigen::Index r = 0; r < avg.cols(); ++r) row[r] = avg(i, r);
                               average.push_back(row);
                             }
                           }
                         });
  trace.algorithm = to_string(kind);
  trace.config_hash = stable_hash(cfg.to_json().dump());
  trace.seed = inst.graph.seed();
  trace.message_unit = cfg.message_unit;
  nlohmann::json pilots = nlohmann::json::array();
  for (const auto& [b, sc] : out.pilot_scores)
    pilots.push_back({{"beta", b}, {"score", std::isfinite(sc) ? nlohmann::json(sc) : nlohmann::json("inf")}});
  trace.extra = {{"config", cfg.to_json()}, {"beta", out.beta}, {"pilot_scores", pilots}};
  if (!average.is_null()) trace.extra["running_average"] = average;
  return trace;
}

}  // namespace sddnewton
