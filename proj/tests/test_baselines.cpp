#include <doctest.h>

#include "oracles.hpp"
#include "sddnewton/baselines.hpp"
#include "sddnewton/errors.hpp"
#include "sddnewton/problems.hpp"

using namespace sddnewton;

namespace {

/// f_i(theta) = (theta - t_i)^2 on a single edge, p = 1.
ProblemInstance scalar_pair(double t0, double t1) {
  auto q = [](double t) {
    return std::make_shared<QuadraticLocal>(Eigen::MatrixXd::Identity(1, 1), Eigen::VectorXd::Constant(1, t), t * t);
  };
  return make_instance(Graph(2, {{0, 1}}), {q(t0), q(t1)}, 2.0, 2.0, 0.0, "quadratic");
}

double max_edge_gap(const Graph& g, const Eigen::MatrixXd& theta) {
  double m = 0.0;
  for (auto [a, b] : g.edges()) m = std::max(m, (theta.row(a) - theta.row(b)).norm());
  return m;
}

}  // namespace

TEST_CASE("baselines: ADMM on identical locals sits at the shared minimizer") {
  ProblemInstance inst = scalar_pair(0.7, 0.7);
  for (double beta : {0.3, 1.0, 4.0}) {
    AdmmState s = admm_init(inst, beta);
    s.theta.setConstant(0.7);
    for (auto& v : s.view)
      for (auto& x : v) x.setConstant(0.7);
    Network net(inst.graph, MessageUnit::vector);
    for (int k = 0; k < 5; ++k) admm_step(inst, s, net);
    CHECK((s.theta.array() - 0.7).abs().maxCoeff() <= 1e-14);
    CHECK(s.lambda.cwiseAbs().maxCoeff() <= 1e-14);
  }
}

TEST_CASE("baselines: ADMM on a single edge converges to the symmetric optimum") {
  ProblemInstance inst = scalar_pair(1.0, -1.0);
  AdmmState s = admm_init(inst, 1.0);
  Network net(inst.graph, MessageUnit::vector);
  int sweeps = 0;
  while (sweeps < 500 && (s.theta.cwiseAbs().maxCoeff() > 1e-6 || sweeps == 0)) {
    admm_step(inst, s, net);
    ++sweeps;
  }
  CHECK(s.theta.cwiseAbs().maxCoeff() <= 1e-6);
  CHECK(sweeps <= 500);
  CHECK(net.messages() == 2LL * sweeps);
}

TEST_CASE("baselines: ADMM with zero penalty decouples the nodes") {
  ProblemInstance inst = scalar_pair(1.0, -1.0);
  AdmmState s = admm_init(inst, 0.0);
  Network net(inst.graph, MessageUnit::vector);
  for (int k = 0; k < 3; ++k) admm_step(inst, s, net);
  CHECK(s.theta(0, 0) == doctest::Approx(1.0));
  CHECK(s.theta(1, 0) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(admm_init(inst, -1.0), ConfigError);
}

TEST_CASE("baselines: ADMM drives the edge gap down for several penalties") {
  ProblemInstance inst = scalar_pair(1.0, -1.0);
  for (double beta : {0.5, 1.0, 2.0}) {
    AdmmState s = admm_init(inst, beta);
    Network net(inst.graph, MessageUnit::vector);
    int k = 0;
    for (; k < 1000 && (k == 0 || max_edge_gap(inst.graph, s.theta) >= 1e-4); ++k) admm_step(inst, s, net);
    CHECK(max_edge_gap(inst.graph, s.theta) < 1e-4);
  }
}

TEST_CASE("baselines: ADMM handles logistic locals through the shifted minimizer") {
  Graph g = path_graph(3);
  ProblemInstance inst = build_logistic(g, generate_synthetic_logistic(3, 2, 60, 3), 0.05);
  attach_reference(inst);
  AdmmState s = admm_init(inst, inst.Gamma * 0.3);
  Network net(g, MessageUnit::vector);
  for (int k = 0; k < 300; ++k) admm_step(inst, s, net);
  CHECK(relative_objective_gap(inst, s.theta) <= 1e-3);
}

TEST_CASE("baselines: averaging invariants") {
  SUBCASE("equal states with zero gradients stay put") {
    ProblemInstance inst = scalar_pair(0.0, 0.0);
    AveragingState s = averaging_init(inst, 0.1);
    Network net(inst.graph, MessageUnit::vector);
    for (int k = 0; k < 10; ++k) averaging_step(inst, s, net);
    CHECK(s.theta.isZero());
    CHECK(s.omega.isZero());
  }
  SUBCASE("squared norm objective contracts to the origin") {
    Graph g = path_graph(4);
    std::vector<LocalPtr> locals;
    for (int i = 0; i < 4; ++i)
      locals.push_back(std::make_shared<QuadraticLocal>(Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), 0.0));
    ProblemInstance inst = make_instance(g, locals, 2.0, 2.0, 0.0, "quadratic");
    AveragingState s = averaging_init(inst, 0.05);
    s.theta.setRandom();
    s.omega = s.theta;
    Network net(g, MessageUnit::vector);
    double prev = s.omega.norm();
    for (int k = 0; k < 400; ++k) averaging_step(inst, s, net);
    CHECK(s.omega.norm() <= 1e-3 * prev);
  }
  SUBCASE("running average approaches the centralized optimum") {
    Graph g(2, {{0, 1}});
    ProblemInstance inst = build_regression(g, generate_synthetic_regression(2, 2, 40, 1.0, 5), 0.05);
    attach_reference(inst);
    const double beta = 0.1 / inst.Gamma;
    AveragingState s = averaging_init(inst, beta);
    Network net(g, MessageUnit::vector);
    std::vector<double> errs;
    for (int T : {200, 800, 3200}) {
      while (s.t < T) averaging_step(inst, s, net);
      const Eigen::MatrixXd avg = s.running_average();
      double e = 0.0;
      for (int i = 0; i < 2; ++i) e = std::max(e, (avg.row(i).transpose() - inst.reference->theta).norm());
      errs.push_back(e);
    }
    CHECK(errs[1] < errs[0]);
    CHECK(errs[2] < errs[1]);
  }
}

TEST_CASE("baselines: subgradient behavior") {
  SUBCASE("zero gradients and equal states are invariant") {
    ProblemInstance inst = scalar_pair(0.0, 0.0);
    SubgradientState s = subgradient_init(inst, 0.3);
    Network net(inst.graph, MessageUnit::vector);
    for (int k = 0; k < 5; ++k) subgradient_step(inst, s, net);
    CHECK(s.theta.isZero());
  }
  SUBCASE("constant gradients drift at rate beta") {
    // f_i(theta) = theta, so every gradient is 1.
    struct Linear : LocalObjective {
      int dim() const override { return 1; }
      double value(const Eigen::VectorXd& t) const override { return t(0); }
      Eigen::VectorXd gradient(const Eigen::VectorXd&) const override { return Eigen::VectorXd::Ones(1); }
      Eigen::MatrixXd hessian(const Eigen::VectorXd&) const override { return Eigen::MatrixXd::Identity(1, 1); }
      Eigen::VectorXd recover_primal(const Eigen::VectorXd& z) const override { return z; }
      nlohmann::json describe() const override { return {{"type", "linear"}}; }
    };
    Graph g = complete_graph(3);
    std::vector<LocalPtr> locals(3, std::make_shared<Linear>());
    ProblemInstance inst = make_instance(g, locals, 1.0, 1.0, 0.0, "custom");
    SubgradientState s = subgradient_init(inst, 0.25);
    Network net(g, MessageUnit::vector);
    for (int k = 1; k <= 4; ++k) {
      subgradient_step(inst, s, net);
      CHECK((s.theta.array() + 0.25 * k).abs().maxCoeff() <= 1e-14);
    }
  }
  SUBCASE("objective decreases initially for small steps") {
    Graph g = generate_random_graph(6, 9, 3);
    ProblemInstance inst = build_regression(g, generate_synthetic_regression(6, 3, 60, 1.0, 2), 0.05);
    SubgradientState s = subgradient_init(inst, 0.5 / inst.Gamma);
    Network net(g, MessageUnit::vector);
    double prev = primal_objective(inst, s.theta);
    for (int k = 0; k < 5; ++k) {
      subgradient_step(inst, s, net);
      const double f = primal_objective(inst, s.theta);
      CHECK(f < prev);
      prev = f;
    }
  }
}

TEST_CASE("baselines: runs and step selection") {
  Graph g = generate_random_graph(8, 12, 5);
  ProblemInstance inst = build_regression(g, generate_synthetic_regression(8, 3, 80, 1.0, 7), 0.05);
  attach_reference(inst);
  for (BaselineKind k : {BaselineKind::admm, BaselineKind::averaging, BaselineKind::subgradient}) {
    BaselineConfig cfg = BaselineConfig::defaults_for(k);
    // Constant steps leave a bias, so pilots look at the whole horizon.
    cfg.max_iters = 3000;
    cfg.pilot_iters = 3000;
    BaselineRunInfo info;
    const RunTrace tr = run_baseline(k, inst, cfg, &info);
    CHECK(tr.rows.size() == 3001);
    CHECK(info.pilot_scores.size() == cfg.beta_grid.size());
    CHECK(info.beta > 0);
    CHECK(relative_objective_gap(inst, tr.final_theta) <= 1e-3);
    CHECK(tr.rows[1].messages_cumulative == 2 * g.num_edges());
  }
  CHECK(effective_beta(inst, StepScale::inverse_Gamma, 2.0) == doctest::Approx(2.0 / inst.Gamma));
  CHECK(effective_beta(inst, StepScale::Gamma, 2.0) == doctest::Approx(2.0 * inst.Gamma));
  CHECK(baseline_kind_from_string("admm") == BaselineKind::admm);
  CHECK_THROWS_AS(baseline_kind_from_string("adam"), ConfigError);
  CHECK_THROWS_AS(BaselineConfig::from_json({{"beta", -1.0}}), ConfigError);
  const BaselineConfig back = BaselineConfig::from_json(BaselineConfig::defaults_for(BaselineKind::admm).to_json());
  CHECK(back.scale == StepScale::Gamma);
}
