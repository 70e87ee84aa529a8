#include <doctest.h>

#include <set>
#include <sstream>

#include "oracles.hpp"
#include "sddnewton/baselines.hpp"
#include "sddnewton/errors.hpp"
#include "sddnewton/problems.hpp"
#include "sddnewton/sim.hpp"

using namespace sddnewton;

namespace {

Eigen::MatrixXd gradients(const ProblemInstance& inst, const Eigen::MatrixXd& theta) {
  Eigen::MatrixXd G(theta.rows(), theta.cols());
  for (int i = 0; i < inst.n(); ++i) G.row(i) = inst.locals[i]->gradient(theta.row(i).transpose()).transpose();
  return G;
}

}  // namespace

TEST_CASE("sim: consensus error") {
  Graph g(2, {{0, 1}});
  CHECK(consensus_error(g, Eigen::MatrixXd::Constant(2, 3, 1.5)) == 0.0);
  Eigen::MatrixXd th = Eigen::MatrixXd::Zero(2, 3);
  th(0, 0) = 1.0;
  CHECK(consensus_error(g, th) == 1.0);

  std::mt19937_64 rng(5);
  for (int t = 0; t < 5; ++t) {
    Graph h = oracle::random_graph(rng, 3, 15);
    const int p = 1 + t;
    const Eigen::VectorXd y = oracle::randn(rng, h.num_nodes() * p);
    const double dense = oracle::mnorm(oracle::kron_identity(p, laplacian(h)), y);
    CHECK(consensus_error(h, unstack(y, h.num_nodes(), p)) == doctest::Approx(dense).epsilon(1e-12));
    CHECK(stack(unstack(y, h.num_nodes(), p)) == y);
  }
  CHECK_THROWS_AS(consensus_error(g, Eigen::MatrixXd::Zero(3, 1)), DimensionError);
}

TEST_CASE("sim: network delivery and accounting") {
  Graph g = path_graph(3);
  Network net(g, MessageUnit::vector);
  const double payload[2] = {1.0, 2.0};
  net.send(0, 1, payload);
  CHECK_THROWS_AS(net.send(0, 2, payload), std::logic_error);
  net.deliver();
  CHECK(net.received(1, 0)[1] == 2.0);
  CHECK(net.messages() == 1);
  CHECK(net.rounds() == 1);

  Network scalar(g, MessageUnit::scalar);
  scalar.broadcast(1, payload);
  scalar.deliver();
  CHECK(scalar.messages() == 4);
  CHECK(to_string(MessageUnit::scalar) == "scalar");
  CHECK(message_unit_from_string("vector") == MessageUnit::vector);
  CHECK_THROWS_AS(message_unit_from_string("bytes"), ConfigError);
}

TEST_CASE("sim: one averaging step costs one payload per directed edge") {
  Graph g = generate_random_graph(100, 250, 1);
  ProblemInstance inst = random_quadratic_instance(g, 2, 1);
  Network net(g, MessageUnit::vector);
  AveragingState s = averaging_init(inst, 0.01);
  averaging_step(inst, s, net);
  CHECK(net.messages() == 500);

  Network idle(g, MessageUnit::vector);
  CHECK(idle.messages() == 0);
}

TEST_CASE("sim: averaging reads exactly closed neighborhoods") {
  Graph g = path_graph(4);
  ProblemInstance inst = random_quadratic_instance(g, 1, 3);
  AccessLog log;
  Network net(g, MessageUnit::vector, &log);
  AveragingState s = averaging_init(inst, 0.1);
  averaging_step(inst, s, net);
  CHECK(locality_audit(g, log).passed);
  std::set<std::pair<int, int>> seen(log.reads().begin(), log.reads().end());
  for (auto [a, b] : g.edges()) {
    CHECK(seen.count({a, b}) == 1);
    CHECK(seen.count({b, a}) == 1);
  }

  Eigen::MatrixXd op = laplacian(g);
  CHECK(operator_locality_audit(g, op).passed);
  op(0, 3) = 1.0;
  CHECK_FALSE(operator_locality_audit(g, op).passed);
}

TEST_CASE("sim: simulated baselines equal their matrix forms") {
  Graph g = generate_random_graph(7, 10, 2);
  ProblemInstance inst = random_quadratic_instance(g, 2, 6);
  const int n = 7;

  SUBCASE("subgradient") {
    Eigen::MatrixXd W = Eigen::MatrixXd::Identity(n, n);
    for (auto [a, b] : g.edges()) {
      const double w = 1.0 / (1.0 + std::max(g.degree(a), g.degree(b)));
      W(a, b) = W(b, a) = w;
      W(a, a) -= w;
      W(b, b) -= w;
    }
    const double beta = 0.02;
    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(n, 2);
    SubgradientState s = subgradient_init(inst, beta);
    Network net(g, MessageUnit::vector);
    for (int k = 0; k < 30; ++k) {
      theta = W * theta - beta * gradients(inst, theta);
      subgradient_step(inst, s, net);
      CHECK((s.theta - theta).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  SUBCASE("averaging") {
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (auto [a, b] : g.edges()) {
      const double w = 1.0 / std::max(g.degree(a), g.degree(b));
      A(a, b) = A(b, a) = w;
      A(a, a) -= w;
      A(b, b) -= w;
    }
    const double beta = 0.02;
    const double kappa = 1.0 - 2.0 / (9.0 * n + 1.0);
    Eigen::MatrixXd theta = Eigen::MatrixXd::Zero(n, 2), omega = theta;
    AveragingState s = averaging_init(inst, beta);
    Network net(g, MessageUnit::vector);
    for (int k = 0; k < 30; ++k) {
      const Eigen::MatrixXd G = gradients(inst, omega);
      const Eigen::MatrixXd om = theta + 0.5 * A * theta - beta * G;
      const Eigen::MatrixXd z = omega - beta * G;
      theta = om + kappa * (om - z);
      omega = om;
      averaging_step(inst, s, net);
      CHECK((s.omega - omega).cwiseAbs().maxCoeff() <= 1e-12);
      CHECK((s.theta - theta).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("sim: runs are deterministic apart from wall time") {
  ProblemInstance inst = random_quadratic_instance(generate_random_graph(6, 9, 3), 2, 2);
  attach_reference(inst);
  BaselineConfig cfg = BaselineConfig::defaults_for(BaselineKind::admm);
  cfg.max_iters = 40;
  cfg.pilot_iters = 10;
  const RunTrace a = run_baseline(BaselineKind::admm, inst, cfg);
  const RunTrace b = run_baseline(BaselineKind::admm, inst, cfg);
  auto strip = [](const std::string& csv) {
    std::string out;
    std::istringstream in(csv);
    for (std::string line; std::getline(in, line);) out += line.substr(0, line.rfind(',')) + "\n";
    return out;
  };
  CHECK(strip(a.to_csv()) == strip(b.to_csv()));
  CHECK(a.to_csv().rfind(RunTrace::kCsvHeader, 0) == 0);
  CHECK(a.rows.front().messages_cumulative == 0);
}

TEST_CASE("sim: message charging model") {
  Graph g = generate_random_graph(6, 8, 1);
  StepCost c;
  c.exchanges.push_back({2, 3});
  c.reductions.push_back({4, 1});
  CHECK(charge_messages(g, c, MessageUnit::vector) == 2 * 16 + 2 * 5);
  CHECK(charge_messages(g, c, MessageUnit::scalar) == 2 * 16 * 3 + 5 * 5);
  CHECK(charge_messages(g, StepCost{}, MessageUnit::vector) == 0);
  CHECK(stable_hash("abc") == stable_hash("abc"));
  CHECK(stable_hash("abc").size() == 16);
  CHECK(stable_hash("abc") != stable_hash("abd"));
}
