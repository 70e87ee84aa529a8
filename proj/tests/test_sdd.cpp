#include <doctest.h>

#include "oracles.hpp"
#include "sddnewton/errors.hpp"
#include "sddnewton/sdd.hpp"

using namespace sddnewton;

namespace {

Eigen::MatrixXd mat(int r, int c, std::initializer_list<double> v) {
  Eigen::MatrixXd m(r, c);
  auto it = v.begin();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = *it++;
  return m;
}

}  // namespace

TEST_CASE("sdd: split examples") {
  auto s = split(mat(2, 2, {2, -1, -1, 2}));
  CHECK(s.D0 == Eigen::Vector2d(2, 2));
  CHECK(s.A0 == mat(2, 2, {0, 1, 1, 0}));
  s = split(Eigen::MatrixXd::Identity(3, 3));
  CHECK(s.D0 == Eigen::Vector3d(1, 1, 1));
  CHECK(s.A0.isZero());
  s = split(mat(2, 2, {1, -1, -1, 1}));
  CHECK(s.D0 == Eigen::Vector2d(1, 1));
  CHECK(s.A0 == mat(2, 2, {0, 1, 1, 0}));
}

TEST_CASE("sdd: split rejects non-SDD input with the row index") {
  try {
    split(mat(3, 3, {2, -1, 0, -1, 1, -1, 0, -1, 2}));
    FAIL("expected NotSddError");
  } catch (const NotSddError& e) {
    CHECK(e.row() == 1);
  }
  CHECK_THROWS_AS(split(mat(2, 2, {2, 1, 1, 2})), NotSddError);
  CHECK_THROWS_AS(split(mat(2, 2, {2, -1, -0.5, 2})), NotSddError);
}

TEST_CASE("sdd: chain levels") {
  const Splitting s = split(mat(2, 2, {1, -1, -1, 1}));
  const InverseChain c = build_chain(s, 2);
  CHECK(c.A[1] == Eigen::MatrixXd::Identity(2, 2));
  // D0 (D0^{-1} A0)^4 for the swap matrix is the identity.
  CHECK(c.A[2] == Eigen::MatrixXd::Identity(2, 2));

  const InverseChain diag = build_chain(split(mat(2, 2, {2, 0, 0, 4})), 3);
  for (int i = 1; i <= 3; ++i) CHECK(diag.A[i].isZero());

  Eigen::MatrixXd P3 = mat(3, 3, {1, -1, 0, -1, 2, -1, 0, -1, 1});
  const Splitting sp = split(P3);
  const InverseChain cp = build_chain(sp, 3);
  const Eigen::MatrixXd DinvA = sp.D0.cwiseInverse().asDiagonal() * sp.A0;
  Eigen::MatrixXd power = DinvA;
  for (int i = 1; i <= 3; ++i) {
    power = power * power;
    const Eigen::MatrixXd expected = Eigen::MatrixXd(sp.D0.asDiagonal()) * power;
    CHECK((cp.A[i] - expected).norm() <= 1e-10 * expected.norm());
    CHECK((cp.A[i] - cp.A[i].transpose()).norm() <= 1e-12);
  }

  Splitting zero_diag{Eigen::Vector2d(0, 1), Eigen::MatrixXd::Zero(2, 2)};
  CHECK_THROWS_AS(build_chain(zero_diag, 2), SingularSplittingError);
  CHECK_THROWS_AS(build_chain(s, 0), ConfigError);
}

TEST_CASE("sdd: default depth") {
  CHECK(default_chain_depth(2) == 3);
  CHECK(default_chain_depth(20) == 7);
  CHECK(default_chain_depth(1) == 2);
  CHECK(default_chain_depth(1 << 29) == 30);
}

TEST_CASE("sdd: crude solve") {
  const InverseChain diag = build_chain(split(mat(2, 2, {2, 0, 0, 4})), 4);
  CHECK((crude_solve(diag, Eigen::Vector2d(2, 4)) - Eigen::Vector2d(1, 1)).norm() <= 1e-15);

  const Eigen::MatrixXd M = mat(2, 2, {2, -1, -1, 2});
  const InverseChain c = build_chain(split(M), 6);
  const Eigen::Vector2d xstar(2.0 / 3, 1.0 / 3);
  const Eigen::VectorXd x = crude_solve(c, Eigen::Vector2d(1, 0));
  CHECK(oracle::mnorm(M, x - xstar) <= (c.contraction + 1e-12) * oracle::mnorm(M, xstar));
  CHECK(crude_solve(c, Eigen::Vector2d::Zero()).isZero());
  CHECK_THROWS_AS(crude_solve(c, Eigen::Vector3d(1, 2, 3)), DimensionError);
}

TEST_CASE("sdd: exact solve examples") {
  const Eigen::MatrixXd M = mat(2, 2, {2, -1, -1, 2});
  const InverseChain c = build_chain(split(M), 2);
  const Eigen::Vector2d xstar(2.0 / 3, 1.0 / 3);
  SolveReport r = exact_solve(c, Eigen::Vector2d(1, 0), 1e-6);
  CHECK(r.converged);
  CHECK(oracle::mnorm(M, r.solution - xstar) <= 1e-6 * oracle::mnorm(M, xstar));

  // Loose eps at or above the crude accuracy returns the crude answer unchanged.
  r = exact_solve(c, Eigen::Vector2d(1, 0), std::max(c.contraction, 0.5));
  CHECK(r.richardson_iters == 0);
  CHECK((r.solution - crude_solve(c, Eigen::Vector2d(1, 0))).norm() == 0.0);

  const Eigen::MatrixXd P3 = mat(3, 3, {1, -1, 0, -1, 2, -1, 0, -1, 1});
  const InverseChain cp = build_chain(split(P3), 2);
  const Eigen::Vector3d b(1, 0, -1);
  const Eigen::VectorXd x3 = oracle::pinv(P3) * b;
  r = exact_solve(cp, b, 1e-8);
  CHECK(oracle::mnorm(P3, r.solution - x3) <= 1e-8 * oracle::mnorm(P3, x3));
  CHECK_THROWS_AS(exact_solve(cp, b, 0.0), ConfigError);
}

TEST_CASE("sdd: certification, monotone refinement and kernel safety on random Laplacians") {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 25; ++t) {
    Graph g = oracle::random_graph(rng, 3, 40);
    const Eigen::MatrixXd L = laplacian(g);
    // Shallow chains force Richardson to work.
    const InverseChain c = build_chain(split(L), 2 + t % 3);
    Eigen::VectorXd b = oracle::randn(rng, g.num_nodes());
    b.array() -= b.mean();
    const Eigen::VectorXd xstar = oracle::pinv(L) * b;
    for (double eps : {0.1, 0.01, 1e-4}) {
      ExactSolveOptions opt;
      opt.eps = eps;
      opt.record_iterates = true;
      const SolveReport r = exact_solve(c, b, opt);
      CHECK(oracle::mnorm(L, r.solution - xstar) <= eps * oracle::mnorm(L, xstar));
      CHECK(std::abs(r.solution.mean()) <= 1e-10 * (1 + r.solution.norm()));
      double prev = std::numeric_limits<double>::infinity();
      for (const auto& y : r.iterates) {
        const double e = oracle::mnorm(L, y - xstar);
        CHECK(e <= prev * (1 + 1e-9) + 1e-14);
        prev = e;
      }
    }
  }
}

TEST_CASE("sdd: splitting identity reproduces the inverse") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 20; ++t) {
    const int n = 2 + t % 9;
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        if (u(rng) < 0.5) M(i, j) = M(j, i) = -u(rng);
    for (int i = 0; i < n; ++i) M(i, i) = -M.row(i).sum() + 0.1 + u(rng);
    const Splitting s = split(M);
    const Eigen::MatrixXd D = s.D0.asDiagonal();
    const Eigen::MatrixXd Di = s.D0.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd rhs = 0.5 * (Di + (I + Di * s.A0) * (D - s.A0 * Di * s.A0).inverse() * (I + s.A0 * Di));
    CHECK((rhs - M.inverse()).norm() <= 1e-10 * M.inverse().norm());
  }
}

TEST_CASE("sdd: fault injection breaks certification") {
  Graph g = generate_random_graph(15, 25, 4);
  const Eigen::MatrixXd L = laplacian(g);
  InverseChain c = build_chain(split(L), 2);
  inject_fault_for_testing(c);
  Eigen::VectorXd b = Eigen::VectorXd::LinSpaced(15, -1, 1);
  b.array() -= b.mean();
  const Eigen::VectorXd xstar = oracle::pinv(L) * b;
  const SolveReport r = exact_solve(c, b, 1e-4);
  CHECK(oracle::mnorm(L, r.solution - xstar) > 1e-4 * oracle::mnorm(L, xstar));
}

TEST_CASE("sdd: solve report json") {
  const InverseChain c = build_chain(split(mat(2, 2, {2, -1, -1, 2})), 3);
  const auto j = exact_solve(c, Eigen::Vector2d(1, 0), 1e-3).to_json();
  CHECK(j.contains("richardson_iters"));
  CHECK(j["chain_depth"] == 3);
}
