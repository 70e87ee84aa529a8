#include "sddnewton/sdd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "sddnewton/errors.hpp"

namespace sddnewton {

namespace {

void project_mean_zero(Eigen::VectorXd& v) { v.array() -= v.mean(); }

// Removes the component along 1 measured in the D-weighted inner product;
// this is the invariant subspace the backward loop lives in.
void project_weighted_mean_zero(Eigen::VectorXd& x, const Eigen::VectorXd& D) {
  x.array() -= D.dot(x) / D.sum();
}

// Contraction of (I - Z0 M) on one eigenmode a of D^{-1/2} A0 D^{-1/2}:
// a^{2^d} * prod_{i<d} (1 + a^{2^i}) / 2.
double mode_contraction(double a, int depth) {
  double t = 1.0;
  double power = a;
  for (int i = 0; i < depth; ++i) {
    t *= 0.5 * (1.0 + power);
    power *= power;
  }
  return std::abs(t * power);
}

}  // namespace

Splitting split(const Eigen::MatrixXd& M, double tol) {
  const auto n = M.rows();
  if (n == 0 || M.cols() != n) throw DimensionError("split expects a non-empty square matrix");
  const double scale = std::max(1.0, M.cwiseAbs().maxCoeff());
  Splitting s{M.diagonal(), Eigen::MatrixXd::Zero(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    double offsum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      if (std::abs(M(i, j) - M(j, i)) > tol * scale)
        throw NotSddError(static_cast<int>(i), "matrix is not symmetric");
      if (M(i, j) > tol * scale)
        throw NotSddError(static_cast<int>(i), "positive off-diagonal entry");
      s.A0(i, j) = -M(i, j);
      offsum += s.A0(i, j);
    }
    if (M(i, i) < offsum - tol * scale)
      throw NotSddError(static_cast<int>(i), "row is not diagonally dominant");
  }
  return s;
}

int default_chain_depth(int n) {
  const int d = static_cast<int>(std::ceil(std::log2(std::max(n, 1)))) + 2;
  return std::clamp(d, 2, 30);
}

InverseChain build_chain(const Splitting& s, int depth) {
  if (depth < 1) throw ConfigError("chain depth must be >= 1");
  const auto n = s.D0.size();
  if (s.A0.rows() != n || s.A0.cols() != n) throw DimensionError("splitting blocks disagree in size");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(s.D0(i) > 0.0))
      throw SingularSplittingError("zero diagonal entry at row " + std::to_string(i));

  InverseChain c;
  c.depth = depth;
  c.D = s.D0;
  c.D_inv = s.D0.cwiseInverse();
  c.M = Eigen::MatrixXd(s.D0.asDiagonal()) - s.A0;
  c.A.reserve(depth + 1);
  c.A.push_back(s.A0);
  for (int i = 0; i < depth; ++i) {
    const Eigen::MatrixXd& Ai = c.A.back();
    c.A.push_back(Ai * c.D_inv.asDiagonal() * Ai);
  }

  const double scale = c.D.maxCoeff();
  c.laplacian_kernel = (c.M.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-12 * scale);

  // Z0 M is similar to a polynomial in N = D^{-1/2} A0 D^{-1/2}, so the
  // Richardson contraction is a scalar function of N's spectrum.
  const Eigen::VectorXd d_isqrt = c.D.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd N = d_isqrt.asDiagonal() * s.A0 * d_isqrt.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(N, Eigen::EigenvaluesOnly);
  Eigen::VectorXd ev = es.eigenvalues();  // ascending
  const Eigen::Index last = c.laplacian_kernel ? ev.size() - 1 : ev.size();
  double rho = 0.0;
  for (Eigen::Index k = 0; k < last; ++k) rho = std::max(rho, mode_contraction(std::clamp(ev(k), -1.0, 1.0), depth));
  c.contraction = rho;
  return c;
}

void inject_fault_for_testing(InverseChain& chain) { chain.output_scale = 3.0; }

Eigen::VectorXd crude_solve(const InverseChain& chain, const Eigen::VectorXd& b0,
                            SolveCounters* counters) {
  const int n = chain.size();
  if (b0.size() != n)
    throw DimensionError("crude_solve: rhs has length " + std::to_string(b0.size()) +
                         ", chain has size " + std::to_string(n));
  const int d = chain.depth;
  std::vector<Eigen::VectorXd> b(d + 1);
  b[0] = b0;
  if (chain.laplacian_kernel) project_mean_zero(b[0]);
  for (int i = 1; i <= d; ++i) {
    b[i] = b[i - 1] + chain.A[i - 1] * chain.D_inv.cwiseProduct(b[i - 1]);
    if (chain.laplacian_kernel) project_mean_zero(b[i]);
  }
  Eigen::VectorXd x = chain.D_inv.cwiseProduct(b[d]);
  for (int i = d - 1; i >= 0; --i) {
    Eigen::VectorXd next = chain.D_inv.cwiseProduct(b[i]) + x + chain.D_inv.cwiseProduct(chain.A[i] * x);
    x = 0.5 * next;
    if (chain.laplacian_kernel) project_weighted_mean_zero(x, chain.D);
  }
  if (chain.laplacian_kernel) project_mean_zero(x);
  if (counters) {
    counters->crude_applications += 1;
    counters->level_applies += 2LL * d;
  }
  return chain.output_scale * x;
}

double m_norm(const Eigen::MatrixXd& M, const Eigen::VectorXd& u) {
  return std::sqrt(std::max(0.0, u.dot(M * u)));
}

SolveReport exact_solve(const InverseChain& chain, const Eigen::VectorXd& b0, double eps, int max_iters) {
  ExactSolveOptions opts;
  opts.eps = eps;
  opts.max_iters = max_iters;
  return exact_solve(chain, b0, opts);
}

SolveReport exact_solve(const InverseChain& chain, const Eigen::VectorXd& b0,
                        const ExactSolveOptions& options) {
  const double eps = options.eps;
  if (!(eps > 0.0)) throw ConfigError("exact_solve: eps must be > 0");
  const int n = chain.size();
  if (b0.size() != n) throw DimensionError("exact_solve: rhs length mismatch");

  int cap = options.max_iters;
  if (cap < 0) cap = std::max(1, static_cast<int>(std::ceil(options.iter_cap_constant * std::log(1.0 / eps))));

  SolveReport rep;
  rep.chain_depth = chain.depth;
  Eigen::VectorXd b = b0;
  if (chain.laplacian_kernel) project_mean_zero(b);
  if (b.lpNorm<Eigen::Infinity>() == 0.0) {
    rep.solution = Eigen::VectorXd::Zero(n);
    if (options.record_iterates) rep.iterates.push_back(rep.solution);
    return rep;
  }

  Eigen::VectorXd y = crude_solve(chain, b, &rep.counters);
  if (options.record_iterates) rep.iterates.push_back(y);
  const double rho = chain.contraction;
  rep.error_bound = rho;

  if (eps < rho) {
    Eigen::VectorXd My = chain.M * y;
    rep.counters.m_applies += 1;
    const double amplification = rho / (1.0 - rho);
    rep.converged = false;
    for (int k = 1; k <= cap; ++k) {
      Eigen::VectorXd r = b - My;
      Eigen::VectorXd delta = crude_solve(chain, r, &rep.counters);
      y += delta;
      if (chain.laplacian_kernel) project_mean_zero(y);
      Eigen::VectorXd Mdelta = chain.M * delta;
      rep.counters.m_applies += 1;
      My += Mdelta;
      rep.richardson_iters = k;
      if (options.record_iterates) rep.iterates.push_back(y);

      const double step = std::sqrt(std::max(0.0, delta.dot(Mdelta)));
      const double ynorm = std::sqrt(std::max(0.0, y.dot(My)));
      const double err = amplification * step;
      rep.error_bound = ynorm > err ? err / (ynorm - err) : std::numeric_limits<double>::infinity();
      if (!std::isfinite(ynorm)) break;
      if (err * (1.0 + eps) <= eps * ynorm) {
        rep.converged = true;
        break;
      }
    }
  }
  rep.solution = std::move(y);
  rep.residual_mnorm = (chain.M * rep.solution - b).norm();
  return rep;
}

nlohmann::json SolveReport::to_json() const {
  return {{"residual_mnorm", residual_mnorm},
          {"error_bound", error_bound},
          {"richardson_iters", richardson_iters},
          {"chain_depth", chain_depth},
          {"converged", converged},
          {"crude_applications", counters.crude_applications},
          {"level_applies", counters.level_applies},
          {"m_applies", counters.m_applies}};
}

}  // namespace sddnewton
