#include "sddnewton/problems.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "sddnewton/errors.hpp"

namespace sddnewton {

namespace fs = std::filesystem;

double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double sigmoid(double t) {
  if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

double smooth_abs(double x, double alpha) {
  if (!(alpha > 0.0)) throw ConfigError("smoothing parameter alpha must be > 0");
  return (softplus(-alpha * x) + softplus(alpha * x)) / alpha;
}

// ---------------------------------------------------------------- quadratic

QuadraticLocal::QuadraticLocal(Eigen::MatrixXd P, Eigen::VectorXd c, double u)
    : P_(std::move(P)), c_(std::move(c)), u_(u) {
  if (P_.rows() != P_.cols() || P_.rows() != c_.size()) throw DimensionError("QuadraticLocal: P and c disagree");
  llt_.compute(P_);
  if (llt_.info() != Eigen::Success) throw ConfigError("QuadraticLocal: P is not positive definite");
}

double QuadraticLocal::value(const Eigen::VectorXd& theta) const {
  return theta.dot(P_ * theta) - 2.0 * c_.dot(theta) + u_;
}

Eigen::VectorXd QuadraticLocal::gradient(const Eigen::VectorXd& theta) const { return 2.0 * (P_ * theta - c_); }

Eigen::MatrixXd QuadraticLocal::hessian(const Eigen::VectorXd&) const { return 2.0 * P_; }

Eigen::VectorXd QuadraticLocal::recover_primal(const Eigen::VectorXd& z) const {
  if (z.size() != c_.size()) throw DimensionError("recover_primal: z has wrong length");
  return llt_.solve(c_ - 0.5 * z);
}

Eigen::VectorXd QuadraticLocal::minimize_shifted(const Eigen::VectorXd& lin, double quad) const {
  if (quad == 0.0) return recover_primal(lin);
  Eigen::MatrixXd H = 2.0 * P_;
  H.diagonal().array() += quad;
  return H.llt().solve(2.0 * c_ - lin);
}

nlohmann::json QuadraticLocal::describe() const { return {{"type", "quadratic"}, {"p", dim()}}; }

// ----------------------------------------------------------------- logistic

LogisticLocal::LogisticLocal(Eigen::MatrixXd B, Eigen::VectorXd a, double mu, Regularizer reg, double alpha,
                             InnerNewtonOptions inner)
    : B_(std::move(B)), a_(std::move(a)), reg_(reg), alpha_(alpha), inner_(inner) {
  if (B_.cols() != a_.size()) throw DimensionError("LogisticLocal: one label per feature column expected");
  if (a_.size() < 1) throw ConfigError("LogisticLocal: node needs at least one sample");
  for (Eigen::Index j = 0; j < a_.size(); ++j)
    if (a_(j) != 0.0 && a_(j) != 1.0) throw ConfigError("logistic labels must be 0 or 1");
  if (!(mu > 0.0)) throw ConfigError("logistic regularizer mu must be > 0");
  if (reg_ == Regularizer::SmoothedL1 && !(alpha_ > 0.0)) throw ConfigError("smoothing alpha must be > 0");
  mu_m_ = mu * static_cast<double>(a_.size());
}

double LogisticLocal::value(const Eigen::VectorXd& theta) const {
  const Eigen::VectorXd s = B_.transpose() * theta;
  double f = 0.0;
  for (Eigen::Index j = 0; j < s.size(); ++j) f += softplus(s(j)) - a_(j) * s(j);
  if (reg_ == Regularizer::L2) {
    f += mu_m_ * theta.squaredNorm();
  } else {
    for (Eigen::Index r = 0; r < theta.size(); ++r) f += mu_m_ * smooth_abs(theta(r), alpha_);
  }
  return f;
}

Eigen::VectorXd LogisticLocal::gradient(const Eigen::VectorXd& theta) const {
  const Eigen::VectorXd s = B_.transpose() * theta;
  Eigen::VectorXd resid(s.size());
  for (Eigen::Index j = 0; j < s.size(); ++j) resid(j) = sigmoid(s(j)) - a_(j);
  Eigen::VectorXd g = B_ * resid;
  if (reg_ == Regularizer::L2) {
    g += 2.0 * mu_m_ * theta;
  } else {
    // (e^{ay} - 1) / (1 + e^{ay}) = tanh(ay / 2)
    for (Eigen::Index r = 0; r < theta.size(); ++r) g(r) += mu_m_ * std::tanh(0.5 * alpha_ * theta(r));
  }
  return g;
}

Eigen::MatrixXd LogisticLocal::hessian(const Eigen::VectorXd& theta) const {
  const Eigen::VectorXd s = B_.transpose() * theta;
  Eigen::VectorXd w(s.size());
  for (Eigen::Index j = 0; j < s.size(); ++j) {
    const double sg = sigmoid(s(j));
    w(j) = sg * (1.0 - sg);
  }
  Eigen::MatrixXd H = B_ * w.asDiagonal() * B_.transpose();
  if (reg_ == Regularizer::L2) {
    H.diagonal().array() += 2.0 * mu_m_;
  } else {
    // e^{ay} / (1 + e^{ay})^2 = sigma(ay) (1 - sigma(ay))
    for (Eigen::Index r = 0; r < theta.size(); ++r) {
      const double sg = sigmoid(alpha_ * theta(r));
      H(r, r) += 2.0 * alpha_ * mu_m_ * sg * (1.0 - sg);
    }
  }
  return H;
}

Eigen::VectorXd LogisticLocal::minimize_shifted(const Eigen::VectorXd& lin, double quad) const {
  const int p = dim();
  if (lin.size() != p) throw DimensionError("logistic inner solve: shift has wrong length");
  auto zeta = [&](const Eigen::VectorXd& x) { return value(x) + lin.dot(x) + 0.5 * quad * x.squaredNorm(); };
  auto grad = [&](const Eigen::VectorXd& x) { Eigen::VectorXd g = gradient(x) + lin; g += quad * x; return g; };

  Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd g = grad(x);
  const double tol = inner_.grad_tol * std::max(1.0, g.norm());
  double fx = zeta(x);
  for (int it = 0; it < inner_.max_iters; ++it) {
    if (g.norm() <= tol) return x;
    Eigen::MatrixXd H = hessian(x);
    H.diagonal().array() += quad;
    const Eigen::VectorXd step = H.llt().solve(-g);
    const double slope = g.dot(step);
    double t = 1.0;
    Eigen::VectorXd trial = x + step;
    double ft = zeta(trial);
    int halvings = 0;
    // Roundoff slack: near the optimum the Armijo decrease is below the resolution of fx.
    const double slack = 64.0 * std::numeric_limits<double>::epsilon() * std::abs(fx);
    while (!(ft <= fx + 1e-4 * t * slope + slack) && halvings < 60) {
      t *= 0.5;
      trial = x + t * step;
      ft = zeta(trial);
      ++halvings;
    }
    if (halvings == 60) {
      // No representable decrease left: accept if the gradient is at roundoff level.
      if (g.norm() <= 1e3 * tol) return x;
      break;
    }
    x = std::move(trial);
    fx = ft;
    g = grad(x);
  }
  if (g.norm() <= tol) return x;
  char buf[96];
  std::snprintf(buf, sizeof buf, "inner Newton did not converge (gradient norm %.3e, tolerance %.3e)", g.norm(), tol);
  throw std::runtime_error(buf);
}

double LogisticLocal::curvature_upper() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B_ * B_.transpose(), Eigen::EigenvaluesOnly);
  const double data = 0.25 * es.eigenvalues().maxCoeff();
  return data + (reg_ == Regularizer::L2 ? 2.0 * mu_m_ : 0.5 * alpha_ * mu_m_);
}

double LogisticLocal::curvature_lower(double radius) const {
  if (reg_ == Regularizer::L2) return 2.0 * mu_m_;
  // |b_j^T theta| <= R ||b_j||_1 on the box, and sigma' decreases in |t|.
  Eigen::VectorXd w(B_.cols());
  for (Eigen::Index j = 0; j < B_.cols(); ++j) {
    const double sg = sigmoid(radius * B_.col(j).lpNorm<1>());
    w(j) = sg * (1.0 - sg);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B_ * w.asDiagonal() * B_.transpose(), Eigen::EigenvaluesOnly);
  const double sg = sigmoid(alpha_ * radius);
  return std::max(0.0, es.eigenvalues().minCoeff()) + 2.0 * alpha_ * mu_m_ * sg * (1.0 - sg);
}

nlohmann::json LogisticLocal::describe() const {
  return {{"type", "logistic"},
          {"p", dim()},
          {"samples", a_.size()},
          {"regularizer", reg_ == Regularizer::L2 ? "l2" : "smoothed_l1"},
          {"alpha", alpha_}};
}

// ----------------------------------------------------------------- builders

namespace {

void check_nodes(const Graph& g, std::size_t count) {
  if (static_cast<int>(count) != g.num_nodes())
    throw DimensionError("expected data for " + std::to_string(g.num_nodes()) + " nodes, got " +
                         std::to_string(count));
}

std::pair<double, double> eig_range(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

ProblemInstance quadratic_instance(Graph graph, std::vector<std::shared_ptr<QuadraticLocal>> q, std::string kind) {
  double gamma = std::numeric_limits<double>::infinity();
  double Gamma = 0.0;
  std::vector<LocalPtr> locals;
  for (auto& l : q) {
    auto [lo, hi] = eig_range(2.0 * l->P());
    gamma = std::min(gamma, lo);
    Gamma = std::max(Gamma, hi);
    locals.push_back(std::move(l));
  }
  return make_instance(std::move(graph), std::move(locals), gamma, Gamma, 0.0, std::move(kind));
}

}  // namespace

ProblemInstance build_regression(Graph graph, const std::vector<NodeData>& data, double mu) {
  if (!(mu > 0.0)) throw ConfigError("regression regularizer mu must be > 0");
  check_nodes(graph, data.size());
  const auto p = data.at(0).B.rows();
  std::vector<std::shared_ptr<QuadraticLocal>> locals;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& d = data[i];
    if (d.B.rows() != p || d.B.cols() != d.a.size())
      throw DimensionError("regression data shape mismatch at node " + std::to_string(i));
    if (d.a.size() < 1) throw ConfigError("node " + std::to_string(i) + " has no samples");
    Eigen::MatrixXd P = d.B * d.B.transpose();
    P.diagonal().array() += mu * static_cast<double>(d.a.size());
    locals.push_back(std::make_shared<QuadraticLocal>(std::move(P), d.B * d.a, d.a.squaredNorm()));
  }
  return quadratic_instance(std::move(graph), std::move(locals), "regression");
}

ProblemInstance random_quadratic_instance(Graph graph, int p, std::uint64_t seed, double spread) {
  if (p < 1) throw ConfigError("p must be >= 1");
  if (!(spread >= 0.0)) throw ConfigError("spread must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::shared_ptr<QuadraticLocal>> locals;
  for (int i = 0; i < graph.num_nodes(); ++i) {
    Eigen::MatrixXd A(p, p);
    Eigen::VectorXd c(p);
    for (int k = 0; k < p * p; ++k) A.data()[k] = normal(rng);
    for (int r = 0; r < p; ++r) c(r) = normal(rng);
    Eigen::MatrixXd P = Eigen::MatrixXd::Identity(p, p) + spread * A * A.transpose() / p;
    locals.push_back(std::make_shared<QuadraticLocal>(std::move(P), c, c.squaredNorm()));
  }
  return quadratic_instance(std::move(graph), std::move(locals), "quadratic");
}

ProblemInstance build_rl(Graph graph, const std::vector<RlNodeData>& data, double mu) {
  check_nodes(graph, data.size());
  if (!(mu >= 0.0)) throw ConfigError("rl regularizer mu must be >= 0");
  int p = -1;
  for (const auto& node : data)
    if (!node.empty()) {
      p = static_cast<int>(node.front().B.rows());
      break;
    }
  if (p < 1) throw ConfigError("rl data contains no trajectories");
  std::vector<std::shared_ptr<QuadraticLocal>> locals;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(p, p);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
    double u = 0.0;
    for (const auto& tr : data[i]) {
      if (tr.B.rows() != p || tr.B.cols() != tr.a.size())
        throw DimensionError("trajectory shape mismatch at node " + std::to_string(i));
      if (tr.reward < 0.0) throw ConfigError("rewards must be >= 0 (node " + std::to_string(i) + ")");
      F += tr.reward * tr.B * tr.B.transpose();
      g += tr.reward * tr.B * tr.a;
      u += tr.reward * tr.a.squaredNorm();
    }
    F.diagonal().array() += mu * static_cast<double>(data[i].size());
    Eigen::LLT<Eigen::MatrixXd> llt(F);
    if (llt.info() != Eigen::Success)
      throw ConfigError("node " + std::to_string(i) + ": F is singular (all rewards zero and mu = 0?)");
    locals.push_back(std::make_shared<QuadraticLocal>(std::move(F), std::move(g), u));
  }
  return quadratic_instance(std::move(graph), std::move(locals), "rl");
}

double estimate_inverse_hessian_lipschitz(const std::vector<LocalPtr>& locals, int samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst = 0.0;
  for (const auto& f : locals) {
    const int p = f->dim();
    for (int s = 0; s < samples; ++s) {
      Eigen::VectorXd x(p), dir(p);
      for (int r = 0; r < p; ++r) x(r) = normal(rng);
      for (int r = 0; r < p; ++r) dir(r) = normal(rng);
      dir *= 1e-3 / dir.norm();
      const Eigen::MatrixXd Ha = f->hessian(x).inverse();
      const Eigen::MatrixXd Hb = f->hessian(x + dir).inverse();
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(Ha - Hb);
      worst = std::max(worst, svd.singularValues()(0) / dir.norm());
    }
  }
  return 2.0 * worst;
}

ProblemInstance build_logistic(Graph graph, const std::vector<NodeData>& data, double mu,
                               const LogisticOptions& options) {
  check_nodes(graph, data.size());
  std::vector<LocalPtr> locals;
  double gamma = std::numeric_limits<double>::infinity();
  double Gamma = 0.0;
  const auto p = data.at(0).B.rows();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].B.rows() != p) throw DimensionError("logistic data dimension differs at node " + std::to_string(i));
    auto l = std::make_shared<LogisticLocal>(data[i].B, data[i].a, mu, options.reg, options.alpha);
    gamma = std::min(gamma, l->curvature_lower(options.box_radius));
    Gamma = std::max(Gamma, l->curvature_upper());
    locals.push_back(std::move(l));
  }
  const double delta = estimate_inverse_hessian_lipschitz(locals, options.delta_samples, options.delta_seed);
  return make_instance(std::move(graph), std::move(locals), gamma, Gamma, delta,
                       options.reg == Regularizer::L2 ? "logistic" : "logistic_l1");
}

// --------------------------------------------------------------- generators

namespace {

std::vector<int> split_counts(int total, int parts) {
  std::vector<int> counts(parts);
  for (int i = 0; i < parts; ++i)
    counts[i] = static_cast<int>(static_cast<long long>(total) * (i + 1) / parts -
                                 static_cast<long long>(total) * i / parts);
  return counts;
}

}  // namespace

std::vector<NodeData> generate_synthetic_regression(int n_nodes, int p, int total_points, double noise_sigma,
                                                    std::uint64_t seed) {
  if (n_nodes < 1 || p < 1) throw ConfigError("need n_nodes >= 1 and p >= 1");
  if (total_points < n_nodes) throw ConfigError("total_points must be >= n_nodes");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd theta(p);
  for (int r = 0; r < p; ++r) theta(r) = normal(rng);
  std::vector<NodeData> out;
  for (int m : split_counts(total_points, n_nodes)) {
    NodeData d{Eigen::MatrixXd(p, m), Eigen::VectorXd(m)};
    for (int j = 0; j < m; ++j) {
      for (int r = 0; r < p; ++r) d.B(r, j) = normal(rng);
      d.a(j) = d.B.col(j).dot(theta) + noise_sigma * normal(rng);
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<NodeData> generate_synthetic_logistic(int n_nodes, int p, int total_points, std::uint64_t seed) {
  if (n_nodes < 1 || p < 1) throw ConfigError("need n_nodes >= 1 and p >= 1");
  if (total_points < n_nodes) throw ConfigError("total_points must be >= n_nodes");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Eigen::VectorXd theta(p);
  for (int r = 0; r < p; ++r) theta(r) = normal(rng);
  std::vector<NodeData> out;
  for (int m : split_counts(total_points, n_nodes)) {
    NodeData d{Eigen::MatrixXd(p, m), Eigen::VectorXd(m)};
    for (int j = 0; j < m; ++j) {
      for (int r = 0; r < p; ++r) d.B(r, j) = normal(rng);
      d.a(j) = unif(rng) < sigmoid(d.B.col(j).dot(theta)) ? 1.0 : 0.0;
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<RlNodeData> generate_synthetic_rl(int n_nodes, int p, int trajectories_per_node, int horizon,
                                              std::uint64_t seed) {
  if (n_nodes < 1 || p < 1 || trajectories_per_node < 1 || horizon < 1)
    throw ConfigError("rl generator needs positive sizes");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd policy(p);
  for (int r = 0; r < p; ++r) policy(r) = normal(rng);
  std::vector<RlNodeData> out(n_nodes);
  for (auto& node : out) {
    for (int k = 0; k < trajectories_per_node; ++k) {
      Trajectory tr{0.0, Eigen::MatrixXd(p, horizon), Eigen::VectorXd(horizon)};
      double cost = 0.0;
      for (int t = 0; t < horizon; ++t) {
        for (int r = 0; r < p; ++r) tr.B(r, t) = normal(rng);
        const double ideal = tr.B.col(t).dot(policy);
        const double noise = normal(rng);
        tr.a(t) = ideal + noise;
        cost += noise * noise;
      }
      // Rollouts whose actions stay close to the reference policy earn more.
      tr.reward = std::exp(-cost / horizon);
      node.push_back(std::move(tr));
    }
  }
  return out;
}

// ------------------------------------------------------------------ oracle

ReferenceSolution centralized_optimum(const ProblemInstance& inst) {
  const int p = inst.p;
  auto total = [&](const Eigen::VectorXd& x) {
    double f = 0.0;
    for (const auto& l : inst.locals) f += l->value(x);
    return f;
  };
  Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
  double fx = total(x);
  double g0 = -1.0;
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(p, p);
    for (const auto& l : inst.locals) {
      g += l->gradient(x);
      H += l->hessian(x);
    }
    if (g0 < 0) g0 = std::max(1.0, g.norm());
    if (g.norm() <= 1e-13 * g0) break;
    const Eigen::VectorXd step = H.llt().solve(-g);
    double t = 1.0;
    Eigen::VectorXd trial = x + step;
    double ft = total(trial);
    int halvings = 0;
    while (ft > fx + 1e-4 * t * g.dot(step) && halvings < 60) {
      t *= 0.5;
      trial = x + t * step;
      ft = total(trial);
      ++halvings;
    }
    if (halvings == 60) break;
    const bool tiny = (trial - x).norm() <= 1e-15 * std::max(1.0, x.norm());
    x = std::move(trial);
    fx = ft;
    if (tiny) break;
  }
  return {x, total(x)};
}

void attach_reference(ProblemInstance& inst) { inst.reference = centralized_optimum(inst); }

ProblemInstance build_instance(Graph graph, const Dataset& data, double mu, double alpha) {
  if (data.kind == "regression") return build_regression(std::move(graph), data.nodes, mu);
  if (data.kind == "rl") return build_rl(std::move(graph), data.rl_nodes, mu);
  if (data.kind == "logistic" || data.kind == "logistic_l1") {
    LogisticOptions opt;
    opt.reg = data.kind == "logistic" ? Regularizer::L2 : Regularizer::SmoothedL1;
    opt.alpha = alpha;
    return build_logistic(std::move(graph), data.nodes, mu, opt);
  }
  throw ConfigError("unknown problem kind '" + data.kind + "'");
}

// --------------------------------------------------------------------- I/O

namespace {

std::string fmt(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<std::vector<double>> read_numeric_rows(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool header = false;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
      } catch (const std::exception&) {
        header = true;
        break;
      }
    }
    if (header) {
      if (lineno == 1) continue;
      throw ConfigError(path + ":" + std::to_string(lineno) + ": non-numeric cell");
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ConfigError(path + ":" + std::to_string(lineno) + ": inconsistent column count");
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

void write_node_csv(const std::string& path, const NodeData& d) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (Eigen::Index r = 0; r < d.B.rows(); ++r) out << "x" << r << ',';
  out << "label\n";
  for (Eigen::Index j = 0; j < d.B.cols(); ++j) {
    for (Eigen::Index r = 0; r < d.B.rows(); ++r) out << fmt(d.B(r, j)) << ',';
    out << fmt(d.a(j)) << '\n';
  }
}

NodeData read_node_csv(const std::string& path) {
  auto rows = read_numeric_rows(path);
  if (rows.empty() || rows.front().size() < 2) throw ConfigError(path + ": need at least one feature and a label");
  const auto p = static_cast<Eigen::Index>(rows.front().size() - 1);
  NodeData d{Eigen::MatrixXd(p, rows.size()), Eigen::VectorXd(rows.size())};
  for (std::size_t j = 0; j < rows.size(); ++j) {
    for (Eigen::Index r = 0; r < p; ++r) d.B(r, j) = rows[j][r];
    d.a(j) = rows[j][p];
  }
  return d;
}

void write_rl_csv(const std::string& path, const RlNodeData& d) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  const auto p = d.empty() ? 0 : d.front().B.rows();
  out << "trajectory_id,reward,";
  for (Eigen::Index r = 0; r < p; ++r) out << "x" << r << ',';
  out << "action\n";
  for (std::size_t k = 0; k < d.size(); ++k)
    for (Eigen::Index t = 0; t < d[k].B.cols(); ++t) {
      out << k << ',' << fmt(d[k].reward) << ',';
      for (Eigen::Index r = 0; r < p; ++r) out << fmt(d[k].B(r, t)) << ',';
      out << fmt(d[k].a(t)) << '\n';
    }
}

RlNodeData read_rl_csv(const std::string& path) {
  auto rows = read_numeric_rows(path);
  RlNodeData out;
  if (rows.empty()) return out;
  if (rows.front().size() < 4) throw ConfigError(path + ": need trajectory_id, reward, features and action");
  const auto p = static_cast<Eigen::Index>(rows.front().size() - 3);
  std::size_t start = 0;
  while (start < rows.size()) {
    std::size_t end = start;
    while (end < rows.size() && rows[end][0] == rows[start][0]) ++end;
    Trajectory tr{rows[start][1], Eigen::MatrixXd(p, end - start), Eigen::VectorXd(end - start)};
    for (std::size_t t = start; t < end; ++t) {
      if (rows[t][1] != tr.reward) throw ConfigError(path + ": reward varies within trajectory");
      for (Eigen::Index r = 0; r < p; ++r) tr.B(r, t - start) = rows[t][2 + r];
      tr.a(t - start) = rows[t][2 + p];
    }
    out.push_back(std::move(tr));
    start = end;
  }
  return out;
}

std::string write_manifest(const std::string& dir, const ProblemInstance& inst, const Dataset& data, double mu,
                           double alpha) {
  fs::create_directories(dir);
  {
    std::ofstream g(fs::path(dir) / "graph.json");
    g << inst.graph.to_json().dump() << '\n';
  }
  nlohmann::json nodes = nlohmann::json::array();
  for (int i = 0; i < inst.n(); ++i) {
    const std::string name = "node_" + std::to_string(i) + ".csv";
    if (data.kind == "rl")
      write_rl_csv((fs::path(dir) / name).string(), data.rl_nodes.at(i));
    else
      write_node_csv((fs::path(dir) / name).string(), data.nodes.at(i));
    nodes.push_back(name);
  }
  nlohmann::json m = {{"schema_version", 1}, {"kind", data.kind}, {"graph", "graph.json"}, {"nodes", nodes},
                      {"mu", mu},           {"alpha", alpha},     {"gamma", inst.gamma},   {"Gamma", inst.Gamma},
                      {"delta", inst.delta}};
  const auto path = (fs::path(dir) / "manifest.json").string();
  std::ofstream out(path);
  out << m.dump(2) << '\n';
  return path;
}

ProblemInstance load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path);
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("manifest " + path + ": " + ex.what());
  }
  const fs::path base = fs::path(path).parent_path();
  try {
    std::ifstream gin(base / m.at("graph").get<std::string>());
    if (!gin) throw ConfigError("manifest graph file not found");
    Graph graph = Graph::from_json(nlohmann::json::parse(gin));
    Dataset data;
    data.kind = m.at("kind").get<std::string>();
    for (const auto& name : m.at("nodes")) {
      const auto file = (base / name.get<std::string>()).string();
      if (data.kind == "rl")
        data.rl_nodes.push_back(read_rl_csv(file));
      else
        data.nodes.push_back(read_node_csv(file));
    }
    ProblemInstance inst = build_instance(std::move(graph), data, m.at("mu").get<double>(), m.value("alpha", 20.0));
    if (m.contains("gamma")) inst.gamma = m["gamma"].get<double>();
    if (m.contains("Gamma")) inst.Gamma = m["Gamma"].get<double>();
    if (m.contains("delta")) inst.delta = m["delta"].get<double>();
    if (!(inst.gamma > 0.0) || inst.Gamma < inst.gamma || inst.delta < 0.0)
      throw ConfigError("manifest declares inconsistent curvature constants");
    return inst;
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError("manifest " + path + ": " + ex.what());
  }
}

}  // namespace sddnewton
