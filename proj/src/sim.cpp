#include "sddnewton/sim.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "sddnewton/errors.hpp"

namespace sddnewton {

std::string to_string(MessageUnit unit) { return unit == MessageUnit::vector ? "vector" : "scalar"; }

MessageUnit message_unit_from_string(const std::string& s) {
  if (s == "vector") return MessageUnit::vector;
  if (s == "scalar") return MessageUnit::scalar;
  throw ConfigError("unknown message unit '" + s + "' (expected vector|scalar)");
}

AuditResult locality_audit(const Graph& g, const AccessLog& log) {
  AuditResult res;
  for (const auto& [reader, owner] : log.reads()) {
    if (reader == owner || g.adjacent(reader, owner)) continue;
    res.passed = false;
    if (std::find(res.violations.begin(), res.violations.end(), std::make_pair(reader, owner)) ==
        res.violations.end())
      res.violations.emplace_back(reader, owner);
  }
  return res;
}

AuditResult operator_locality_audit(const Graph& g, const Eigen::MatrixXd& op) {
  AuditResult res;
  const int n = g.num_nodes();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j && op(i, j) != 0.0 && !g.adjacent(i, j)) {
        res.passed = false;
        res.violations.emplace_back(i, j);
      }
  return res;
}

Network::Network(const Graph& g, MessageUnit unit, AccessLog* log)
    : graph_(&g), unit_(unit), log_(log) {
  const int n = g.num_nodes();
  offsets_.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) offsets_[i + 1] = offsets_[i] + g.neighbors(i).size();
  outbox_.resize(offsets_[n]);
  inbox_.resize(offsets_[n]);
}

std::size_t Network::slot(int from, int to) const {
  const auto& nb = graph_->neighbors(from);
  auto it = std::lower_bound(nb.begin(), nb.end(), to);
  if (it == nb.end() || *it != to)
    throw std::logic_error("node " + std::to_string(from) + " cannot reach non-neighbor " +
                           std::to_string(to));
  return offsets_[from] + static_cast<std::size_t>(it - nb.begin());
}

void Network::send(int from, int to, std::span<const double> payload) {
  auto& box = outbox_[slot(from, to)];
  box.assign(payload.begin(), payload.end());
  messages_ += unit_ == MessageUnit::vector ? 1 : static_cast<long long>(payload.size());
}

void Network::broadcast(int from, std::span<const double> payload) {
  for (int to : graph_->neighbors(from)) send(from, to, payload);
}

void Network::deliver() {
  for (std::size_t k = 0; k < outbox_.size(); ++k)
    if (!outbox_[k].empty()) {
      inbox_[k].swap(outbox_[k]);
      outbox_[k].clear();
    }
  ++rounds_;
}

std::span<const double> Network::received(int at, int from) const {
  if (log_) log_->record(at, from);
  const auto& box = inbox_[slot(from, at)];
  return {box.data(), box.size()};
}

long long charge_messages(const Graph& g, const StepCost& cost, MessageUnit unit) {
  const long long directed = 2LL * g.num_edges();
  const long long tree_edges = g.num_nodes() - 1;
  long long total = 0;
  for (const auto& ex : cost.exchanges)
    total += ex.rounds * directed * (unit == MessageUnit::vector ? 1 : ex.dim);
  for (const auto& solve : cost.solves) {
    if (solve.per_block.empty()) continue;
    if (unit == MessageUnit::vector) {
      total += directed * *std::max_element(solve.per_block.begin(), solve.per_block.end());
    } else {
      long long sum = 0;
      for (long long c : solve.per_block) sum += c;
      total += directed * sum;
    }
  }
  for (const auto& red : cost.reductions)
    total += unit == MessageUnit::vector ? 2 * tree_edges : tree_edges * (red.up_dim + red.down_dim);
  return total;
}

double consensus_error(const Graph& g, const Eigen::MatrixXd& theta) {
  if (theta.rows() != g.num_nodes()) throw DimensionError("consensus_error: one row per node expected");
  double s = 0.0;
  for (const auto& [a, b] : g.edges()) s += (theta.row(a) - theta.row(b)).squaredNorm();
  return std::sqrt(s);
}

Eigen::MatrixXd unstack(const Eigen::VectorXd& v, int n, int p) {
  if (v.size() != static_cast<Eigen::Index>(n) * p) throw DimensionError("unstack: length is not n*p");
  Eigen::MatrixXd out(n, p);
  for (int r = 0; r < p; ++r) out.col(r) = v.segment(static_cast<Eigen::Index>(r) * n, n);
  return out;
}

Eigen::VectorXd stack(const Eigen::MatrixXd& theta) {
  const auto n = theta.rows();
  Eigen::VectorXd v(n * theta.cols());
  for (Eigen::Index r = 0; r < theta.cols(); ++r) v.segment(r * n, n) = theta.col(r);
  return v;
}

namespace {

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::string RunTrace::to_csv() const {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const auto& r : rows) {
    os << r.iter << ',' << format_double(r.objective) << ',' << format_double(r.consensus_error) << ','
       << format_double(r.grad_mnorm) << ',' << r.phase << ',' << r.messages_cumulative << ','
       << format_double(r.wall_ms) << '\n';
  }
  return os.str();
}

nlohmann::json RunTrace::metadata() const {
  nlohmann::json j = {{"algorithm", algorithm},
                      {"config_hash", config_hash},
                      {"seed", seed},
                      {"message_unit", to_string(message_unit)},
                      {"iterations", rows.empty() ? 0 : rows.back().iter},
                      {"csv_columns", kCsvHeader}};
  j["details"] = extra;
  return j;
}

void RunTrace::write(const std::string& csv_path, const std::string& json_path) const {
  std::ofstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  csv << to_csv();
  std::ofstream js(json_path);
  if (!js) throw std::runtime_error("cannot write " + json_path);
  js << metadata().dump(2) << '\n';
}

std::string stable_hash(const std::string& text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace sddnewton
