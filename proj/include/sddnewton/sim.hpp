#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sddnewton/graph.hpp"

namespace sddnewton {

/// How message traffic is counted. `vector`: one unit per payload crossing one
/// directed edge in one round, whatever its length. `scalar`: one unit per
/// double crossing a directed edge.
enum class MessageUnit { vector, scalar };

std::string to_string(MessageUnit unit);
MessageUnit message_unit_from_string(const std::string& s);

/// Records which node read which other node's state. Enabled only for audits.
class AccessLog {
 public:
  void record(int reader, int owner) { reads_.emplace_back(reader, owner); }
  const std::vector<std::pair<int, int>>& reads() const { return reads_; }
  void clear() { reads_.clear(); }

 private:
  std::vector<std::pair<int, int>> reads_;
};

struct AuditResult {
  bool passed = true;
  std::vector<std::pair<int, int>> violations;  ///< (reader, owner) pairs that are not adjacent
};

/// Every logged read must be of the reader's own state or a neighbor's.
AuditResult locality_audit(const Graph& g, const AccessLog& log);

/// Every nonzero off-diagonal of an operator applied by the solver must be a
/// graph edge.
AuditResult operator_locality_audit(const Graph& g, const Eigen::MatrixXd& op);

/// Synchronous round-based network. Nodes `send` payloads to neighbors into
/// per-directed-edge outboxes; `deliver` is the barrier that makes them
/// readable. Sending to a non-neighbor throws.
class Network {
 public:
  Network(const Graph& g, MessageUnit unit, AccessLog* log = nullptr);

  void send(int from, int to, std::span<const double> payload);
  /// Sends the same payload to every neighbor of `from`.
  void broadcast(int from, std::span<const double> payload);
  void deliver();
  /// Last payload delivered on (from -> at). Logs the read.
  std::span<const double> received(int at, int from) const;

  const Graph& graph() const { return *graph_; }
  long long messages() const { return messages_; }
  long long rounds() const { return rounds_; }
  /// Charges traffic for work performed outside node programs (solver rounds,
  /// reductions) so all accounting lands in one counter.
  void charge(long long units) { messages_ += units; }

 private:
  std::size_t slot(int from, int to) const;

  const Graph* graph_;
  MessageUnit unit_;
  AccessLog* log_;
  std::vector<std::size_t> offsets_;  // CSR offsets into directed-edge slots, indexed by sender
  std::vector<std::vector<double>> outbox_;
  std::vector<std::vector<double>> inbox_;
  long long messages_ = 0;
  long long rounds_ = 0;
};

/// Description of the communication performed by one algorithm step.
struct StepCost {
  /// Rounds in which every node sends one payload of `dim` scalars to each neighbor.
  struct NeighborExchange {
    int rounds = 1;
    int dim = 1;
  };
  /// Laplacian products applied blockwise by the SDD solver; entry r is the
  /// number of products applied to block r. Blocks run in lockstep, so in
  /// vector units a round carries all still-active blocks in one payload.
  struct LaplacianApplies {
    std::vector<long long> per_block;
  };
  /// Convergecast + broadcast over a spanning tree.
  struct TreeReduction {
    int up_dim = 1;
    int down_dim = 1;
  };
  std::vector<NeighborExchange> exchanges;
  std::vector<LaplacianApplies> solves;
  std::vector<TreeReduction> reductions;
};

long long charge_messages(const Graph& g, const StepCost& cost, MessageUnit unit);

/// sqrt(sum over edges ||theta_i - theta_j||^2); rows of `theta` are nodes.
double consensus_error(const Graph& g, const Eigen::MatrixXd& theta);

/// Stacked block-major vector (block r holds coordinate r of every node) to
/// an n x p node-major matrix, and back.
Eigen::MatrixXd unstack(const Eigen::VectorXd& v, int n, int p);
Eigen::VectorXd stack(const Eigen::MatrixXd& theta);

struct TraceRow {
  int iter = 0;
  double objective = 0.0;
  double consensus_error = 0.0;
  double grad_mnorm = 0.0;
  std::string phase = "none";
  long long messages_cumulative = 0;
  double wall_ms = 0.0;
};

struct RunTrace {
  std::string algorithm;
  std::string config_hash;
  std::uint64_t seed = 0;
  MessageUnit message_unit = MessageUnit::vector;
  std::vector<TraceRow> rows;
  Eigen::MatrixXd final_theta;  ///< n x p
  nlohmann::json extra = nlohmann::json::object();

  static constexpr const char* kCsvHeader =
      "iter,objective,consensus_error,grad_mnorm,phase,messages_cumulative,wall_ms";
  std::string to_csv() const;
  nlohmann::json metadata() const;
  void write(const std::string& csv_path, const std::string& json_path) const;
};

/// FNV-1a 64-bit, rendered as 16 hex digits. Stable across platforms.
std::string stable_hash(const std::string& text);

}  // namespace sddnewton
