#pragma once

#include <stdexcept>
#include <string>

namespace sddnewton {

/// Invalid user-supplied configuration (graph sizes, tolerances, config files).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Vector/matrix sizes that do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The graph violates a connectivity precondition.
class DisconnectedGraphError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix is not symmetric diagonally dominant with nonpositive off-diagonals.
class NotSddError : public std::invalid_argument {
 public:
  NotSddError(int row, const std::string& what)
      : std::invalid_argument(what + " (row " + std::to_string(row) + ")"), row_(row) {}
  int row() const { return row_; }

 private:
  int row_;
};

/// A zero diagonal entry makes D0 non-invertible.
class SingularSplittingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A per-node computation (primal recovery, inner Newton) failed.
class NodeError : public std::runtime_error {
 public:
  NodeError(int node, const std::string& what)
      : std::runtime_error("node " + std::to_string(node) + ": " + what), node_(node) {}
  int node() const { return node_; }

 private:
  int node_;
};

}  // namespace sddnewton
