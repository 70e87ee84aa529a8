#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace sddnewton {

using Edge = std::pair<int, int>;

/// Undirected, connected processor graph. Edges are stored with first < second
/// in lexicographic order; neighbor lists are sorted ascending.
class Graph {
 public:
  /// Validates node count, self-loops, duplicates and connectivity.
  Graph(int n, std::vector<Edge> edges, std::uint64_t seed = 0);

  int num_nodes() const { return n_; }
  int num_edges() const { return static_cast<int>(edges_.size()); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& neighbors(int i) const { return adjacency_[i]; }
  int degree(int i) const { return static_cast<int>(adjacency_[i].size()); }
  int max_degree() const;
  bool adjacent(int i, int j) const;
  std::uint64_t seed() const { return seed_; }

  /// Parent array of a BFS spanning tree rooted at node 0 (parent[0] == -1).
  std::vector<int> bfs_tree() const;

  nlohmann::json to_json() const;
  static Graph from_json(const nlohmann::json& j);

 private:
  int n_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adjacency_;
  std::uint64_t seed_;
};

/// True iff every node is reachable from node 0 through `edges`.
bool is_connected(int n, const std::vector<Edge>& edges);

/// Uniform random spanning tree (Wilson's algorithm on K_n) plus m-(n-1)
/// further edges drawn uniformly without replacement.
Graph generate_random_graph(int n, int m, std::uint64_t seed);

Graph path_graph(int n);
Graph complete_graph(int n);

/// Dense unweighted Laplacian: L_ii = d(i), L_ij = -1 on edges.
Eigen::MatrixXd laplacian(const Graph& g);

struct SpectralInfo {
  double mu2 = 0.0;  ///< algebraic connectivity
  double muN = 0.0;  ///< largest eigenvalue
};

/// Dense symmetric eigensolve; throws DisconnectedGraphError if mu2 is ~0.
SpectralInfo spectral_info(const Eigen::MatrixXd& L);

}  // namespace sddnewton
