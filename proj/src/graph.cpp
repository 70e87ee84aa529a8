#include "sddnewton/graph.hpp"

#include <algorithm>
#include <numeric>
#include <queue>
#include <random>
#include <set>

#include "sddnewton/errors.hpp"

namespace sddnewton {

Graph::Graph(int n, std::vector<Edge> edges, std::uint64_t seed)
    : n_(n), adjacency_(n > 0 ? n : 0), seed_(seed) {
  if (n < 2) throw ConfigError("graph needs at least 2 nodes, got " + std::to_string(n));
  for (auto& [a, b] : edges) {
    if (a < 0 || b < 0 || a >= n || b >= n)
      throw ConfigError("edge endpoint out of range: (" + std::to_string(a) + "," +
                        std::to_string(b) + ")");
    if (a == b) throw ConfigError("self-loop at node " + std::to_string(a));
    if (a > b) std::swap(a, b);
  }
  std::sort(edges.begin(), edges.end());
  if (std::adjacent_find(edges.begin(), edges.end()) != edges.end())
    throw ConfigError("duplicate edge in graph");
  if (!is_connected(n, edges)) throw DisconnectedGraphError("graph is not connected");
  edges_ = std::move(edges);
  for (const auto& [a, b] : edges_) {
    adjacency_[a].push_back(b);
    adjacency_[b].push_back(a);
  }
  for (auto& nb : adjacency_) std::sort(nb.begin(), nb.end());
}

int Graph::max_degree() const {
  int d = 0;
  for (int i = 0; i < n_; ++i) d = std::max(d, degree(i));
  return d;
}

bool Graph::adjacent(int i, int j) const {
  const auto& nb = adjacency_[i];
  return std::binary_search(nb.begin(), nb.end(), j);
}

std::vector<int> Graph::bfs_tree() const {
  std::vector<int> parent(n_, -2);
  std::queue<int> q;
  parent[0] = -1;
  q.push(0);
  while (!q.empty()) {
    int u = q.front();
    q.pop();
    for (int v : adjacency_[u]) {
      if (parent[v] == -2) {
        parent[v] = u;
        q.push(v);
      }
    }
  }
  return parent;
}

nlohmann::json Graph::to_json() const {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& [a, b] : edges_) edges.push_back({a, b});
  return {{"n", n_}, {"edges", edges}, {"seed", seed_}};
}

Graph Graph::from_json(const nlohmann::json& j) {
  try {
    std::vector<Edge> edges;
    for (const auto& e : j.at("edges")) edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    return Graph(j.at("n").get<int>(), std::move(edges), j.value("seed", std::uint64_t{0}));
  } catch (const nlohmann::json::exception& ex) {
    throw ConfigError(std::string("malformed graph JSON: ") + ex.what());
  }
}

bool is_connected(int n, const std::vector<Edge>& edges) {
  if (n <= 0) return false;
  // union-find
  std::vector<int> root(n);
  std::iota(root.begin(), root.end(), 0);
  auto find = [&](int x) {
    while (root[x] != x) x = root[x] = root[root[x]];
    return x;
  };
  int components = n;
  for (const auto& [a, b] : edges) {
    int ra = find(a), rb = find(b);
    if (ra != rb) {
      root[ra] = rb;
      --components;
    }
  }
  return components == 1;
}

Graph generate_random_graph(int n, int m, std::uint64_t seed) {
  if (n < 2) throw ConfigError("random graph needs n >= 2");
  const long long max_edges = static_cast<long long>(n) * (n - 1) / 2;
  if (m < n - 1 || m > max_edges)
    throw ConfigError("edge count " + std::to_string(m) + " infeasible for " + std::to_string(n) +
                      " nodes (need n-1 <= m <= n(n-1)/2)");

  std::mt19937_64 rng(seed);
  auto uniform_node = [&](int bound) {
    return static_cast<int>(std::uniform_int_distribution<long long>(0, bound - 1)(rng));
  };

  // Wilson's algorithm: loop-erased random walks on K_n give a uniform spanning tree.
  std::vector<bool> in_tree(n, false);
  std::vector<int> next(n, -1);
  in_tree[0] = true;
  for (int start = 1; start < n; ++start) {
    int u = start;
    while (!in_tree[u]) {
      int v = uniform_node(n - 1);
      if (v >= u) ++v;
      next[u] = v;
      u = v;
    }
    for (u = start; !in_tree[u]; u = next[u]) in_tree[u] = true;
  }
  std::set<Edge> chosen;
  for (int u = 1; u < n; ++u) chosen.insert({std::min(u, next[u]), std::max(u, next[u])});

  std::vector<Edge> rest;
  rest.reserve(static_cast<std::size_t>(max_edges) - chosen.size());
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b)
      if (!chosen.count({a, b})) rest.emplace_back(a, b);
  // partial Fisher-Yates
  const int extra = m - (n - 1);
  for (int k = 0; k < extra; ++k) {
    int j = k + uniform_node(static_cast<int>(rest.size()) - k);
    std::swap(rest[k], rest[j]);
    chosen.insert(rest[k]);
  }
  return Graph(n, std::vector<Edge>(chosen.begin(), chosen.end()), seed);
}

Graph path_graph(int n) {
  std::vector<Edge> edges;
  for (int i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  return Graph(n, std::move(edges));
}

Graph complete_graph(int n) {
  std::vector<Edge> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) edges.emplace_back(i, j);
  return Graph(n, std::move(edges));
}

Eigen::MatrixXd laplacian(const Graph& g) {
  const int n = g.num_nodes();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (const auto& [a, b] : g.edges()) {
    L(a, b) = -1.0;
    L(b, a) = -1.0;
    L(a, a) += 1.0;
    L(b, b) += 1.0;
  }
  return L;
}

SpectralInfo spectral_info(const Eigen::MatrixXd& L) {
  if (L.rows() != L.cols() || L.rows() < 2) throw DimensionError("spectral_info expects a square matrix, n >= 2");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(L, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw std::runtime_error("eigensolver failed");
  const auto& ev = es.eigenvalues();
  SpectralInfo info{ev(1), ev(ev.size() - 1)};
  const double scale = std::max(1.0, std::abs(info.muN));
  if (info.mu2 <= 1e-10 * scale)
    throw DisconnectedGraphError("second Laplacian eigenvalue is ~0: graph is disconnected");
  return info;
}

}  // namespace sddnewton
