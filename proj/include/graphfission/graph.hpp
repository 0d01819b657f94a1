#pragma once

/// Graph structure, signals, and the graph difference operators used by
/// trend filtering.
///
/// Edges are undirected. The edge list order is significant: it fixes the
/// row order of the incidence operator, and with it the edge indices used
/// by active sets.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace graphfission {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

class Graph {
 public:
  Graph() = default;

  /// Throws std::invalid_argument on out-of-range endpoints, self-loops,
  /// duplicate edges (in either orientation), or a coordinate table whose
  /// length differs from `node_count`.
  Graph(std::size_t node_count, std::vector<Edge> edges,
        std::vector<std::vector<double>> coords = {})
      : n_(node_count), edges_(std::move(edges)), coords_(std::move(coords)) {
    if (n_ == 0) throw std::invalid_argument("graph must have at least one node");
    if (!coords_.empty() && coords_.size() != n_)
      throw std::invalid_argument("coordinate count does not match node count");
    std::set<std::pair<std::size_t, std::size_t>> seen;
    neighbors_.assign(n_, {});
    for (const auto& e : edges_) {
      if (e.u >= n_ || e.v >= n_)
        throw std::invalid_argument("edge endpoint out of range: (" + std::to_string(e.u) +
                                    ", " + std::to_string(e.v) + ")");
      if (e.u == e.v) throw std::invalid_argument("self-loop at node " + std::to_string(e.u));
      auto key = std::minmax(e.u, e.v);
      if (!seen.insert({key.first, key.second}).second)
        throw std::invalid_argument("duplicate edge (" + std::to_string(key.first) + ", " +
                                    std::to_string(key.second) + ")");
      neighbors_[e.u].push_back(e.v);
      neighbors_[e.v].push_back(e.u);
    }
  }

  std::size_t node_count() const { return n_; }
  std::size_t edge_count() const { return edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<std::size_t>& neighbors(std::size_t node) const { return neighbors_.at(node); }
  bool has_coords() const { return !coords_.empty(); }
  const std::vector<std::vector<double>>& coords() const { return coords_; }

 private:
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<double>> coords_;
  std::vector<std::vector<std::size_t>> neighbors_;
};

enum class SignalKind { continuous, count };

struct NodeSignal {
  Vector values;
  SignalKind kind = SignalKind::continuous;

  std::size_t size() const { return static_cast<std::size_t>(values.size()); }
};

/// Throws if `signal` cannot live on `graph` (length) or violates its kind.
inline void validate_signal(const NodeSignal& signal, const Graph& graph) {
  if (signal.size() != graph.node_count())
    throw std::invalid_argument("signal length " + std::to_string(signal.size()) +
                                " does not match node count " +
                                std::to_string(graph.node_count()));
  if (signal.kind == SignalKind::count) {
    for (Eigen::Index i = 0; i < signal.values.size(); ++i) {
      const double v = signal.values[i];
      if (v < 0.0 || v != std::floor(v))
        throw std::invalid_argument("count signal has non-count entry at node " +
                                    std::to_string(i));
    }
  }
}

struct DifferenceOperator {
  int order = 0;
  SparseMatrix matrix;
};

/// Oriented incidence matrix: one row per edge with -1 at the smaller node
/// index and +1 at the larger.
inline DifferenceOperator incidence(const Graph& graph) {
  const auto m = static_cast<Eigen::Index>(graph.edge_count());
  const auto n = static_cast<Eigen::Index>(graph.node_count());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(2 * graph.edge_count());
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto [lo, hi] = std::minmax(graph.edges()[r].u, graph.edges()[r].v);
    triplets.emplace_back(r, static_cast<Eigen::Index>(lo), -1.0);
    triplets.emplace_back(r, static_cast<Eigen::Index>(hi), 1.0);
  }
  SparseMatrix d(m, n);
  d.setFromTriplets(triplets.begin(), triplets.end());
  return {0, std::move(d)};
}

inline SparseMatrix laplacian(const Graph& graph) {
  const auto n = static_cast<Eigen::Index>(graph.node_count());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(4 * graph.edge_count());
  for (const auto& e : graph.edges()) {
    const auto u = static_cast<Eigen::Index>(e.u);
    const auto v = static_cast<Eigen::Index>(e.v);
    triplets.emplace_back(u, u, 1.0);
    triplets.emplace_back(v, v, 1.0);
    triplets.emplace_back(u, v, -1.0);
    triplets.emplace_back(v, u, -1.0);
  }
  SparseMatrix l(n, n);
  l.setFromTriplets(triplets.begin(), triplets.end());
  return l;
}

/// Penalty operator of order k, i.e. the matrix written Delta^(k+1):
/// k = 0 is the incidence matrix, odd k gives L^{(k+1)/2}, even k > 0 gives
/// D L^{k/2}. Built by the recursion D^T (.) / D (.) starting from D.
inline DifferenceOperator difference_operator(const Graph& graph, int k) {
  if (k < 0) throw std::invalid_argument("difference operator order must be >= 0");
  const SparseMatrix d = incidence(graph).matrix;
  SparseMatrix current = d;
  for (int order = 1; order <= k; ++order) {
    // Going from order-1 to order: odd target multiplies by D^T, even by D.
    SparseMatrix next = (order % 2 == 1) ? SparseMatrix(d.transpose() * current)
                                         : SparseMatrix(d * current);
    next.prune(0.0);
    current = std::move(next);
  }
  return {k, std::move(current)};
}

/// Connected components with labels assigned in order of each component's
/// smallest node index. Removed nodes get label -1.
struct Partition {
  std::vector<int> label;
  int count = 0;

  std::vector<std::vector<std::size_t>> groups() const {
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(count));
    for (std::size_t i = 0; i < label.size(); ++i)
      if (label[i] >= 0) out[static_cast<std::size_t>(label[i])].push_back(i);
    return out;
  }
};

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<int> rank_;
};

inline Partition label_components(DisjointSets& sets, const std::vector<bool>& node_removed) {
  const std::size_t n = node_removed.size();
  Partition p;
  p.label.assign(n, -1);
  std::vector<int> root_label(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (node_removed[i]) continue;
    const std::size_t r = sets.find(i);
    if (root_label[r] < 0) root_label[r] = p.count++;
    p.label[i] = root_label[r];
  }
  return p;
}

}  // namespace detail

/// Components of the graph after deleting the edges indexed by `removed_edges`.
inline Partition components_without_edges(const Graph& graph,
                                          const std::vector<std::size_t>& removed_edges = {}) {
  std::vector<bool> drop(graph.edge_count(), false);
  for (auto idx : removed_edges) {
    if (idx >= graph.edge_count())
      throw std::out_of_range("edge index " + std::to_string(idx) + " out of range");
    drop[idx] = true;
  }
  detail::DisjointSets sets(graph.node_count());
  for (std::size_t r = 0; r < graph.edge_count(); ++r)
    if (!drop[r]) sets.unite(graph.edges()[r].u, graph.edges()[r].v);
  return detail::label_components(sets, std::vector<bool>(graph.node_count(), false));
}

/// Components of the subgraph induced by the nodes not in `removed_nodes`.
inline Partition components_without_nodes(const Graph& graph,
                                          const std::vector<std::size_t>& removed_nodes) {
  std::vector<bool> drop(graph.node_count(), false);
  for (auto idx : removed_nodes) {
    if (idx >= graph.node_count())
      throw std::out_of_range("node index " + std::to_string(idx) + " out of range");
    drop[idx] = true;
  }
  detail::DisjointSets sets(graph.node_count());
  for (const auto& e : graph.edges())
    if (!drop[e.u] && !drop[e.v]) sets.unite(e.u, e.v);
  return detail::label_components(sets, drop);
}

inline bool is_connected(const Graph& graph) { return components_without_edges(graph).count == 1; }

/// Dense eigendecomposition of the Laplacian, shared by the pseudoinverse
/// and Laplacian powers. Eigenvalues below 1e-10 * lambda_max are treated
/// as zero (one per connected component).
struct LaplacianSpectrum {
  Vector eigenvalues;
  Matrix eigenvectors;
  double cutoff = 0.0;

  explicit LaplacianSpectrum(const Graph& graph) {
    const Matrix l = Matrix(laplacian(graph));
    Eigen::SelfAdjointEigenSolver<Matrix> eig(l);
    if (eig.info() != Eigen::Success)
      throw std::runtime_error("Laplacian eigendecomposition failed");
    eigenvalues = eig.eigenvalues();
    eigenvectors = eig.eigenvectors();
    const double lmax = eigenvalues.size() > 0 ? eigenvalues.maxCoeff() : 0.0;
    cutoff = 1e-10 * std::max(lmax, 1.0);
  }

  /// L^p for p >= 0 (p may be negative to request (L^+)^{-p}).
  Matrix power(int p) const {
    Vector scaled(eigenvalues.size());
    for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
      const double lam = eigenvalues[i];
      if (lam <= cutoff) {
        scaled[i] = (p == 0) ? 1.0 : 0.0;
      } else {
        scaled[i] = std::pow(lam, p);
      }
    }
    return eigenvectors * scaled.asDiagonal() * eigenvectors.transpose();
  }

  Matrix pinv_power(int p) const { return power(-p); }
};

/// (L^+)^p. Disconnected graphs are handled block-diagonally unless
/// `allow_disconnected` is false, in which case they are rejected.
inline Matrix laplacian_pinv_power(const Graph& graph, int p, bool allow_disconnected = true) {
  if (p < 1) throw std::invalid_argument("pseudoinverse power must be >= 1");
  if (!allow_disconnected && !is_connected(graph))
    throw std::invalid_argument("graph is disconnected");
  return LaplacianSpectrum(graph).pinv_power(p);
}

/// rows x cols lattice; node r*cols + c sits at coordinate (r, c) and is
/// joined to its Manhattan-distance-1 neighbours.
inline Graph grid_graph(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("grid dimensions must be positive");
  std::vector<Edge> edges;
  std::vector<std::vector<double>> coords;
  coords.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t id = r * cols + c;
      coords.push_back({static_cast<double>(r), static_cast<double>(c)});
      if (c + 1 < cols) edges.push_back({id, id + 1});
      if (r + 1 < rows) edges.push_back({id, id + cols});
    }
  }
  return Graph(rows * cols, std::move(edges), std::move(coords));
}

inline Graph path_graph(std::size_t n) {
  std::vector<Edge> edges;
  std::vector<std::vector<double>> coords;
  for (std::size_t i = 0; i < n; ++i) {
    coords.push_back({static_cast<double>(i)});
    if (i + 1 < n) edges.push_back({i, i + 1});
  }
  return Graph(n, std::move(edges), std::move(coords));
}

inline Graph cycle_graph(std::size_t n) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) edges.push_back({i, (i + 1) % n});
  return Graph(n, std::move(edges));
}

/// Subgraph induced by `keep` (in the given order); node i of the result is
/// keep[i]. Coordinates are carried over.
inline Graph induced_subgraph(const Graph& graph, const std::vector<std::size_t>& keep) {
  std::vector<long> position(graph.node_count(), -1);
  for (std::size_t i = 0; i < keep.size(); ++i) position[keep[i]] = static_cast<long>(i);
  std::vector<Edge> edges;
  for (const auto& e : graph.edges())
    if (position[e.u] >= 0 && position[e.v] >= 0)
      edges.push_back({static_cast<std::size_t>(position[e.u]),
                       static_cast<std::size_t>(position[e.v])});
  std::vector<std::vector<double>> coords;
  if (graph.has_coords())
    for (auto idx : keep) coords.push_back(graph.coords()[idx]);
  return Graph(keep.size(), std::move(edges), std::move(coords));
}

}  // namespace graphfission
