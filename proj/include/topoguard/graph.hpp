#pragma once

#include <Eigen/SparseCore>

#include <algorithm>
#include <atomic>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "topoguard/error.hpp"
#include "topoguard/numerics.hpp"
#include "topoguard/rng.hpp"

namespace topoguard {

using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Edge {
  std::size_t i = 0;
  std::size_t j = 0;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

// Canonical set of unordered node pairs, stored as (i, j) with i < j.
class EdgeSet {
 public:
  using const_iterator = std::set<Edge>::const_iterator;

  EdgeSet() = default;
  EdgeSet(std::initializer_list<std::pair<std::size_t, std::size_t>> pairs) {
    for (const auto& [a, b] : pairs) insert(a, b);
  }

  static Edge canonical(std::size_t a, std::size_t b) {
    if (a == b) fail(ErrorCode::kInvalidGraph, "self pair (" + std::to_string(a) + "," + std::to_string(b) + ")");
    return a < b ? Edge{a, b} : Edge{b, a};
  }

  bool insert(std::size_t a, std::size_t b) { return edges_.insert(canonical(a, b)).second; }
  bool insert(Edge e) { return insert(e.i, e.j); }
  bool contains(std::size_t a, std::size_t b) const {
    return a != b && edges_.contains(a < b ? Edge{a, b} : Edge{b, a});
  }
  bool contains(Edge e) const { return contains(e.i, e.j); }

  std::size_t size() const { return edges_.size(); }
  bool empty() const { return edges_.empty(); }
  const_iterator begin() const { return edges_.begin(); }
  const_iterator end() const { return edges_.end(); }

  friend bool operator==(const EdgeSet&, const EdgeSet&) = default;

 private:
  std::set<Edge> edges_;
};

struct OverlapCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

inline OverlapCounts overlap(const EdgeSet& e_t, const EdgeSet& e_a) {
  OverlapCounts c;
  for (const Edge& e : e_a) {
    if (e_t.contains(e)) ++c.tp;
  }
  c.fp = e_a.size() - c.tp;
  c.fn = e_t.size() - c.tp;
  return c;
}

// Undirected node-classification graph with a dense 0/1 adjacency.
//
// Every access to the adjacency goes through adjacency(), which counts
// reads. Copies of a graph share the counter; with_adjacency() yields a
// different graph with a fresh one. The counter is how tests prove that
// attack and DP code paths never look at a private structure.
class Graph {
 public:
  Graph(DenseMatrix adjacency, DenseMatrix features, Labels labels, std::vector<bool> train_mask,
        int num_classes = 0)
      : adjacency_(std::move(adjacency)),
        features_(std::move(features)),
        labels_(std::move(labels)),
        train_mask_(std::move(train_mask)),
        num_classes_(num_classes),
        reads_(std::make_shared<std::atomic<std::uint64_t>>(0)) {
    validate_structure();
  }

  std::size_t num_nodes() const { return static_cast<std::size_t>(adjacency_.rows()); }
  std::size_t num_features() const { return static_cast<std::size_t>(features_.cols()); }
  int num_classes() const { return num_classes_; }

  const DenseMatrix& adjacency() const {
    reads_->fetch_add(1, std::memory_order_relaxed);
    return adjacency_;
  }
  std::uint64_t adjacency_reads() const { return reads_->load(std::memory_order_relaxed); }

  const DenseMatrix& features() const { return features_; }
  const Labels& labels() const { return labels_; }
  const std::vector<bool>& train_mask() const { return train_mask_; }

  NodeList train_nodes() const { return nodes_where(true); }
  NodeList test_nodes() const { return nodes_where(false); }

  EdgeSet edges() const {
    const DenseMatrix& a = adjacency();
    EdgeSet out;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < a.cols(); ++j) {
        if (a(i, j) != 0.0) out.insert(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      }
    }
    return out;
  }

  std::size_t num_edges() const {
    const DenseMatrix& a = adjacency();
    return static_cast<std::size_t>(a.sum() / 2.0 + 0.5);
  }

  std::vector<std::size_t> degrees() const {
    const DenseMatrix& a = adjacency();
    std::vector<std::size_t> deg(num_nodes());
    for (Eigen::Index i = 0; i < a.rows(); ++i) deg[static_cast<std::size_t>(i)] = static_cast<std::size_t>(a.row(i).sum() + 0.5);
    return deg;
  }

  // Same nodes, features, labels and train mask; a new edge structure.
  Graph with_adjacency(DenseMatrix adjacency) const {
    return Graph(std::move(adjacency), features_, labels_, train_mask_, num_classes_);
  }

  // Full invariant check used by loaders and trainers: structure plus at
  // least one labeled node.
  void validate() const {
    if (train_nodes().empty()) fail(ErrorCode::kInvalidGraph, "graph has no train nodes");
  }

 private:
  void validate_structure() {
    const auto n = adjacency_.rows();
    if (adjacency_.cols() != n) fail(ErrorCode::kInvalidGraph, "adjacency must be square, got " + shape_of(adjacency_));
    if (features_.rows() != n) fail(ErrorCode::kDimensionMismatch, "features rows != node count");
    if (static_cast<Eigen::Index>(labels_.size()) != n) fail(ErrorCode::kDimensionMismatch, "labels size != node count");
    if (static_cast<Eigen::Index>(train_mask_.size()) != n) fail(ErrorCode::kDimensionMismatch, "train mask size != node count");
    if (!features_.allFinite()) fail(ErrorCode::kNonFinite, "features contain NaN/Inf");
    for (Eigen::Index i = 0; i < n; ++i) {
      if (adjacency_(i, i) != 0.0) fail(ErrorCode::kInvalidGraph, "nonzero diagonal at " + std::to_string(i));
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double v = adjacency_(i, j);
        if (v != 0.0 && v != 1.0) fail(ErrorCode::kInvalidGraph, "adjacency entries must be 0/1");
        if (v != adjacency_(j, i)) fail(ErrorCode::kNonSymmetricInput, "adjacency not symmetric");
      }
    }
    int max_label = -1;
    for (const int l : labels_) {
      if (l < 0) fail(ErrorCode::kInvalidGraph, "negative label");
      max_label = std::max(max_label, l);
    }
    if (num_classes_ == 0) num_classes_ = max_label + 1;
    if (max_label >= num_classes_) fail(ErrorCode::kInvalidGraph, "label exceeds class count");
  }

  NodeList nodes_where(bool train) const {
    NodeList out;
    for (std::size_t i = 0; i < train_mask_.size(); ++i) {
      if (train_mask_[i] == train) out.push_back(i);
    }
    return out;
  }

  DenseMatrix adjacency_;
  DenseMatrix features_;
  Labels labels_;
  std::vector<bool> train_mask_;
  int num_classes_;
  std::shared_ptr<std::atomic<std::uint64_t>> reads_;
};

inline DenseMatrix adjacency_from_edges(std::size_t n, const EdgeSet& edges) {
  DenseMatrix a = DenseMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const Edge& e : edges) {
    if (e.j >= n) fail(ErrorCode::kDimensionMismatch, "edge endpoint out of range");
    a(static_cast<Eigen::Index>(e.i), static_cast<Eigen::Index>(e.j)) = 1.0;
    a(static_cast<Eigen::Index>(e.j), static_cast<Eigen::Index>(e.i)) = 1.0;
  }
  return a;
}

// D^{-1/2} (A + I) D^{-1/2} with D the degrees of A + I.
inline DenseMatrix normalize_adjacency(const DenseMatrix& a) {
  DenseMatrix s = a;
  s.diagonal().array() += 1.0;
  const Eigen::VectorXd inv_sqrt = s.rowwise().sum().array().sqrt().inverse();
  DenseMatrix out(s.rows(), s.cols());
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) out(i, j) = s(i, j) * inv_sqrt(i) * inv_sqrt(j);
  }
  // Exact symmetry: the product above is commutative per entry only up to
  // rounding order, so mirror the upper triangle.
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < s.cols(); ++j) out(j, i) = out(i, j);
  }
  return out;
}

inline DenseMatrix normalized_adjacency(const Graph& g) { return normalize_adjacency(g.adjacency()); }

inline SparseMatrix to_sparse(const DenseMatrix& m) { return m.sparseView(); }

// 1 - A off the diagonal; self pairs are never candidates.
inline DenseMatrix complement_of(const DenseMatrix& a) {
  DenseMatrix out = DenseMatrix::Ones(a.rows(), a.cols()) - a;
  out.diagonal().setZero();
  return out;
}

inline DenseMatrix complement_mask(const Graph& g) { return complement_of(g.adjacency()); }

// Induced subgraph on `nodes`, indexed in the given order.
struct Subgraph {
  Graph graph;
  NodeList nodes;  // local index -> original id
  EdgeSet edges;   // original ids
};

inline Subgraph induced_subgraph(const Graph& g, const NodeList& nodes) {
  const DenseMatrix& a = g.adjacency();
  const auto m = static_cast<Eigen::Index>(nodes.size());
  DenseMatrix sub_a = DenseMatrix::Zero(m, m);
  DenseMatrix sub_x(m, static_cast<Eigen::Index>(g.num_features()));
  Labels sub_y(nodes.size());
  std::vector<bool> sub_mask(nodes.size());
  EdgeSet edges;
  for (Eigen::Index p = 0; p < m; ++p) {
    const auto u = static_cast<Eigen::Index>(nodes[static_cast<std::size_t>(p)]);
    sub_x.row(p) = g.features().row(u);
    sub_y[static_cast<std::size_t>(p)] = g.labels()[static_cast<std::size_t>(u)];
    sub_mask[static_cast<std::size_t>(p)] = g.train_mask()[static_cast<std::size_t>(u)];
    for (Eigen::Index q = p + 1; q < m; ++q) {
      const auto v = static_cast<Eigen::Index>(nodes[static_cast<std::size_t>(q)]);
      if (a(u, v) != 0.0) {
        sub_a(p, q) = sub_a(q, p) = 1.0;
        edges.insert(static_cast<std::size_t>(u), static_cast<std::size_t>(v));
      }
    }
  }
  return Subgraph{Graph(std::move(sub_a), std::move(sub_x), std::move(sub_y), std::move(sub_mask), g.num_classes()),
                  nodes, std::move(edges)};
}

// BFS from `root`. Neighbors are visited in ascending id; when a component
// runs out the walk restarts from the lowest unvisited id. Nodes in
// `excluded` are never sampled.
inline Subgraph bfs_from(const Graph& g, std::size_t root, std::size_t target_size,
                         const std::vector<bool>& excluded = {}) {
  if (target_size < 1) fail(ErrorCode::kInvalidConfig, "bfs target_size must be >= 1");
  const std::size_t n = g.num_nodes();
  if (root >= n || (!excluded.empty() && excluded[root])) fail(ErrorCode::kInvalidConfig, "bfs root not available");
  const DenseMatrix& a = g.adjacency();
  std::vector<bool> visited(n, false);
  std::size_t available = n;
  if (!excluded.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      if (excluded[i]) {
        visited[i] = true;
        --available;
      }
    }
  }
  const std::size_t want = std::min(target_size, available);
  NodeList order;
  order.reserve(want);
  std::deque<std::size_t> queue;
  auto enqueue = [&](std::size_t v) {
    visited[v] = true;
    order.push_back(v);
    queue.push_back(v);
  };

  enqueue(root);
  std::size_t restart_cursor = 0;
  while (order.size() < want) {
    if (queue.empty()) {
      while (visited[restart_cursor]) ++restart_cursor;
      enqueue(restart_cursor);
      continue;
    }
    const std::size_t u = queue.front();
    queue.pop_front();
    const auto row = a.row(static_cast<Eigen::Index>(u));
    for (std::size_t v = 0; v < n && order.size() < want; ++v) {
      if (!visited[v] && row(static_cast<Eigen::Index>(v)) != 0.0) enqueue(v);
    }
  }
  return induced_subgraph(g, order);
}

// BFS sample from a root drawn uniformly (seeded) among non-excluded nodes.
inline Subgraph bfs_sample(const Graph& g, std::size_t target_size, std::uint64_t seed,
                           const std::vector<bool>& excluded = {}) {
  NodeList candidates;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    if (excluded.empty() || !excluded[i]) candidates.push_back(i);
  }
  if (candidates.empty()) fail(ErrorCode::kInvalidConfig, "bfs_sample: every node is excluded");
  Rng rng(derive_seed(seed, 0xBF5));
  return bfs_from(g, candidates[rng.index(candidates.size())], target_size, excluded);
}

inline std::size_t pair_count(std::size_t n) { return n < 2 ? 0 : n * (n - 1) / 2; }

}  // namespace topoguard
