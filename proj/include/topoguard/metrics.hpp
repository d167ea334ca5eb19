#pragma once

#include <algorithm>
#include <cstddef>
#include <iterator>
#include <vector>

#include "topoguard/graph.hpp"

namespace topoguard {

struct TplReport {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double jaccard = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline TplReport report_from_counts(OverlapCounts c) {
  TplReport r{c.tp, c.fp, c.fn};
  const std::size_t uni = c.tp + c.fp + c.fn;
  if (uni > 0) r.jaccard = static_cast<double>(c.tp) / static_cast<double>(uni);
  if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  if (c.tp + c.fn > 0) r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  if (r.precision + r.recall > 0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

// Jaccard leakage of the attack graph against the private one; both empty
// counts as no leakage.
inline TplReport tpl(const EdgeSet& e_t, const EdgeSet& e_a) { return report_from_counts(overlap(e_t, e_a)); }

// Relative degradation; positive means the defended model is worse.
inline double accuracy_loss(double acc_before, double acc_after) {
  if (!(acc_before > 0)) fail(ErrorCode::kZeroBaseline, "accuracy_loss needs a positive baseline");
  return (acc_before - acc_after) / acc_before;
}

// Top-k node ids by degree, ties by ascending id. Isolated nodes are
// never ranked.
inline std::vector<std::size_t> top_degree_nodes(const std::vector<std::size_t>& degree, std::size_t k) {
  std::vector<std::size_t> ids;
  for (std::size_t v = 0; v < degree.size(); ++v) {
    if (degree[v] > 0) ids.push_back(v);
  }
  k = std::min(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end(),
                    [&](std::size_t a, std::size_t b) { return degree[a] != degree[b] ? degree[a] > degree[b] : a < b; });
  ids.resize(k);
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline std::vector<std::size_t> degrees_of(std::size_t n, const EdgeSet& edges) {
  std::vector<std::size_t> deg(n, 0);
  for (const Edge& e : edges) {
    if (e.j >= n) fail(ErrorCode::kDimensionMismatch, "edge endpoint out of range");
    ++deg[e.i];
    ++deg[e.j];
  }
  return deg;
}

// F1 of the attack graph's top-k degree nodes against the true graph's.
inline double influential_node_f1(const Graph& g_true, const EdgeSet& e_a, std::size_t k) {
  const std::size_t n = g_true.num_nodes();
  if (k > n) fail(ErrorCode::kInvalidConfig, "k exceeds node count");
  if (k == 0) return 0.0;
  const auto truth = top_degree_nodes(g_true.degrees(), k);
  const auto guess = top_degree_nodes(degrees_of(n, e_a), k);
  std::vector<std::size_t> common;
  std::set_intersection(truth.begin(), truth.end(), guess.begin(), guess.end(), std::back_inserter(common));
  if (common.empty()) return 0.0;
  const double p = static_cast<double>(common.size()) / static_cast<double>(guess.size());
  const double r = static_cast<double>(common.size()) / static_cast<double>(truth.size());
  return p + r > 0 ? 2.0 * p * r / (p + r) : 0.0;
}

}  // namespace topoguard
