#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "topoguard/data_io.hpp"
#include "topoguard/gnn.hpp"
#include "topoguard/graph.hpp"
#include "topoguard/rng.hpp"

namespace topoguard {

enum class Metric { kCosine, kChebyshev, kEuclidean };

inline constexpr Metric kAllMetrics[] = {Metric::kCosine, Metric::kChebyshev, Metric::kEuclidean};

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::kCosine: return "cosine";
    case Metric::kChebyshev: return "chebyshev";
    case Metric::kEuclidean: return "euclidean";
  }
  return "unknown";
}

inline Metric parse_metric(std::string_view s) {
  for (const Metric m : kAllMetrics) {
    if (to_string(m) == s) return m;
  }
  fail(ErrorCode::kInvalidConfig, "unknown metric '" + std::string(s) + "'");
}

struct AttackConfig {
  std::size_t k_a = 0;
  NodeList targets;  // V_T, ids as seen by the black box
  Metric metric = Metric::kCosine;
  double delta = 1e-4;
  std::uint64_t seed = 0;

  void check() const {
    if (!(delta > 0)) fail(ErrorCode::kInvalidConfig, "delta must be positive");
    if (k_a > pair_count(targets.size())) {
      fail(ErrorCode::kBudgetExceedsPairs, "k_a=" + std::to_string(k_a) + " exceeds " +
                                               std::to_string(pair_count(targets.size())) + " target pairs");
    }
  }
};

struct ScoredPair {
  Edge edge;
  double score = 0.0;
};

struct AttackResult {
  EdgeSet edges;
  std::vector<ScoredPair> scores;  // every candidate pair, in enumeration order
  std::uint64_t queries = 0;
};

// All unordered pairs of positions p < q in `nodes`.
inline std::vector<std::pair<std::size_t, std::size_t>> position_pairs(std::size_t count) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.reserve(pair_count(count));
  for (std::size_t p = 0; p < count; ++p) {
    for (std::size_t q = p + 1; q < count; ++q) out.emplace_back(p, q);
  }
  return out;
}

// Highest scores first, ties by ascending (i, j). Pairs in `excluded`
// never qualify.
inline EdgeSet top_k(const std::vector<ScoredPair>& scores, std::size_t k, const EdgeSet* excluded = nullptr) {
  std::vector<const ScoredPair*> pool;
  pool.reserve(scores.size());
  for (const ScoredPair& s : scores) {
    if (excluded == nullptr || !excluded->contains(s.edge)) pool.push_back(&s);
  }
  k = std::min(k, pool.size());
  const auto before = [](const ScoredPair* a, const ScoredPair* b) {
    if (a->score != b->score) return a->score > b->score;
    return a->edge < b->edge;
  };
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k), pool.end(), before);
  EdgeSet out;
  for (std::size_t r = 0; r < k; ++r) out.insert(pool[r]->edge);
  return out;
}

inline double distance(Eigen::Ref<const Eigen::RowVectorXd> a, Eigen::Ref<const Eigen::RowVectorXd> b, Metric m) {
  switch (m) {
    case Metric::kCosine: {
      const double na = a.norm();
      const double nb = b.norm();
      if (na == 0.0 || nb == 0.0) return 1.0;
      return 1.0 - a.dot(b) / (na * nb);
    }
    case Metric::kChebyshev: return (a - b).cwiseAbs().maxCoeff();
    case Metric::kEuclidean: return (a - b).norm();
  }
  return 0.0;
}

// Similarity = -distance per requested pair of rows.
inline std::vector<double> pairwise_similarity(const DenseMatrix& post,
                                               std::span<const std::pair<std::size_t, std::size_t>> pairs, Metric m) {
  std::vector<double> out;
  out.reserve(pairs.size());
  for (const auto& [p, q] : pairs) {
    out.push_back(-distance(post.row(static_cast<Eigen::Index>(p)), post.row(static_cast<Eigen::Index>(q)), m));
  }
  return out;
}

namespace attack_detail {

inline std::vector<ScoredPair> tag_pairs(const NodeList& nodes,
                                         std::span<const std::pair<std::size_t, std::size_t>> pairs,
                                         const std::vector<double>& scores) {
  std::vector<ScoredPair> out;
  out.reserve(pairs.size());
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    out.push_back(ScoredPair{EdgeSet::canonical(nodes[pairs[r].first], nodes[pairs[r].second]), scores[r]});
  }
  return out;
}

inline AttackResult finish(std::vector<ScoredPair> scores, std::size_t k, std::uint64_t queries) {
  AttackResult r;
  r.edges = top_k(scores, k);
  r.scores = std::move(scores);
  r.queries = queries;
  return r;
}

}  // namespace attack_detail

inline std::vector<ScoredPair> metric_scores(const DenseMatrix& post, const NodeList& targets, Metric m) {
  const auto pairs = position_pairs(targets.size());
  return attack_detail::tag_pairs(targets, pairs, pairwise_similarity(post, pairs, m));
}

inline AttackResult m_tia(const BlackBox& bb, const AttackConfig& cfg) {
  cfg.check();
  const std::uint64_t before = bb.queries();
  const DenseMatrix post = bb.query(cfg.targets);
  return attack_detail::finish(metric_scores(post, cfg.targets, cfg.metric), cfg.k_a, bb.queries() - before);
}

struct MetricResult {
  Metric metric;
  AttackResult result;
};

// The three single-metric variants from one posterior query.
inline std::vector<MetricResult> m_tia_all(const BlackBox& bb, const AttackConfig& cfg) {
  cfg.check();
  const std::uint64_t before = bb.queries();
  const DenseMatrix post = bb.query(cfg.targets);
  const std::uint64_t used = bb.queries() - before;
  std::vector<MetricResult> out;
  for (const Metric m : kAllMetrics) {
    out.push_back(MetricResult{m, attack_detail::finish(metric_scores(post, cfg.targets, m), cfg.k_a, used)});
  }
  return out;
}

inline constexpr std::size_t kPairFeatures = 8;
inline constexpr std::size_t kMinShadowEdges = 20;

// euclidean, cosine, chebyshev and correlation distances, then the sum and
// maximum of the entrywise product, then mean and standard deviation of the
// entrywise absolute difference.
inline Eigen::RowVectorXd pair_features(Eigen::Ref<const Eigen::RowVectorXd> a, Eigen::Ref<const Eigen::RowVectorXd> b) {
  Eigen::RowVectorXd f(kPairFeatures);
  f(0) = distance(a, b, Metric::kEuclidean);
  f(1) = distance(a, b, Metric::kCosine);
  f(2) = distance(a, b, Metric::kChebyshev);
  const Eigen::RowVectorXd ca = a.array() - a.mean();
  const Eigen::RowVectorXd cb = b.array() - b.mean();
  const double denom = ca.norm() * cb.norm();
  f(3) = denom == 0.0 ? 1.0 : 1.0 - ca.dot(cb) / denom;
  const Eigen::RowVectorXd prod = a.cwiseProduct(b);
  f(4) = prod.sum();
  f(5) = prod.maxCoeff();
  const Eigen::RowVectorXd diff = (a - b).cwiseAbs();
  f(6) = diff.mean();
  f(7) = std::sqrt(std::max(0.0, (diff.array() - f(6)).square().mean()));
  return f;
}

// One-hidden-layer link classifier on standardised pair features.
class LinkClassifier {
 public:
  struct Config {
    std::size_t hidden = 16;
    std::size_t epochs = 300;
    double lr = 0.01;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;
  };

  void fit(const DenseMatrix& features, const std::vector<int>& labels, const Config& cfg) {
    const auto n = features.rows();
    if (n == 0) fail(ErrorCode::kEmptyNodeSet, "link classifier needs samples");
    mean_ = features.colwise().mean();
    const DenseMatrix centered = features.rowwise() - mean_;
    scale_ = (centered.array().square().colwise().sum() / static_cast<double>(n)).sqrt().matrix();
    for (Eigen::Index k = 0; k < scale_.size(); ++k) {
      if (!(scale_(k) > 1e-12)) scale_(k) = 1.0;
    }
    const DenseMatrix z = standardise(features);

    const auto f = static_cast<Eigen::Index>(features.cols());
    const auto h = static_cast<Eigen::Index>(cfg.hidden);
    Rng rng(derive_seed(cfg.seed, 0xC71A));
    const auto glorot = [&](Eigen::Index rows, Eigen::Index cols) {
      const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
      DenseMatrix w(rows, cols);
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
      return w;
    };
    w1_ = glorot(f, h);
    b1_ = DenseMatrix::Zero(1, h);
    w2_ = glorot(h, 2);
    b2_ = DenseMatrix::Zero(1, 2);

    DenseMatrix onehot = DenseMatrix::Zero(n, 2);
    for (Eigen::Index i = 0; i < n; ++i) onehot(i, labels[static_cast<std::size_t>(i)]) = 1.0;
    AdamState s_w1, s_b1, s_w2, s_b2;
    const double inv = 1.0 / static_cast<double>(n);
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
      const DenseMatrix pre = (z * w1_).rowwise() + b1_.row(0);
      const DenseMatrix hid = pre.cwiseMax(0.0);
      const DenseMatrix p = softmax_rows((hid * w2_).rowwise() + b2_.row(0));
      const DenseMatrix dz2 = (p - onehot) * inv;
      const DenseMatrix g_w2 = hid.transpose() * dz2;
      const DenseMatrix g_b2 = dz2.colwise().sum();
      const DenseMatrix dh = (pre.array() > 0.0).select(dz2 * w2_.transpose(), 0.0).matrix();
      const DenseMatrix g_w1 = z.transpose() * dh;
      const DenseMatrix g_b1 = dh.colwise().sum();
      adam_step(w1_, g_w1, s_w1, cfg.lr, cfg.weight_decay);
      adam_step(b1_, g_b1, s_b1, cfg.lr, 0.0);
      adam_step(w2_, g_w2, s_w2, cfg.lr, cfg.weight_decay);
      adam_step(b2_, g_b2, s_b2, cfg.lr, 0.0);
    }
  }

  // Probability of the member class per row.
  Eigen::VectorXd member_probability(const DenseMatrix& features) const {
    const DenseMatrix z = standardise(features);
    const DenseMatrix hid = ((z * w1_).rowwise() + b1_.row(0)).cwiseMax(0.0);
    return softmax_rows((hid * w2_).rowwise() + b2_.row(0)).col(1);
  }

 private:
  DenseMatrix standardise(const DenseMatrix& features) const {
    return (features.rowwise() - mean_).array().rowwise() / scale_.array();
  }

  Eigen::RowVectorXd mean_;
  Eigen::RowVectorXd scale_;
  DenseMatrix w1_, b1_, w2_, b2_;
};

inline DenseMatrix pair_feature_matrix(const DenseMatrix& post,
                                       std::span<const std::pair<std::size_t, std::size_t>> pairs) {
  DenseMatrix out(static_cast<Eigen::Index>(pairs.size()), static_cast<Eigen::Index>(kPairFeatures));
  for (std::size_t r = 0; r < pairs.size(); ++r) {
    out.row(static_cast<Eigen::Index>(r)) =
        pair_features(post.row(static_cast<Eigen::Index>(pairs[r].first)), post.row(static_cast<Eigen::Index>(pairs[r].second)));
  }
  return out;
}

// Classifier-based attack. The shadow subgraph's node ids live in the
// black box's id space; its edges are adversary knowledge.
inline AttackResult c_tia(const BlackBox& bb, const Subgraph& shadow, const AttackConfig& cfg) {
  cfg.check();
  if (shadow.edges.size() < kMinShadowEdges) {
    fail(ErrorCode::kShadowTooSmall, "shadow graph has " + std::to_string(shadow.edges.size()) + " edges, need " +
                                         std::to_string(kMinShadowEdges));
  }
  const std::uint64_t before = bb.queries();
  const DenseMatrix shadow_post = bb.query(shadow.nodes);

  // Members: every shadow edge. Non-members: as many sampled non-edges.
  std::vector<std::pair<std::size_t, std::size_t>> train_pairs;
  std::vector<int> train_labels;
  std::unordered_map<std::size_t, std::size_t> position;
  for (std::size_t p = 0; p < shadow.nodes.size(); ++p) position.emplace(shadow.nodes[p], p);
  for (const Edge& e : shadow.edges) {
    train_pairs.emplace_back(position.at(e.i), position.at(e.j));
    train_labels.push_back(1);
  }
  const std::size_t m = shadow.nodes.size();
  const std::size_t non_edges = pair_count(m) - shadow.edges.size();
  const std::size_t want = std::min(shadow.edges.size(), non_edges);
  Rng rng(derive_seed(cfg.seed, 0xC7));
  EdgeSet negatives;
  while (negatives.size() < want) {
    const std::size_t p = rng.index(m);
    const std::size_t q = rng.index(m);
    if (p == q || shadow.edges.contains(shadow.nodes[p], shadow.nodes[q])) continue;
    if (negatives.insert(p, q)) {
      train_pairs.emplace_back(std::min(p, q), std::max(p, q));
      train_labels.push_back(0);
    }
  }

  LinkClassifier clf;
  LinkClassifier::Config lc;
  lc.seed = cfg.seed;
  clf.fit(pair_feature_matrix(shadow_post, train_pairs), train_labels, lc);

  const DenseMatrix post = bb.query(cfg.targets);
  const auto pairs = position_pairs(cfg.targets.size());
  const Eigen::VectorXd prob = clf.member_probability(pair_feature_matrix(post, pairs));
  const std::vector<double> scores(prob.data(), prob.data() + prob.size());
  return attack_detail::finish(attack_detail::tag_pairs(cfg.targets, pairs, scores), cfg.k_a, bb.queries() - before);
}

// ||P'(u) - P(u)||_1 / delta where P' perturbs every feature of v by delta.
inline double influence_score(const BlackBox& bb, const DenseMatrix& x, std::size_t u, std::size_t v, double delta) {
  if (u == v) fail(ErrorCode::kInvalidConfig, "influence_score needs u != v");
  if (!(delta > 0)) fail(ErrorCode::kInvalidConfig, "delta must be positive");
  const NodeList target{u};
  const DenseMatrix p = bb.query(&x, target);
  DenseMatrix shifted = x;
  shifted.row(static_cast<Eigen::Index>(v)).array() += delta;
  const DenseMatrix q = bb.query(&shifted, target);
  return (q - p).cwiseAbs().sum() / delta;
}

// Influence of every target on every target, one perturbed query per
// source node: entry (a, b) is the influence of targets[b] on targets[a].
inline DenseMatrix influence_matrix(const BlackBox& bb, const DenseMatrix& x, const NodeList& targets, double delta) {
  const auto t = static_cast<Eigen::Index>(targets.size());
  const DenseMatrix base = bb.query(&x, targets);
  DenseMatrix out = DenseMatrix::Zero(t, t);
  DenseMatrix shifted = x;
  for (Eigen::Index b = 0; b < t; ++b) {
    const auto v = static_cast<Eigen::Index>(targets[static_cast<std::size_t>(b)]);
    shifted.row(v) = x.row(v).array() + delta;
    const DenseMatrix moved = bb.query(&shifted, targets);
    shifted.row(v) = x.row(v);
    out.col(b) = (moved - base).cwiseAbs().rowwise().sum() / delta;
  }
  return out;
}

inline std::vector<ScoredPair> influence_scores(const BlackBox& bb, const DenseMatrix& x, const NodeList& targets,
                                                double delta) {
  const DenseMatrix inf = influence_matrix(bb, x, targets, delta);
  const auto pairs = position_pairs(targets.size());
  std::vector<double> scores;
  scores.reserve(pairs.size());
  for (const auto& [p, q] : pairs) {
    scores.push_back(inf(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(q)) +
                     inf(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(p)));
  }
  return attack_detail::tag_pairs(targets, pairs, scores);
}

inline AttackResult i_tia(const BlackBox& bb, const DenseMatrix& x, const AttackConfig& cfg) {
  cfg.check();
  const std::uint64_t before = bb.queries();
  auto scores = influence_scores(bb, x, cfg.targets, cfg.delta);
  return attack_detail::finish(std::move(scores), cfg.k_a, bb.queries() - before);
}

enum class BaseAttack { kMetric, kClassifier, kInfluence };

inline std::string_view to_string(BaseAttack b) {
  switch (b) {
    case BaseAttack::kMetric: return "m";
    case BaseAttack::kClassifier: return "c";
    case BaseAttack::kInfluence: return "i";
  }
  return "unknown";
}

struct PgrTiaResult {
  AttackResult result;
  EdgeSet round_one;  // the inferred replacement edges that were excluded
};

// Two-round refinement against a defended model. Base scores are
// deterministic, so round two reuses round one's ranking minus its top k_hat.
inline PgrTiaResult pgr_tia(const BlackBox& bb_hat, const DenseMatrix& x, const AttackConfig& cfg, std::size_t k_hat,
                            BaseAttack base, const Subgraph* shadow = nullptr) {
  cfg.check();
  const std::size_t total = pair_count(cfg.targets.size());
  if (k_hat > total) fail(ErrorCode::kBudgetExceedsPairs, "k_hat exceeds target pairs");
  if (k_hat + cfg.k_a > total) {
    fail(ErrorCode::kRefinementExhaustsCandidates,
         "k_hat + k_a = " + std::to_string(k_hat + cfg.k_a) + " exceeds " + std::to_string(total) + " pairs");
  }
  AttackResult first;
  switch (base) {
    case BaseAttack::kMetric: first = m_tia(bb_hat, cfg); break;
    case BaseAttack::kInfluence: first = i_tia(bb_hat, x, cfg); break;
    case BaseAttack::kClassifier:
      if (shadow == nullptr) fail(ErrorCode::kInvalidConfig, "classifier base needs a shadow graph");
      first = c_tia(bb_hat, *shadow, cfg);
      break;
  }
  PgrTiaResult out;
  out.round_one = top_k(first.scores, k_hat);
  out.result.edges = top_k(first.scores, cfg.k_a, &out.round_one);
  out.result.queries = first.queries;
  out.result.scores = std::move(first.scores);
  return out;
}

// Pair index in [0, C(n,2)) to (i, j), row-major over the upper triangle.
inline Edge unrank_pair(std::uint64_t index, std::size_t n) {
  std::size_t i = 0;
  std::uint64_t row = n - 1;
  while (index >= row) {
    index -= row;
    ++i;
    --row;
  }
  return Edge{i, i + 1 + static_cast<std::size_t>(index)};
}

// k distinct pairs uniformly at random (Floyd's algorithm).
inline EdgeSet random_baseline(std::size_t n, std::size_t k, std::uint64_t seed) {
  const std::uint64_t total = pair_count(n);
  if (k > total) fail(ErrorCode::kBudgetExceedsPairs, "k exceeds C(n,2)");
  Rng rng(derive_seed(seed, 0x4A4D));
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(k * 2);
  for (std::uint64_t j = total - k; j < total; ++j) {
    const std::uint64_t t = rng.index(j + 1);
    chosen.insert(chosen.contains(t) ? j : t);
  }
  std::vector<std::uint64_t> sorted(chosen.begin(), chosen.end());
  std::sort(sorted.begin(), sorted.end());
  EdgeSet out;
  for (const std::uint64_t p : sorted) out.insert(unrank_pair(p, n));
  return out;
}

// Random guess restricted to the target nodes, in the black box id space.
inline AttackResult random_attack(const AttackConfig& cfg) {
  cfg.check();
  AttackResult r;
  for (const Edge& e : random_baseline(cfg.targets.size(), cfg.k_a, cfg.seed)) {
    r.edges.insert(cfg.targets[e.i], cfg.targets[e.j]);
  }
  return r;
}

using PairScorer = std::function<double(std::size_t, std::size_t)>;

// Median-threshold membership accuracy over balanced member and
// non-member samples, averaged over `trials`.
inline double lmia_accuracy(const PairScorer& scorer, const Graph& g, std::size_t n_pairs, std::uint64_t seed,
                            std::size_t trials = 5) {
  if (n_pairs == 0 || trials == 0) fail(ErrorCode::kInvalidConfig, "lmia needs n_pairs and trials >= 1");
  const EdgeSet edges = g.edges();
  const std::vector<Edge> members_all(edges.begin(), edges.end());
  const std::size_t n = g.num_nodes();
  const std::size_t non_edges = pair_count(n) - members_all.size();
  if (members_all.size() < n_pairs || non_edges < n_pairs) {
    fail(ErrorCode::kInsufficientPairs, "need " + std::to_string(n_pairs) + " edges and non-edges, have " +
                                            std::to_string(members_all.size()) + " and " + std::to_string(non_edges));
  }
  double total = 0.0;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    Rng rng(derive_seed(seed, 0x1A1A + trial));
    std::vector<std::size_t> idx(members_all.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    for (std::size_t i = 0; i < n_pairs; ++i) std::swap(idx[i], idx[i + rng.index(idx.size() - i)]);
    std::vector<double> member_scores;
    for (std::size_t i = 0; i < n_pairs; ++i) {
      const Edge& e = members_all[idx[i]];
      member_scores.push_back(scorer(e.i, e.j));
    }
    EdgeSet negatives;
    while (negatives.size() < n_pairs) {
      const std::size_t a = rng.index(n);
      const std::size_t b = rng.index(n);
      if (a == b || edges.contains(a, b)) continue;
      negatives.insert(a, b);
    }
    std::vector<double> non_member_scores;
    for (const Edge& e : negatives) non_member_scores.push_back(scorer(e.i, e.j));

    std::vector<double> all = member_scores;
    all.insert(all.end(), non_member_scores.begin(), non_member_scores.end());
    std::sort(all.begin(), all.end());
    const double median = 0.5 * (all[n_pairs - 1] + all[n_pairs]);
    std::size_t correct = 0;
    for (const double s : member_scores) correct += s > median ? 1 : 0;
    for (const double s : non_member_scores) correct += s > median ? 0 : 1;
    total += static_cast<double>(correct) / static_cast<double>(2 * n_pairs);
  }
  return total / static_cast<double>(trials);
}

// Edge list `<stem>.edges` and score table `<stem>.scores.csv`.
inline void save_attack_result(const AttackResult& r, const std::filesystem::path& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  write_edge_list(dir / (stem + ".edges"), r.edges);
  auto out = io_detail::open_out(dir / (stem + ".scores.csv"));
  out << "i,j,score\n";
  for (const ScoredPair& s : r.scores) out << s.edge.i << ',' << s.edge.j << ',' << format_double(s.score) << '\n';
}

}  // namespace topoguard
