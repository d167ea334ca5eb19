#pragma once

#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "topoguard/graph.hpp"
#include "topoguard/numerics.hpp"
#include "topoguard/rng.hpp"

namespace topoguard {

struct GcnModel {
  std::vector<DenseMatrix> weights;  // W_0 ... W_{L-1}

  std::size_t depth() const { return weights.size(); }
  std::size_t input_dim() const { return weights.empty() ? 0 : static_cast<std::size_t>(weights.front().rows()); }
  std::size_t output_dim() const { return weights.empty() ? 0 : static_cast<std::size_t>(weights.back().cols()); }

  void check() const {
    if (weights.empty()) fail(ErrorCode::kShapeMismatch, "model has no layers");
    for (std::size_t l = 1; l < weights.size(); ++l) {
      if (weights[l].rows() != weights[l - 1].cols()) {
        fail(ErrorCode::kShapeMismatch, "layer " + std::to_string(l) + " input dim does not chain");
      }
    }
  }

  friend bool operator==(const GcnModel& a, const GcnModel& b) {
    if (a.weights.size() != b.weights.size()) return false;
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
      if (a.weights[l].rows() != b.weights[l].rows() || a.weights[l].cols() != b.weights[l].cols()) return false;
      if (a.weights[l] != b.weights[l]) return false;
    }
    return true;
  }
};

// Hidden widths per depth: one layer has none, two use {32}, three {64, 32}.
inline std::vector<std::size_t> default_hidden(std::size_t layers) {
  switch (layers) {
    case 1: return {};
    case 2: return {32};
    case 3: return {64, 32};
    default: fail(ErrorCode::kInvalidConfig, "layer count must be 1, 2 or 3");
  }
}

// Glorot-uniform initialisation, one derived stream per layer.
inline GcnModel make_model(std::size_t input_dim, const std::vector<std::size_t>& hidden, std::size_t output_dim,
                           std::uint64_t seed) {
  std::vector<std::size_t> dims{input_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(output_dim);
  GcnModel m;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const double limit = std::sqrt(6.0 / static_cast<double>(dims[l] + dims[l + 1]));
    Rng rng(derive_seed(seed, 0x61C0 + l));
    DenseMatrix w(static_cast<Eigen::Index>(dims[l]), static_cast<Eigen::Index>(dims[l + 1]));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
    m.weights.push_back(std::move(w));
  }
  return m;
}

// Intermediate values of one forward pass, kept for backprop.
struct ForwardCache {
  std::vector<DenseMatrix> inputs;  // H_0 ... H_{L-1}
  std::vector<DenseMatrix> pre;     // Z_0 ... Z_{L-1}
  DenseMatrix posteriors;
};

template <class Adj>
ForwardCache gcn_forward_cached(const GcnModel& m, const Adj& a_norm, const DenseMatrix& x) {
  m.check();
  if (a_norm.rows() != a_norm.cols() || a_norm.rows() != x.rows()) {
    fail(ErrorCode::kShapeMismatch, "adjacency/features row mismatch");
  }
  if (x.cols() != m.weights.front().rows()) {
    fail(ErrorCode::kShapeMismatch, "feature width " + std::to_string(x.cols()) + " != model input " +
                                        std::to_string(m.weights.front().rows()));
  }
  ForwardCache c;
  DenseMatrix h = x;
  for (std::size_t l = 0; l < m.depth(); ++l) {
    DenseMatrix hw = h * m.weights[l];
    DenseMatrix z = a_norm * hw;
    c.inputs.push_back(std::move(h));
    if (l + 1 < m.depth()) h = z.cwiseMax(0.0);
    c.pre.push_back(std::move(z));
  }
  c.posteriors = softmax_rows(c.pre.back());
  return c;
}

template <class Adj>
DenseMatrix gcn_forward(const GcnModel& m, const Adj& a_norm, const DenseMatrix& x) {
  return gcn_forward_cached(m, a_norm, x).posteriors;
}

struct LossAndGrad {
  double loss = 0.0;
  std::vector<DenseMatrix> grads;
  DenseMatrix posteriors;
};

// Cross-entropy over `nodes` and its gradient with respect to every weight.
template <class Adj>
LossAndGrad loss_and_grad(const GcnModel& m, const Adj& a_norm, const DenseMatrix& x, std::span<const int> targets,
                          std::span<const std::size_t> nodes) {
  ForwardCache c = gcn_forward_cached(m, a_norm, x);
  LossAndGrad out;
  out.loss = cross_entropy(c.posteriors, targets, nodes);

  DenseMatrix dz = DenseMatrix::Zero(c.posteriors.rows(), c.posteriors.cols());
  const double inv = 1.0 / static_cast<double>(nodes.size());
  for (const std::size_t node : nodes) {
    const auto r = static_cast<Eigen::Index>(node);
    dz.row(r) += c.posteriors.row(r) * inv;
    dz(r, targets[node]) -= inv;
  }
  out.grads.resize(m.depth());
  for (std::size_t l = m.depth(); l-- > 0;) {
    const DenseMatrix back = a_norm.transpose() * dz;
    out.grads[l] = c.inputs[l].transpose() * back;
    if (l == 0) break;
    const DenseMatrix dh = back * m.weights[l].transpose();
    dz = (c.pre[l - 1].array() > 0.0).select(dh, 0.0).matrix();
  }
  out.posteriors = std::move(c.posteriors);
  return out;
}

struct TrainConfig {
  std::size_t epochs = 100;
  double lr = 0.01;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  std::size_t layers = 2;

  void check() const {
    if (epochs < 1) fail(ErrorCode::kInvalidConfig, "epochs must be >= 1");
    if (!(lr > 0)) fail(ErrorCode::kInvalidConfig, "lr must be positive");
    (void)default_hidden(layers);
  }
};

struct TrainResult {
  GcnModel model;
  std::vector<double> losses;  // training loss before each epoch's update
};

// Full-batch Adam on the cross-entropy of `nodes`, starting from `init`.
template <class Adj>
TrainResult fit_from(GcnModel init, const Adj& a_norm, const DenseMatrix& x, std::span<const int> targets,
                     std::span<const std::size_t> nodes, const TrainConfig& cfg) {
  cfg.check();
  if (nodes.empty()) fail(ErrorCode::kEmptyNodeSet, "no training nodes");
  TrainResult r{std::move(init), {}};
  std::vector<AdamState> states(r.model.depth());
  r.losses.reserve(cfg.epochs);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    LossAndGrad lg = loss_and_grad(r.model, a_norm, x, targets, nodes);
    r.losses.push_back(lg.loss);
    for (std::size_t l = 0; l < r.model.depth(); ++l) {
      adam_step(r.model.weights[l], lg.grads[l], states[l], cfg.lr, cfg.weight_decay);
    }
  }
  return r;
}

template <class Adj>
TrainResult fit(const Adj& a_norm, const DenseMatrix& x, std::span<const int> targets,
                std::span<const std::size_t> nodes, int num_classes, const TrainConfig& cfg) {
  cfg.check();
  GcnModel init = make_model(static_cast<std::size_t>(x.cols()), default_hidden(cfg.layers),
                             static_cast<std::size_t>(num_classes), cfg.seed);
  return fit_from(std::move(init), a_norm, x, targets, nodes, cfg);
}

inline TrainResult fit(const Graph& g, const TrainConfig& cfg) {
  g.validate();
  const SparseMatrix a = to_sparse(normalized_adjacency(g));
  const NodeList nodes = g.train_nodes();
  return fit(a, g.features(), g.labels(), nodes, g.num_classes(), cfg);
}

inline GcnModel train(const Graph& g, const TrainConfig& cfg) { return fit(g, cfg).model; }

// Row argmax; ties go to the lowest class index.
inline Labels argmax_rows(const DenseMatrix& p) {
  Labels out(static_cast<std::size_t>(p.rows()));
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < p.cols(); ++c) {
      if (p(r, c) > p(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

inline DenseMatrix posteriors_on(const GcnModel& m, const Graph& g) {
  return gcn_forward(m, to_sparse(normalized_adjacency(g)), g.features());
}

// Predicted labels on non-train nodes, true labels echoed on train nodes.
inline Labels predict_labels(const GcnModel& m, const Graph& g) {
  Labels out = argmax_rows(posteriors_on(m, g));
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (g.train_mask()[i]) out[i] = g.labels()[i];
  }
  return out;
}

inline double accuracy_of(const DenseMatrix& posteriors, const Labels& labels, std::span<const std::size_t> nodes) {
  if (nodes.empty()) fail(ErrorCode::kEmptyNodeSet, "accuracy over an empty node set");
  const Labels pred = argmax_rows(posteriors);
  std::size_t hits = 0;
  for (const std::size_t n : nodes) hits += pred[n] == labels[n] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(nodes.size());
}

inline double accuracy(const GcnModel& m, const Graph& g, std::span<const std::size_t> nodes) {
  if (nodes.empty()) fail(ErrorCode::kEmptyNodeSet, "accuracy over an empty node set");
  return accuracy_of(posteriors_on(m, g), g.labels(), nodes);
}

// Query-only view of a trained model on a fixed hidden adjacency.
class BlackBox {
 public:
  BlackBox(GcnModel model, const Graph& g)
      : model_(std::move(model)), a_norm_(to_sparse(normalized_adjacency(g))), features_(g.features()) {
    model_.check();
  }

  BlackBox(const BlackBox& other)
      : model_(other.model_), a_norm_(other.a_norm_), features_(other.features_), queries_(other.queries()) {}
  BlackBox& operator=(const BlackBox&) = delete;

  std::size_t num_nodes() const { return static_cast<std::size_t>(features_.rows()); }
  std::size_t num_classes() const { return model_.output_dim(); }
  const DenseMatrix& features() const { return features_; }

  // Posterior rows for `nodes`, computed with `x_override` in place of the
  // training features when given.
  DenseMatrix query(const DenseMatrix* x_override, std::span<const std::size_t> nodes) const {
    const DenseMatrix* x = &features_;
    if (x_override != nullptr) {
      if (x_override->rows() != features_.rows() || x_override->cols() != features_.cols()) {
        fail(ErrorCode::kShapeMismatch, "query features " + shape_of(*x_override) + " vs " + shape_of(features_));
      }
      x = x_override;
    }
    const DenseMatrix p = gcn_forward(model_, a_norm_, *x);
    DenseMatrix out(static_cast<Eigen::Index>(nodes.size()), p.cols());
    for (std::size_t r = 0; r < nodes.size(); ++r) {
      if (nodes[r] >= num_nodes()) fail(ErrorCode::kShapeMismatch, "query node out of range");
      out.row(static_cast<Eigen::Index>(r)) = p.row(static_cast<Eigen::Index>(nodes[r]));
    }
    queries_.fetch_add(nodes.size(), std::memory_order_relaxed);
    return out;
  }

  DenseMatrix query(std::span<const std::size_t> nodes) const { return query(nullptr, nodes); }

  std::uint64_t queries() const { return queries_.load(std::memory_order_relaxed); }

 private:
  GcnModel model_;
  SparseMatrix a_norm_;
  DenseMatrix features_;
  mutable std::atomic<std::uint64_t> queries_{0};
};

}  // namespace topoguard
