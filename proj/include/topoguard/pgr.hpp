#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "topoguard/data_io.hpp"
#include "topoguard/gnn.hpp"
#include "topoguard/graph.hpp"
#include "topoguard/tape.hpp"

namespace topoguard {

struct PgrConfig {
  std::size_t k_hat = 0;
  double mu = 0.0;
  double eta = 0.01;
  std::size_t inner_steps = 1;
  bool converge = false;  // replace inner_steps by the convergence rule
  double converge_tol = 0.01;
  std::size_t converge_window = 5;
  std::size_t converge_cap = 500;
  std::size_t pretrain_epochs = 100;
  TrainConfig train;  // optimiser settings and depth for the pretrained theta_0
  bool freeze_normalization = false;
  bool nag_mode = false;      // no complement mask against any private adjacency
  bool record_trace = false;  // keep theta before every iteration for replay
  std::uint64_t seed = 0;

  void check() const {
    if (!(0.0 <= mu && mu <= 1.0)) fail(ErrorCode::kInvalidConfig, "mu must lie in [0,1]");
    if (!(eta >= 0.0)) fail(ErrorCode::kInvalidConfig, "eta must be non-negative");
    if (!converge && inner_steps < 1) fail(ErrorCode::kInvalidConfig, "inner_steps must be >= 1");
    if (converge && (converge_window < 1 || converge_cap < 1)) fail(ErrorCode::kInvalidConfig, "bad convergence rule");
    if (pretrain_epochs < 1) fail(ErrorCode::kInvalidConfig, "pretrain_epochs must be >= 1");
  }
};

// Stops once |loss change| <= tol for `window` consecutive observations.
class ConvergenceRule {
 public:
  ConvergenceRule(double tol, std::size_t window) : tol_(tol), window_(window) {}

  bool observe(double loss) {
    if (seen_) streak_ = std::fabs(loss - previous_) <= tol_ ? streak_ + 1 : 0;
    seen_ = true;
    previous_ = loss;
    return streak_ >= window_;
  }

 private:
  double tol_;
  std::size_t window_;
  bool seen_ = false;
  double previous_ = 0.0;
  std::size_t streak_ = 0;
};

// Fixed inputs of the bi-level problem on one node set.
struct PgrProblem {
  DenseMatrix features;
  Labels y_l;          // indexed by node; read on train nodes only
  NodeList train_nodes;
  Labels y_p;          // indexed by node; read on gen nodes only
  NodeList gen_nodes;  // every non-train node
};

struct MetaGradient {
  DenseMatrix grad;  // symmetrised d L_gen / d A_hat
  GcnModel model;    // theta after the inner steps
  double gen_loss = 0.0;
  std::vector<double> train_losses;  // L_train before each inner step and at the end
  std::size_t steps = 0;
  bool cap_reached = false;
};

namespace pgr_detail {

using autodiff::Tape;
using autodiff::Var;

struct TapeForward {
  std::vector<Var> inputs;
  std::vector<Var> pre;
  Var posteriors;
};

inline TapeForward record_forward(Tape& t, Var a_norm, Var x, const std::vector<Var>& weights) {
  TapeForward f;
  Var h = x;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    f.inputs.push_back(h);
    const Var z = t.matmul(a_norm, t.matmul(h, weights[l]));
    f.pre.push_back(z);
    if (l + 1 < weights.size()) h = t.relu(z);
  }
  f.posteriors = t.softmax_rows(f.pre.back());
  return f;
}

// One plain gradient step on L_train, itself recorded on the tape so the
// outer sweep sees d theta_{i+1} / d A.
inline std::vector<Var> record_descent(Tape& t, Var a_t, const TapeForward& f, const std::vector<Var>& weights,
                                       Var targets, Var row_mask, double inv_n, double eta) {
  Var dz = t.scale(t.hadamard(t.sub(f.posteriors, targets), row_mask), inv_n);
  std::vector<Var> next(weights.size());
  for (std::size_t l = weights.size(); l-- > 0;) {
    const Var back = t.matmul(a_t, dz);
    const Var dw = t.matmul(t.transpose(f.inputs[l]), back);
    next[l] = t.sub(weights[l], t.scale(dw, eta));
    if (l == 0) break;
    dz = t.relu_gate(t.matmul(back, t.transpose(weights[l])), f.pre[l - 1]);
  }
  return next;
}

}  // namespace pgr_detail

// Meta-gradient of the generalisation loss with respect to the adjacency,
// differentiated through the degree normalisation and the unrolled inner
// descent. The diagonal of the result is not meaningful for edge choice
// and is masked downstream.
inline MetaGradient meta_gradient(const GcnModel& model, const DenseMatrix& a_hat, const PgrProblem& prob,
                                  const PgrConfig& cfg) {
  using namespace pgr_detail;
  model.check();
  if (prob.train_nodes.empty()) fail(ErrorCode::kEmptyNodeSet, "meta_gradient needs train nodes");
  if (prob.gen_nodes.empty()) fail(ErrorCode::kEmptyNodeSet, "meta_gradient needs non-train nodes");
  const auto n = a_hat.rows();
  const auto c = static_cast<Eigen::Index>(model.output_dim());

  Tape t;
  const Var a = t.variable(a_hat);
  const Var s = t.add_identity(a);
  Var d = t.power(t.row_sums(s), -0.5);
  if (cfg.freeze_normalization) d = t.constant(t.value(d));
  const Var a_norm = t.scale_cols(t.scale_rows(s, d), d);
  const Var a_t = t.transpose(a_norm);
  const Var x = t.constant(prob.features);

  DenseMatrix onehot = DenseMatrix::Zero(n, c);
  DenseMatrix mask = DenseMatrix::Zero(n, c);
  for (const std::size_t v : prob.train_nodes) {
    onehot(static_cast<Eigen::Index>(v), prob.y_l[v]) = 1.0;
    mask.row(static_cast<Eigen::Index>(v)).setOnes();
  }
  const Var targets = t.constant(std::move(onehot));
  const Var row_mask = t.constant(std::move(mask));
  const double inv_n = 1.0 / static_cast<double>(prob.train_nodes.size());

  std::vector<Var> weights;
  for (const DenseMatrix& w : model.weights) weights.push_back(t.constant(w));

  MetaGradient out;
  ConvergenceRule rule(cfg.converge_tol, cfg.converge_window);
  TapeForward f;
  for (std::size_t step = 0;; ++step) {
    f = record_forward(t, a_norm, x, weights);
    const double train_loss = cross_entropy(t.value(f.posteriors), prob.y_l, prob.train_nodes);
    if (!std::isfinite(train_loss)) fail(ErrorCode::kNonFinite, "inner training loss diverged");
    out.train_losses.push_back(train_loss);
    bool stop = false;
    if (cfg.converge) {
      stop = rule.observe(train_loss);
      if (!stop && step == cfg.converge_cap) {
        stop = true;
        out.cap_reached = true;
      }
    } else {
      stop = step == cfg.inner_steps;
    }
    if (stop) {
      out.steps = step;
      break;
    }
    weights = record_descent(t, a_t, f, weights, targets, row_mask, inv_n, cfg.eta);
  }

  const Var gen = t.nll(f.posteriors, prob.y_p, prob.gen_nodes);
  out.gen_loss = t.value(gen)(0, 0);
  t.backward(gen);
  const DenseMatrix g = t.grad(a);
  out.grad = 0.5 * (g + g.transpose());
  if (!out.grad.allFinite()) fail(ErrorCode::kNonFinite, "meta-gradient is not finite");
  for (const Var w : weights) out.model.weights.push_back(t.value(w));
  if (!std::isfinite(out.gen_loss)) fail(ErrorCode::kNonFinite, "generalisation loss is not finite");
  return out;
}

// Overlap allowance with the private edge set: cap = floor(mu * k_hat).
struct OverlapBudget {
  std::size_t used = 0;
  std::size_t cap = 0;

  static OverlapBudget for_run(double mu, std::size_t k_hat) {
    return OverlapBudget{0, static_cast<std::size_t>(std::floor(mu * static_cast<double>(k_hat) + 1e-9))};
  }
  bool allows_private() const { return used < cap; }
};

struct Selection {
  Edge edge;
  double score = 0.0;
  bool in_private = false;  // the pair is an edge of the masked graph
};

// Most negative admissible score, ties broken by ascending (j, k) in an
// upper-triangle scan. Pairs already in `current` and the diagonal are
// never admissible; pairs with comp_mask == 0 only while the overlap
// budget allows. An empty comp_mask admits every pair.
inline Selection select_edge(const DenseMatrix& mg, const DenseMatrix& comp_mask, const DenseMatrix& current,
                             const OverlapBudget& budget) {
  const auto n = mg.rows();
  if (mg.cols() != n || current.rows() != n || current.cols() != n ||
      (comp_mask.size() != 0 && (comp_mask.rows() != n || comp_mask.cols() != n))) {
    fail(ErrorCode::kShapeMismatch, "select_edge inputs must all be N x N");
  }
  const bool masked = comp_mask.size() != 0;
  const bool private_ok = budget.allows_private();
  std::optional<Selection> best;
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index k = j + 1; k < n; ++k) {
      if (current(j, k) != 0.0) continue;
      const bool in_private = masked && comp_mask(j, k) == 0.0;
      if (in_private && !private_ok) continue;
      const double score = mg(j, k);
      if (!best || score < best->score) {
        best = Selection{Edge{static_cast<std::size_t>(j), static_cast<std::size_t>(k)}, score, in_private};
      }
    }
  }
  if (!best) fail(ErrorCode::kNoCandidate, "no admissible candidate edge");
  return *best;
}

inline Selection select_edge(const DenseMatrix& mg, const DenseMatrix& comp_mask, const EdgeSet& current,
                             const OverlapBudget& budget) {
  return select_edge(mg, comp_mask, adjacency_from_edges(static_cast<std::size_t>(mg.rows()), current), budget);
}

struct InsertionRecord {
  std::size_t iteration = 0;
  Edge edge;
  double score = 0.0;
};

struct PgrOutput {
  Graph g_hat;
  GcnModel model;    // theta after the last iteration
  GcnModel theta_0;  // pretrained on the edgeless graph
  std::vector<InsertionRecord> insertion_log;
  std::vector<std::string> warnings;
  std::size_t overlap = 0;         // |E_hat & E| as seen through the mask
  std::vector<GcnModel> trace;     // theta before each iteration, if recorded
  std::vector<double> gen_losses;  // L_gen per iteration
};

inline PgrProblem make_problem(const Graph& g, const Labels& y_p) {
  return PgrProblem{g.features(), g.labels(), g.train_nodes(), y_p, g.test_nodes()};
}

inline GcnModel pretrain_edgeless(const PgrProblem& prob, int num_classes, const PgrConfig& cfg) {
  const auto n = prob.features.rows();
  const SparseMatrix identity = to_sparse(DenseMatrix::Identity(n, n));
  TrainConfig tc = cfg.train;
  tc.epochs = cfg.pretrain_epochs;
  tc.seed = derive_seed(cfg.seed, 0x9E0);
  return fit(identity, prob.features, prob.y_l, prob.train_nodes, num_classes, tc).model;
}

// Greedy synthesis of the replacement graph with its co-trained model.
// `comp_mask` is the complement of the structure to avoid, or empty.
inline PgrOutput pgr_synthesize(const Graph& g, const Labels& y_p, const DenseMatrix& comp_mask, const PgrConfig& cfg) {
  cfg.check();
  g.validate();
  const PgrProblem prob = make_problem(g, y_p);
  const auto n = static_cast<Eigen::Index>(g.num_nodes());
  if (cfg.k_hat > pair_count(g.num_nodes())) {
    fail(ErrorCode::kNoCandidate, "k_hat exceeds the number of node pairs");
  }

  DenseMatrix a_hat = DenseMatrix::Zero(n, n);
  GcnModel theta = pretrain_edgeless(prob, g.num_classes(), cfg);
  PgrOutput out{g.with_adjacency(DenseMatrix::Zero(n, n)), theta, theta, {}, {}, 0, {}, {}};
  OverlapBudget budget = OverlapBudget::for_run(cfg.mu, cfg.k_hat);
  std::size_t capped = 0;

  for (std::size_t it = 0; it < cfg.k_hat; ++it) {
    if (cfg.record_trace) out.trace.push_back(theta);
    MetaGradient mg = meta_gradient(theta, a_hat, prob, cfg);
    if (mg.cap_reached) ++capped;
    const Selection sel = select_edge(mg.grad, comp_mask, a_hat, budget);
    const auto i = static_cast<Eigen::Index>(sel.edge.i);
    const auto j = static_cast<Eigen::Index>(sel.edge.j);
    a_hat(i, j) = a_hat(j, i) = 1.0;
    if (sel.in_private) ++budget.used;
    out.insertion_log.push_back(InsertionRecord{it, sel.edge, sel.score});
    out.gen_losses.push_back(mg.gen_loss);
    theta = std::move(mg.model);
  }
  if (capped > 0) {
    out.warnings.push_back("inner loop hit the " + std::to_string(cfg.converge_cap) + "-step cap in " +
                           std::to_string(capped) + " of " + std::to_string(cfg.k_hat) + " iterations");
  }
  out.overlap = budget.used;
  out.g_hat = g.with_adjacency(std::move(a_hat));
  out.model = std::move(theta);
  return out;
}

// Full defense of graph `g` for the model `f` trained on it.
inline PgrOutput pgr_run(const Graph& g, const GcnModel& f, const PgrConfig& cfg) {
  const Labels y_p = predict_labels(f, g);
  const DenseMatrix comp = cfg.nag_mode ? DenseMatrix() : complement_mask(g);
  return pgr_synthesize(g, y_p, comp, cfg);
}

inline PgrOutput pgr_convergence_mode(const Graph& g, const GcnModel& f, PgrConfig cfg) {
  cfg.converge = true;
  return pgr_run(g, f, cfg);
}

inline void write_insertion_log(const std::vector<InsertionRecord>& log, const std::filesystem::path& path) {
  auto out = io_detail::open_out(path);
  out << "iteration,i,j,score\n";
  for (const InsertionRecord& r : log) {
    out << r.iteration << ',' << r.edge.i << ',' << r.edge.j << ',' << format_double(r.score) << '\n';
  }
}

// Graph dir under graph/, the model checkpoint and the insertion log.
inline void save_pgr_output(const PgrOutput& out, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_graph_dir(out.g_hat, dir / "graph");
  save_model(out.model, dir / "model.pgrm");
  write_insertion_log(out.insertion_log, dir / "insertion_log.csv");
}

}  // namespace topoguard
