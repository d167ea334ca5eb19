#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "topoguard/numerics.hpp"

namespace topoguard::autodiff {

// Handle to a matrix recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

// Minimal reverse-mode tape over dense matrices.
//
// Values are computed eagerly when an op is recorded; backward() sweeps the
// tape once in reverse creation order. Higher-order derivatives are obtained
// by recording a gradient computation itself as ordinary ops (see the GCN
// inner step in pgr.hpp), so a single first-order sweep is enough.
class Tape {
 public:
  Var constant(DenseMatrix value) { return push(std::move(value), false, {}); }
  Var variable(DenseMatrix value) { return push(std::move(value), true, {}); }

  const DenseMatrix& value(Var v) const { return nodes_[v.id].value; }

  // Adjoint of `v` after backward(); a zero matrix if nothing flowed into it.
  DenseMatrix grad(Var v) const {
    const Node& n = nodes_[v.id];
    if (n.grad.size() == 0) return DenseMatrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  std::size_t size() const { return nodes_.size(); }

  Var matmul(Var a, Var b) {
    return record(value(a) * value(b), {a, b}, [a, b](Tape& t, const DenseMatrix& g) {
      if (t.needs_grad(a)) t.accumulate(a, g * t.value(b).transpose());
      if (t.needs_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
    });
  }

  Var transpose(Var a) {
    return record(value(a).transpose(), {a}, [a](Tape& t, const DenseMatrix& g) {
      t.accumulate(a, g.transpose());
    });
  }

  Var add(Var a, Var b) {
    require_same_shape(value(a), value(b), "tape add");
    return record(value(a) + value(b), {a, b}, [a, b](Tape& t, const DenseMatrix& g) {
      if (t.needs_grad(a)) t.accumulate(a, g);
      if (t.needs_grad(b)) t.accumulate(b, g);
    });
  }

  Var sub(Var a, Var b) {
    require_same_shape(value(a), value(b), "tape sub");
    return record(value(a) - value(b), {a, b}, [a, b](Tape& t, const DenseMatrix& g) {
      if (t.needs_grad(a)) t.accumulate(a, g);
      if (t.needs_grad(b)) t.accumulate(b, -g);
    });
  }

  Var scale(Var a, double s) {
    return record(value(a) * s, {a}, [a, s](Tape& t, const DenseMatrix& g) { t.accumulate(a, g * s); });
  }

  Var hadamard(Var a, Var b) {
    require_same_shape(value(a), value(b), "tape hadamard");
    return record(value(a).cwiseProduct(value(b)), {a, b}, [a, b](Tape& t, const DenseMatrix& g) {
      if (t.needs_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
      if (t.needs_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
    });
  }

  Var add_identity(Var a) {
    DenseMatrix out = value(a);
    out.diagonal().array() += 1.0;
    return record(std::move(out), {a}, [a](Tape& t, const DenseMatrix& g) { t.accumulate(a, g); });
  }

  // Column vector of row sums.
  Var row_sums(Var a) {
    return record(value(a).rowwise().sum(), {a}, [a](Tape& t, const DenseMatrix& g) {
      const auto cols = t.value(a).cols();
      t.accumulate(a, g.replicate(1, cols));
    });
  }

  Var power(Var a, double p) {
    return record(value(a).array().pow(p).matrix(), {a}, [a, p](Tape& t, const DenseMatrix& g) {
      t.accumulate(a, (g.array() * p * t.value(a).array().pow(p - 1.0)).matrix());
    });
  }

  // diag(v) * m for a column vector v.
  Var scale_rows(Var m, Var v) {
    const DenseMatrix& mv = value(m);
    const DenseMatrix& vv = value(v);
    if (vv.cols() != 1 || vv.rows() != mv.rows()) fail(ErrorCode::kShapeMismatch, "tape scale_rows");
    DenseMatrix out = vv.col(0).asDiagonal() * mv;
    return record(std::move(out), {m, v}, [m, v](Tape& t, const DenseMatrix& g) {
      if (t.needs_grad(m)) t.accumulate(m, t.value(v).col(0).asDiagonal() * g);
      if (t.needs_grad(v)) t.accumulate(v, g.cwiseProduct(t.value(m)).rowwise().sum());
    });
  }

  // m * diag(v) for a column vector v.
  Var scale_cols(Var m, Var v) {
    const DenseMatrix& mv = value(m);
    const DenseMatrix& vv = value(v);
    if (vv.cols() != 1 || vv.rows() != mv.cols()) fail(ErrorCode::kShapeMismatch, "tape scale_cols");
    DenseMatrix out = mv * vv.col(0).asDiagonal();
    return record(std::move(out), {m, v}, [m, v](Tape& t, const DenseMatrix& g) {
      if (t.needs_grad(m)) t.accumulate(m, g * t.value(v).col(0).asDiagonal());
      if (t.needs_grad(v)) t.accumulate(v, g.cwiseProduct(t.value(m)).colwise().sum().transpose());
    });
  }

  Var relu(Var a) {
    return record(value(a).cwiseMax(0.0), {a}, [a](Tape& t, const DenseMatrix& g) {
      t.accumulate(a, (t.value(a).array() > 0.0).select(g, 0.0).matrix());
    });
  }

  // g ⊙ 1[z > 0]. The indicator is piecewise constant, so only `g` receives
  // an adjoint. This is the ReLU derivative used when a backward pass is
  // itself recorded on the tape.
  Var relu_gate(Var g_in, Var z) {
    require_same_shape(value(g_in), value(z), "tape relu_gate");
    DenseMatrix out = (value(z).array() > 0.0).select(value(g_in), 0.0).matrix();
    return record(std::move(out), {g_in}, [g_in, z](Tape& t, const DenseMatrix& g) {
      t.accumulate(g_in, (t.value(z).array() > 0.0).select(g, 0.0).matrix());
    });
  }

  Var softmax_rows(Var z) {
    return record(topoguard::softmax_rows(value(z)), {z}, [z, self = nodes_.size()](
                                                             Tape& t, const DenseMatrix& g) {
      const DenseMatrix& p = t.nodes_[self].value;
      const Eigen::VectorXd inner = g.cwiseProduct(p).rowwise().sum();
      DenseMatrix gz = p.cwiseProduct(g - inner.replicate(1, p.cols()));
      t.accumulate(z, gz);
    });
  }

  // Mean clamped negative log-likelihood; a 1x1 result.
  Var nll(Var p, std::span<const int> targets, std::span<const std::size_t> nodes) {
    const DenseMatrix& pv = value(p);
    DenseMatrix out(1, 1);
    out(0, 0) = cross_entropy(pv, targets, nodes);
    std::vector<std::pair<std::size_t, int>> picks;
    picks.reserve(nodes.size());
    for (const std::size_t n : nodes) picks.emplace_back(n, targets[n]);
    const double inv = 1.0 / static_cast<double>(nodes.size());
    return record(std::move(out), {p}, [p, picks = std::move(picks), inv](Tape& t, const DenseMatrix& g) {
      const DenseMatrix& pv = t.value(p);
      DenseMatrix gp = DenseMatrix::Zero(pv.rows(), pv.cols());
      for (const auto& [node, cls] : picks) {
        const double prob = pv(static_cast<Eigen::Index>(node), cls);
        if (prob > kProbabilityFloor) gp(static_cast<Eigen::Index>(node), cls) -= g(0, 0) * inv / prob;
      }
      t.accumulate(p, gp);
    });
  }

  // Reverse sweep seeded with d(output)/d(output) = 1; output must be 1x1.
  void backward(Var output) {
    if (value(output).size() != 1) fail(ErrorCode::kShapeMismatch, "backward requires a scalar output");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[output.id].grad = DenseMatrix::Ones(1, 1);
    for (std::size_t i = output.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      // Ops only write adjoints of earlier nodes, so n.grad is stable here.
      n.backward(*this, n.grad);
    }
  }

 private:
  using Backward = std::function<void(Tape&, const DenseMatrix&)>;

  struct Node {
    DenseMatrix value;
    DenseMatrix grad;
    bool needs_grad = false;
    Backward backward;
  };

  Var push(DenseMatrix value, bool needs_grad, Backward back) {
    nodes_.push_back(Node{std::move(value), DenseMatrix(), needs_grad, std::move(back)});
    return Var{nodes_.size() - 1};
  }

  Var record(DenseMatrix value, std::initializer_list<Var> inputs, Backward back) {
    bool needs = false;
    for (const Var in : inputs) needs = needs || nodes_[in.id].needs_grad;
    return push(std::move(value), needs, needs ? std::move(back) : Backward{});
  }

  void accumulate(Var v, const DenseMatrix& g) {
    Node& n = nodes_[v.id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  std::vector<Node> nodes_;
};

}  // namespace topoguard::autodiff
