#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "topoguard/error.hpp"

namespace topoguard {

// Row-major dense matrix in double precision. The meta-gradient chain is
// too delicate for single precision.
using DenseMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Labels = std::vector<int>;
using NodeList = std::vector<std::size_t>;

inline constexpr double kProbabilityFloor = 1e-12;

inline std::string shape_of(const DenseMatrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline void require_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* where) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    fail(ErrorCode::kShapeMismatch, std::string(where) + ": " + shape_of(a) + " vs " + shape_of(b));
  }
}

inline bool all_finite(const DenseMatrix& m) { return m.allFinite(); }

// Row-wise softmax with max subtraction.
inline DenseMatrix softmax_rows(const DenseMatrix& m) {
  DenseMatrix out(m.rows(), m.cols());
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double peak = m.row(r).maxCoeff();
    double total = 0.0;
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double e = std::exp(m(r, c) - peak);
      out(r, c) = e;
      total += e;
    }
    out.row(r) /= total;
  }
  return out;
}

// Mean negative log-likelihood of `targets` over `nodes`.
inline double cross_entropy(const DenseMatrix& posteriors, std::span<const int> targets,
                            std::span<const std::size_t> nodes) {
  if (nodes.empty()) fail(ErrorCode::kEmptyNodeSet, "cross_entropy over an empty node set");
  double total = 0.0;
  for (const std::size_t node : nodes) {
    const int target = targets[node];
    if (target < 0 || target >= posteriors.cols()) {
      fail(ErrorCode::kShapeMismatch, "cross_entropy target out of range");
    }
    total -= std::log(std::max(posteriors(static_cast<Eigen::Index>(node), target), kProbabilityFloor));
  }
  return total / static_cast<double>(nodes.size());
}

struct AdamState {
  DenseMatrix first_moment;
  DenseMatrix second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_shape(Eigen::Index rows, Eigen::Index cols) {
    AdamState s;
    s.first_moment = DenseMatrix::Zero(rows, cols);
    s.second_moment = DenseMatrix::Zero(rows, cols);
    return s;
  }
};

// One bias-corrected Adam update. Weight decay is an L2 term folded into the
// gradient before the moment estimates.
inline void adam_step(DenseMatrix& param, const DenseMatrix& grad, AdamState& state, double lr,
                      double weight_decay) {
  require_same_shape(param, grad, "adam_step");
  if (state.first_moment.size() == 0) state = AdamState::for_shape(param.rows(), param.cols());
  require_same_shape(param, state.first_moment, "adam_step moments");

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (Eigen::Index i = 0; i < param.size(); ++i) {
    const double g = grad.data()[i] + weight_decay * param.data()[i];
    double& m = state.first_moment.data()[i];
    double& v = state.second_moment.data()[i];
    m = state.beta1 * m + (1.0 - state.beta1) * g;
    v = state.beta2 * v + (1.0 - state.beta2) * g * g;
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    param.data()[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
  }
}

// Central-difference gradient of a scalar function. This is the ground truth
// every analytic gradient in the library is checked against.
template <class LossFn>
DenseMatrix finite_diff(LossFn&& loss_fn, const DenseMatrix& at, double h) {
  if (!(h > 0)) fail(ErrorCode::kInvalidConfig, "finite_diff step must be positive");
  DenseMatrix grad(at.rows(), at.cols());
  DenseMatrix probe = at;
  for (Eigen::Index i = 0; i < at.size(); ++i) {
    const double original = probe.data()[i];
    probe.data()[i] = original + h;
    const double up = loss_fn(static_cast<const DenseMatrix&>(probe));
    probe.data()[i] = original - h;
    const double down = loss_fn(static_cast<const DenseMatrix&>(probe));
    probe.data()[i] = original;
    grad.data()[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

// max |a-b| / max(|a|,|b|) over entries where either side exceeds `floor`.
inline double max_relative_error(const DenseMatrix& analytic, const DenseMatrix& numeric,
                                 double floor = 1e-8) {
  require_same_shape(analytic, numeric, "max_relative_error");
  double worst = 0.0;
  for (Eigen::Index i = 0; i < analytic.size(); ++i) {
    const double a = analytic.data()[i];
    const double n = numeric.data()[i];
    const double scale = std::max(std::fabs(a), std::fabs(n));
    if (scale <= floor) continue;
    worst = std::max(worst, std::fabs(a - n) / scale);
  }
  return worst;
}

}  // namespace topoguard
