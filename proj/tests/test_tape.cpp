#include <gtest/gtest.h>

#include <vector>

#include "topoguard/rng.hpp"
#include "topoguard/tape.hpp"

using namespace topoguard;
using autodiff::Tape;
using autodiff::Var;

namespace {

DenseMatrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  DenseMatrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

// Gradient of a scalar tape program wrt its single variable input.
template <class Build>
DenseMatrix tape_grad(const DenseMatrix& at, Build build) {
  Tape t;
  const Var x = t.variable(at);
  const Var out = build(t, x);
  t.backward(out);
  return t.grad(x);
}

template <class Build>
double tape_value(const DenseMatrix& at, Build build) {
  Tape t;
  const Var x = t.variable(at);
  return t.value(build(t, x))(0, 0);
}

template <class Build>
void expect_matches_fd(const DenseMatrix& at, Build build) {
  const DenseMatrix analytic = tape_grad(at, build);
  const DenseMatrix numeric = finite_diff([&](const DenseMatrix& m) { return tape_value(m, build); }, at, 1e-6);
  EXPECT_LE(max_relative_error(analytic, numeric), 1e-6);
}

Var sum_all(Tape& t, Var v) {
  const auto rows = t.value(v).rows();
  const auto cols = t.value(v).cols();
  const Var left = t.constant(DenseMatrix::Ones(1, rows));
  const Var right = t.constant(DenseMatrix::Ones(cols, 1));
  return t.matmul(t.matmul(left, v), right);
}

}  // namespace

TEST(Tape, MatmulTransposeHadamard) {
  const DenseMatrix b = random_matrix(3, 4, 2);
  const DenseMatrix w = random_matrix(4, 3, 3);
  expect_matches_fd(random_matrix(3, 3, 1), [&](Tape& t, Var x) {
    const Var y = t.matmul(t.transpose(x), t.constant(b));
    const Var z = t.hadamard(y, t.matmul(x, t.constant(b)));
    return sum_all(t, t.matmul(z, t.constant(w)));
  });
}

TEST(Tape, AddSubScaleIdentity) {
  expect_matches_fd(random_matrix(4, 4, 5), [](Tape& t, Var x) {
    const Var y = t.sub(t.add_identity(t.scale(x, 3.0)), t.transpose(x));
    return sum_all(t, t.hadamard(y, t.add(y, x)));
  });
}

TEST(Tape, DegreeNormalisationChain) {
  // Positive entries so the inverse square root is smooth.
  expect_matches_fd(random_matrix(5, 5, 9, 0.1, 1.0), [](Tape& t, Var a) {
    const Var s = t.add_identity(a);
    const Var d = t.power(t.row_sums(s), -0.5);
    const Var norm = t.scale_cols(t.scale_rows(s, d), d);
    return sum_all(t, t.hadamard(norm, norm));
  });
}

TEST(Tape, SoftmaxNllMatchesFiniteDifferences) {
  const std::vector<int> targets{2, 0, 1, 1};
  const std::vector<std::size_t> nodes{0, 1, 3};
  expect_matches_fd(random_matrix(4, 3, 13, -2.0, 2.0), [&](Tape& t, Var z) {
    return t.nll(t.softmax_rows(z), targets, nodes);
  });
}

TEST(Tape, ReluGateIsLinearInItsFirstArgument) {
  const DenseMatrix z = random_matrix(3, 3, 21);
  expect_matches_fd(random_matrix(3, 3, 17), [&](Tape& t, Var g) {
    const Var gated = t.relu_gate(g, t.constant(z));
    return sum_all(t, t.hadamard(gated, g));
  });
  expect_matches_fd(random_matrix(3, 3, 19), [](Tape& t, Var x) { return sum_all(t, t.relu(x)); });
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Tape t;
  const Var c = t.constant(DenseMatrix::Ones(2, 2));
  const Var x = t.variable(DenseMatrix::Ones(2, 2));
  const Var out = sum_all(t, t.hadamard(c, x));
  EXPECT_FALSE(t.needs_grad(c));
  t.backward(out);
  EXPECT_EQ(t.grad(c), DenseMatrix::Zero(2, 2));
  EXPECT_EQ(t.grad(x), DenseMatrix::Ones(2, 2));
}

TEST(Tape, BackwardNeedsScalar) {
  Tape t;
  const Var x = t.variable(DenseMatrix::Ones(2, 2));
  EXPECT_THROW(t.backward(x), Error);
}

TEST(Tape, SecondOrderThroughRecordedGradient) {
  // f(w) = <w*w, c>, g(w) = 2 w c recorded as ops, loss = sum(g * g).
  // d loss / dw = 8 w c^2.
  const DenseMatrix c = random_matrix(1, 3, 31);
  const DenseMatrix w0 = random_matrix(1, 3, 33);
  Tape t;
  const Var w = t.variable(w0);
  const Var g = t.scale(t.hadamard(w, t.constant(c)), 2.0);
  const Var out = sum_all(t, t.hadamard(g, g));
  t.backward(out);
  const DenseMatrix expected = 8.0 * w0.cwiseProduct(c).cwiseProduct(c);
  EXPECT_LE(max_relative_error(t.grad(w), expected), 1e-14);
}
