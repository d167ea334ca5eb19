#include <gtest/gtest.h>

#include "topoguard/metrics.hpp"
#include "topoguard/rng.hpp"

using namespace topoguard;

TEST(Tpl, IdentityDisjointAndEmpty) {
  const EdgeSet e{{0, 1}, {2, 3}};
  EXPECT_EQ(tpl(e, e).jaccard, 1.0);
  EXPECT_EQ(tpl(e, EdgeSet{{0, 2}}).jaccard, 0.0);
  const TplReport empty = tpl(EdgeSet{}, EdgeSet{});
  EXPECT_EQ(empty.jaccard, 0.0);
  EXPECT_EQ(empty.f1, 0.0);
}

TEST(Tpl, HandCounts) {
  const EdgeSet t{{0, 1}, {1, 2}, {2, 3}};
  const EdgeSet a{{0, 1}, {1, 2}, {0, 3}};
  const TplReport r = tpl(t, a);
  EXPECT_EQ(r.tp, 2u);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(r.fn, 1u);
  EXPECT_DOUBLE_EQ(r.jaccard, 0.5);
  EXPECT_DOUBLE_EQ(r.precision, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(r.f1, 2.0 / 3.0);
}

TEST(Tpl, SymmetricAndF1JaccardIdentity) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 4 + rng.index(10);
    const std::size_t k = 1 + rng.index(n);
    EdgeSet t;
    EdgeSet a;
    while (t.size() < k) {
      const std::size_t i = rng.index(n);
      const std::size_t j = rng.index(n);
      if (i != j) t.insert(i, j);
    }
    while (a.size() < k) {
      const std::size_t i = rng.index(n);
      const std::size_t j = rng.index(n);
      if (i != j) a.insert(i, j);
    }
    const TplReport r = tpl(t, a);
    EXPECT_EQ(r.jaccard, tpl(a, t).jaccard);
    EXPECT_NEAR(r.f1, 2 * r.jaccard / (1 + r.jaccard), 1e-12);
  }
}

TEST(AccuracyLoss, SignAndErrors) {
  EXPECT_EQ(accuracy_loss(0.8, 0.8), 0.0);
  EXPECT_NEAR(accuracy_loss(0.80, 0.76), 0.05, 1e-12);
  EXPECT_LT(accuracy_loss(0.80, 0.81), 0.0);
  try {
    accuracy_loss(0.0, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kZeroBaseline);
  }
}

TEST(InfluentialNodes, PerfectStarAndTies) {
  const EdgeSet star{{0, 1}, {0, 2}, {0, 3}, {0, 4}};
  const std::size_t n = 5;
  const Graph g(adjacency_from_edges(n, star), DenseMatrix::Zero(5, 1), Labels(n, 0), std::vector<bool>(n, true), 1);
  EXPECT_EQ(influential_node_f1(g, star, 1), 1.0);
  EXPECT_EQ(influential_node_f1(g, EdgeSet{}, 1), 0.0);
  EXPECT_EQ(influential_node_f1(g, EdgeSet{{3, 4}}, 1), 0.0);
  EXPECT_EQ(top_degree_nodes({2, 3, 3, 1}, 2), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(top_degree_nodes({1, 1, 1, 0}, 2), (std::vector<std::size_t>{0, 1}));
  EXPECT_THROW(influential_node_f1(g, star, 6), Error);
}
