#include <gtest/gtest.h>

#include <filesystem>

#include "topoguard/data_io.hpp"
#include "topoguard/pgr.hpp"

using namespace topoguard;

namespace {

Graph small_sbm(std::size_t n, std::uint64_t seed, double p_in = 0.35, double p_out = 0.05) {
  SbmSpec spec;
  spec.block_sizes = {n / 2, n - n / 2};
  spec.p_in = p_in;
  spec.p_out = p_out;
  spec.feature_dim = 5;
  spec.feature_signal = 0.6;
  spec.seed = seed;
  spec.train_fraction = 0.3;
  return generate_sbm(spec);
}

// L_gen after the inner steps, computed with the hand-written GCN gradient
// and the library normalisation; no tape involved.
double pipeline_loss(const GcnModel& theta, const DenseMatrix& a, const PgrProblem& prob, double eta,
                     std::size_t steps) {
  const DenseMatrix an = normalize_adjacency(a);
  GcnModel m = theta;
  for (std::size_t s = 0; s < steps; ++s) {
    const LossAndGrad lg = loss_and_grad(m, an, prob.features, prob.y_l, prob.train_nodes);
    for (std::size_t l = 0; l < m.depth(); ++l) m.weights[l] -= eta * lg.grads[l];
  }
  return cross_entropy(gcn_forward(m, an, prob.features), prob.y_p, prob.gen_nodes);
}

// Symmetric central differences: d/dh L(A + h (e_ij + e_ji)) = 2 * sym grad.
DenseMatrix pair_fd(const GcnModel& theta, const DenseMatrix& a, const PgrProblem& prob, double eta,
                    std::size_t steps, double h = 1e-5) {
  const auto n = a.rows();
  DenseMatrix out = DenseMatrix::Zero(n, n);
  DenseMatrix probe = a;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double orig = probe(i, j);
      probe(i, j) = probe(j, i) = orig + h;
      const double up = pipeline_loss(theta, probe, prob, eta, steps);
      probe(i, j) = probe(j, i) = orig - h;
      const double down = pipeline_loss(theta, probe, prob, eta, steps);
      probe(i, j) = probe(j, i) = orig;
      out(i, j) = out(j, i) = (up - down) / (4.0 * h);
    }
  }
  return out;
}

DenseMatrix off_diagonal(DenseMatrix m) {
  m.diagonal().setZero();
  return m;
}

struct Fixture {
  Graph g;
  GcnModel f;
  PgrProblem prob;
};

Fixture fixture(std::size_t n, std::uint64_t seed, std::size_t layers = 2) {
  Graph g = small_sbm(n, seed);
  TrainConfig tc;
  tc.seed = seed;
  tc.layers = layers;
  GcnModel f = train(g, tc);
  PgrProblem prob = make_problem(g, predict_labels(f, g));
  return Fixture{std::move(g), std::move(f), std::move(prob)};
}

}  // namespace

TEST(ConvergenceRule, ConstantLossStopsAfterWindow) {
  ConvergenceRule rule(0.01, 5);
  std::size_t steps = 0;
  while (!rule.observe(1.0)) ++steps;
  EXPECT_EQ(steps, 5u);
}

TEST(ConvergenceRule, LargeChangeResetsStreak) {
  ConvergenceRule rule(0.01, 3);
  EXPECT_FALSE(rule.observe(1.0));
  EXPECT_FALSE(rule.observe(1.0));
  EXPECT_FALSE(rule.observe(1.0));
  EXPECT_FALSE(rule.observe(2.0));
  EXPECT_FALSE(rule.observe(2.0));
  EXPECT_FALSE(rule.observe(2.0));
  EXPECT_TRUE(rule.observe(2.005));
}

TEST(MetaGradient, MatchesFiniteDifferencesOneStep) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const Fixture fx = fixture(8, seed);
    const DenseMatrix a = fx.g.adjacency();
    PgrConfig cfg;
    cfg.eta = 0.5;  // a large step makes the chain term visible
    const MetaGradient mg = meta_gradient(fx.f, a, fx.prob, cfg);
    const DenseMatrix fd = pair_fd(fx.f, a, fx.prob, cfg.eta, 1);
    EXPECT_LE(max_relative_error(off_diagonal(mg.grad), fd), 1e-4) << "seed " << seed;
  }
}

TEST(MetaGradient, MatchesFiniteDifferencesSeveralStepsAndDepths) {
  for (std::size_t layers : {1u, 3u}) {
    const Fixture fx = fixture(7, 10 + layers, layers);
    PgrConfig cfg;
    cfg.eta = 0.3;
    cfg.inner_steps = 3;
    const MetaGradient mg = meta_gradient(fx.f, fx.g.adjacency(), fx.prob, cfg);
    EXPECT_EQ(mg.steps, 3u);
    const DenseMatrix fd = pair_fd(fx.f, fx.g.adjacency(), fx.prob, cfg.eta, 3);
    EXPECT_LE(max_relative_error(off_diagonal(mg.grad), fd), 1e-4) << "layers " << layers;
  }
}

TEST(MetaGradient, ZeroEtaIsDirectGradient) {
  const Fixture fx = fixture(8, 4);
  PgrConfig cfg;
  cfg.eta = 0.0;
  const MetaGradient mg = meta_gradient(fx.f, fx.g.adjacency(), fx.prob, cfg);
  EXPECT_EQ(mg.model, fx.f);
  const DenseMatrix direct = pair_fd(fx.f, fx.g.adjacency(), fx.prob, 0.0, 0);
  EXPECT_LE(max_relative_error(off_diagonal(mg.grad), direct), 1e-4);
}

TEST(MetaGradient, SymmetricAndUpdatesTheta) {
  const Fixture fx = fixture(9, 5);
  const MetaGradient mg = meta_gradient(fx.f, fx.g.adjacency(), fx.prob, PgrConfig{});
  EXPECT_EQ(mg.grad, mg.grad.transpose());
  ASSERT_EQ(mg.model.depth(), fx.f.depth());
  for (std::size_t l = 0; l < fx.f.depth(); ++l) {
    const LossAndGrad lg =
        loss_and_grad(fx.f, normalized_adjacency(fx.g), fx.prob.features, fx.prob.y_l, fx.prob.train_nodes);
    EXPECT_LE((mg.model.weights[l] - (fx.f.weights[l] - 0.01 * lg.grads[l])).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(MetaGradient, FrozenNormalisationDiffers) {
  const Fixture fx = fixture(8, 6);
  PgrConfig frozen;
  frozen.freeze_normalization = true;
  const MetaGradient a = meta_gradient(fx.f, fx.g.adjacency(), fx.prob, PgrConfig{});
  const MetaGradient b = meta_gradient(fx.f, fx.g.adjacency(), fx.prob, frozen);
  EXPECT_GT((a.grad - b.grad).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_EQ(a.gen_loss, b.gen_loss);
}

TEST(SelectEdge, PicksMostNegativeAdmissible) {
  DenseMatrix mg = DenseMatrix::Zero(6, 6);
  mg(2, 5) = mg(5, 2) = -3.0;
  mg(1, 4) = mg(4, 1) = -1.0;
  const DenseMatrix comp = complement_of(DenseMatrix::Zero(6, 6));
  const Selection s = select_edge(mg, comp, DenseMatrix::Zero(6, 6), OverlapBudget{});
  EXPECT_EQ(s.edge, (Edge{2, 5}));
  EXPECT_EQ(s.score, -3.0);
}

TEST(SelectEdge, MaskedEntriesAreNeverSelected) {
  DenseMatrix mg = DenseMatrix::Constant(4, 4, 0.5);
  mg(0, 0) = -100.0;
  mg(0, 1) = mg(1, 0) = -10.0;  // private edge
  mg(2, 3) = mg(3, 2) = -9.0;   // already inserted
  mg(1, 2) = mg(2, 1) = 0.1;
  DenseMatrix a = DenseMatrix::Zero(4, 4);
  a(0, 1) = a(1, 0) = 1.0;
  DenseMatrix current = DenseMatrix::Zero(4, 4);
  current(2, 3) = current(3, 2) = 1.0;
  const Selection s = select_edge(mg, complement_of(a), current, OverlapBudget{});
  EXPECT_EQ(s.edge, (Edge{1, 2}));
  EXPECT_FALSE(s.in_private);
  // With overlap budget left the private edge becomes admissible.
  const Selection relaxed = select_edge(mg, complement_of(a), current, OverlapBudget{0, 1});
  EXPECT_EQ(relaxed.edge, (Edge{0, 1}));
  EXPECT_TRUE(relaxed.in_private);
  EXPECT_EQ(select_edge(mg, complement_of(a), current, OverlapBudget{1, 1}).edge, (Edge{1, 2}));
}

TEST(SelectEdge, TiesAndZeroScoresAndNoCandidate) {
  const DenseMatrix zero = DenseMatrix::Zero(4, 4);
  const DenseMatrix comp = complement_of(zero);
  EXPECT_EQ(select_edge(zero, comp, zero, OverlapBudget{}).edge, (Edge{0, 1}));
  DenseMatrix tie = zero;
  tie(1, 3) = tie(3, 1) = tie(0, 2) = tie(2, 0) = -1.0;
  EXPECT_EQ(select_edge(tie, comp, zero, OverlapBudget{}).edge, (Edge{0, 2}));
  const DenseMatrix complete = complement_of(zero);
  try {
    select_edge(zero, complement_of(complete), zero, OverlapBudget{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNoCandidate);
  }
  // nag mode: no mask at all.
  EXPECT_EQ(select_edge(tie, DenseMatrix(), zero, OverlapBudget{}).edge, (Edge{0, 2}));
}

TEST(SelectEdge, EdgeSetOverloadAgrees) {
  DenseMatrix mg = DenseMatrix::Constant(5, 5, 1.0);
  mg(0, 4) = mg(4, 0) = -2.0;
  mg(1, 3) = mg(3, 1) = -1.0;
  const DenseMatrix comp = complement_of(DenseMatrix::Zero(5, 5));
  EXPECT_EQ(select_edge(mg, comp, EdgeSet{{0, 4}}, OverlapBudget{}).edge, (Edge{1, 3}));
}

TEST(PgrRun, ZeroBudgetReturnsPretrainedEdgeless) {
  const Fixture fx = fixture(10, 7);
  PgrConfig cfg;
  const PgrOutput out = pgr_run(fx.g, fx.f, cfg);
  EXPECT_EQ(out.g_hat.num_edges(), 0u);
  EXPECT_EQ(out.model, out.theta_0);
  EXPECT_TRUE(out.insertion_log.empty());
}

TEST(PgrRun, DisjointCardinalityAndPreservedNodeData) {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Fixture fx = fixture(16, 20 + seed);
    PgrConfig cfg;
    cfg.k_hat = fx.g.num_edges();
    cfg.seed = seed;
    const PgrOutput out = pgr_run(fx.g, fx.f, cfg);
    const EdgeSet e_hat = out.g_hat.edges();
    EXPECT_EQ(e_hat.size(), cfg.k_hat);
    EXPECT_EQ(overlap(fx.g.edges(), e_hat).tp, 0u);
    EXPECT_EQ(out.g_hat.features(), fx.g.features());
    EXPECT_EQ(out.g_hat.labels(), fx.g.labels());
    EXPECT_EQ(out.g_hat.train_mask(), fx.g.train_mask());
    ASSERT_EQ(out.insertion_log.size(), cfg.k_hat);
    for (std::size_t i = 0; i < out.insertion_log.size(); ++i) EXPECT_EQ(out.insertion_log[i].iteration, i);
  }
}

TEST(PgrRun, OverlapCapHolds) {
  const Fixture fx = fixture(14, 31);
  for (double mu : {0.0, 0.25, 0.5, 1.0}) {
    PgrConfig cfg;
    cfg.k_hat = fx.g.num_edges();
    cfg.mu = mu;
    const PgrOutput out = pgr_run(fx.g, fx.f, cfg);
    const std::size_t shared = overlap(fx.g.edges(), out.g_hat.edges()).tp;
    EXPECT_EQ(shared, out.overlap);
    EXPECT_LE(shared, static_cast<std::size_t>(std::floor(mu * static_cast<double>(cfg.k_hat))));
  }
}

TEST(PgrRun, ReplayedIterationsChooseLoggedEdges) {
  const Fixture fx = fixture(12, 41);
  PgrConfig cfg;
  cfg.k_hat = 21;
  cfg.record_trace = true;
  const PgrOutput out = pgr_run(fx.g, fx.f, cfg);
  ASSERT_EQ(out.trace.size(), cfg.k_hat);
  const DenseMatrix comp = complement_mask(fx.g);
  DenseMatrix a_hat = DenseMatrix::Zero(12, 12);
  for (std::size_t it = 0; it < cfg.k_hat; ++it) {
    const MetaGradient mg = meta_gradient(out.trace[it], a_hat, fx.prob, cfg);
    const Selection s = select_edge(mg.grad, comp, a_hat, OverlapBudget{});
    EXPECT_EQ(s.edge, out.insertion_log[it].edge);
    EXPECT_EQ(s.score, out.insertion_log[it].score);
    if (it % 10 == 0) {
      const DenseMatrix fd = pair_fd(out.trace[it], a_hat, fx.prob, cfg.eta, 1);
      EXPECT_LE(max_relative_error(off_diagonal(mg.grad), fd), 1e-3) << "iteration " << it;
    }
    a_hat(static_cast<Eigen::Index>(s.edge.i), static_cast<Eigen::Index>(s.edge.j)) = 1.0;
    a_hat(static_cast<Eigen::Index>(s.edge.j), static_cast<Eigen::Index>(s.edge.i)) = 1.0;
  }
}

TEST(PgrRun, DeterministicAndNoCandidatePropagates) {
  const Fixture fx = fixture(10, 51);
  PgrConfig cfg;
  cfg.k_hat = 5;
  const PgrOutput a = pgr_run(fx.g, fx.f, cfg);
  const PgrOutput b = pgr_run(fx.g, fx.f, cfg);
  EXPECT_EQ(a.model, b.model);
  EXPECT_EQ(a.g_hat.edges(), b.g_hat.edges());

  cfg.k_hat = pair_count(10) - fx.g.num_edges() + 1;
  EXPECT_THROW(pgr_run(fx.g, fx.f, cfg), Error);
}

TEST(PgrRun, ConvergenceModeAndCapWarning) {
  const Fixture fx = fixture(10, 61);
  PgrConfig cfg;
  cfg.k_hat = 3;
  const PgrOutput conv = pgr_convergence_mode(fx.g, fx.f, cfg);
  EXPECT_EQ(conv.g_hat.num_edges(), 3u);
  EXPECT_TRUE(conv.warnings.empty());

  cfg.converge_tol = 0.0;
  cfg.converge_cap = 4;
  const PgrOutput capped = pgr_convergence_mode(fx.g, fx.f, cfg);
  EXPECT_EQ(capped.g_hat.num_edges(), 3u);
  ASSERT_EQ(capped.warnings.size(), 1u);
}

TEST(PgrRun, NagModeIgnoresPrivateEdges) {
  const Fixture fx = fixture(10, 71);
  PgrConfig cfg;
  cfg.k_hat = pair_count(10);
  cfg.nag_mode = true;
  const PgrOutput out = pgr_run(fx.g, fx.f, cfg);
  EXPECT_EQ(out.g_hat.num_edges(), pair_count(10));
}

TEST(PgrRun, PersistsGraphModelAndLog) {
  const Fixture fx = fixture(10, 81);
  PgrConfig cfg;
  cfg.k_hat = 4;
  const PgrOutput out = pgr_run(fx.g, fx.f, cfg);
  const auto dir = std::filesystem::temp_directory_path() / "topoguard_pgr_out";
  std::filesystem::remove_all(dir);
  save_pgr_output(out, dir);
  EXPECT_EQ(load_graph_dir(dir / "graph").edges(), out.g_hat.edges());
  EXPECT_EQ(load_model(dir / "model.pgrm"), out.model);
  const auto lines = io_detail::read_lines(dir / "insertion_log.csv");
  ASSERT_EQ(lines.size(), 5u);
  EXPECT_EQ(lines[0], "iteration,i,j,score");
}
