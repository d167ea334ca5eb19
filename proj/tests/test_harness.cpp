#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "topoguard/harness.hpp"

using namespace topoguard;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("topoguard_harness_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig small(const std::filesystem::path& out) {
  const ConfigFile f = ConfigFile::parse(R"(
name = "sbm-small"
attacks = ["m-tia", "c-tia", "i-tia", "pgr-tia", "random"]
defense = "pgr"
subgraphs = 2
subgraph_size = 24
seeds = [0, 1]
layers = 2

[sbm]
blocks = [30, 30]
p_in = 0.25
p_out = 0.02
feature_dim = 8
feature_signal = 0.8

[pgr]
k_hat_ratio = [0.5]
mu = 0.0
)");
  ExperimentConfig c = experiment_from(f);
  c.output = out.string();
  return c;
}

}  // namespace

TEST(ConfigFile, ParsesSectionsArraysAndComments) {
  const ConfigFile f = ConfigFile::parse(R"(
# comment
name = "x # not a comment"
seeds = [1, 2 ,3]
[pgr]
mu = 0.5   # trailing
)");
  EXPECT_EQ(f.text("name", ""), "x # not a comment");
  EXPECT_EQ(f.numbers("seeds", {}), (std::vector<double>{1, 2, 3}));
  EXPECT_EQ(f.number("pgr.mu", 0), 0.5);
  EXPECT_EQ(f.number("missing", 4.0), 4.0);
}

TEST(ConfigFile, ErrorsAreConfigErrors) {
  for (const char* bad : {"a = ", "novalue", "a = [1, 2", "[x\nb=1", "a = 1\na = 2", "a = \"open"}) {
    try {
      ConfigFile::parse(bad);
      FAIL() << bad;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig) << bad;
    }
  }
  try {
    experiment_from(ConfigFile::parse("attacks = [\"i-tia\"]\n[sbm]\nblocks = [4, 4]\nbogus = 1\n"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidConfig);
  }
  EXPECT_THROW(experiment_from(ConfigFile::parse("attacks = [\"x-tia\"]\n[sbm]\nblocks = [4, 4]\n")), Error);
  EXPECT_THROW(experiment_from(ConfigFile::parse("attacks = []\n[sbm]\nblocks = [4, 4]\n")), Error);
  EXPECT_THROW(experiment_from(ConfigFile::parse("seeds = []\n[sbm]\nblocks = [4, 4]\n")), Error);
}

TEST(Experiment, RowsHeaderAndInvariants) {
  const auto dir = scratch("rows");
  const ExperimentResult r = run_experiment(small(dir));
  EXPECT_TRUE(r.failures.empty());
  // 7 attack rows (three metric variants) per subgraph, seed and defense.
  EXPECT_EQ(r.rows.size(), 7u * 2 * 2 * 2);
  const auto lines = io_detail::read_lines(r.csv);
  EXPECT_EQ(lines.front(),
            "dataset,model,attack,defense,epsilon,k_hat_ratio,mu,seed,subgraph_id,tpl,f1,acc,acc_loss,queries,runtime_s");
  for (const ReportRow& row : r.rows) {
    EXPECT_GE(row.tpl, 0.0);
    EXPECT_LE(row.tpl, 1.0);
    EXPECT_GE(row.f1, 0.0);
    EXPECT_LE(row.f1, 1.0);
    EXPECT_GE(row.acc, 0.0);
    EXPECT_LE(row.acc, 1.0);
    EXPECT_EQ(row.model, "gcn-l2");
    // K_A = |E_T| makes F1 a function of Jaccard.
    EXPECT_NEAR(row.f1, 2 * row.tpl / (1 + row.tpl), 1e-12);
    if (row.defense == "none") {
      EXPECT_FALSE(row.k_hat_ratio.has_value());
      EXPECT_EQ(row.acc_loss, 0.0);
    } else {
      EXPECT_EQ(row.defense, "pgr");
      EXPECT_EQ(row.k_hat_ratio, 0.5);
    }
    if (row.attack == "random") {
      EXPECT_EQ(row.queries, 0u);
    }
    if (row.attack == "i-tia") {
      EXPECT_EQ(row.queries, 24u * 25u);
    }
  }
  EXPECT_EQ(read_report(r.csv).size(), r.rows.size());
}

TEST(Experiment, ByteIdenticalAcrossRunsAndThreadCounts) {
  const auto a = scratch("det_a");
  const auto b = scratch("det_b");
  const ExperimentResult first = run_experiment(small(a));
  ::setenv("TOPOGUARD_THREADS", "3", 1);
  const ExperimentResult second = run_experiment(small(b));
  ::unsetenv("TOPOGUARD_THREADS");
  EXPECT_EQ(slurp(first.csv), slurp(second.csv));
}

TEST(Experiment, FailuresCarryRowContext) {
  ExperimentConfig c = small(scratch("fail"));
  c.k_hat_ratio = {1000.0};
  const ExperimentResult r = run_experiment(c);
  ASSERT_EQ(r.failures.size(), 2u);
  EXPECT_NE(r.failures.front().find("seed=0/pgr eps="), std::string::npos);
  EXPECT_NE(r.failures.front().find("NoCandidate"), std::string::npos);
}

TEST(Experiment, AttackFailureKeepsOtherRows) {
  ExperimentConfig c = small(scratch("shadow"));
  c.defense = Defense::kNone;
  c.attacks = {"c-tia", "random"};
  c.subgraph_size = 50;
  c.seeds = {0};
  c.subgraphs = 1;
  const ExperimentResult r = run_experiment(c);
  ASSERT_EQ(r.failures.size(), 1u);
  EXPECT_NE(r.failures.front().find("subgraph=0/c-tia: ShadowTooSmall"), std::string::npos);
  ASSERT_EQ(r.rows.size(), 1u);
  EXPECT_EQ(r.rows.front().attack, "random");
}

TEST(Experiment, DpAndDensityAxes) {
  ExperimentConfig c = small(scratch("dp"));
  c.attacks = {"i-tia"};
  c.defense = Defense::kDp;
  c.epsilon = {1.0, 9.0};
  c.density = {0.5, 1.0};
  c.seeds = {0};
  c.subgraphs = 1;
  const ExperimentResult r = run_experiment(c);
  EXPECT_TRUE(r.failures.empty());
  EXPECT_EQ(r.rows.size(), 2u * (1 + 2));
  EXPECT_EQ(r.rows.front().dataset, "sbm-small@density=0.5");
  const auto series = plot_series(r.rows, "epsilon", "tpl");
  ASSERT_EQ(series.size(), 2u);
  EXPECT_EQ(series[0].points.size(), 2u);
  EXPECT_LT(series[0].points[0].first, series[0].points[1].first);
}

TEST(PlotData, AveragesAndSorts) {
  std::vector<ReportRow> rows(3);
  for (auto& r : rows) {
    r.dataset = "d";
    r.model = "gcn-l2";
    r.attack = "i-tia";
    r.defense = "pgr";
  }
  rows[0].mu = 0.5;
  rows[0].tpl = 0.2;
  rows[1].mu = 0.5;
  rows[1].tpl = 0.4;
  rows[1].seed = 1;
  rows[2].mu = 0.0;
  rows[2].tpl = 0.1;
  const auto dir = scratch("plot");
  write_report(rows, dir / "r.csv");
  const auto files = emit_plot_data(dir / "r.csv", "mu:tpl", dir / "plots");
  ASSERT_EQ(files.size(), 1u);
  EXPECT_EQ(files[0].filename(), "d_gcn-l2_i-tia_pgr.tpl_vs_mu.dat");
  EXPECT_EQ(io_detail::read_lines(files[0]), (std::vector<std::string>{"0 0.1", "0.5 0.30000000000000004"}));

  const auto one = plot_series({rows[2]}, "layers", "tpl");
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].points, (std::vector<std::pair<double, double>>{{2.0, 0.1}}));
  try {
    emit_plot_data(dir / "r.csv", "height:tpl", dir / "plots");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownAxis);
  }
}
