#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "topoguard/data_io.hpp"

using namespace topoguard;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("topoguard_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

ErrorCode code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorCode::kIo;
}

fs::path cora_dir() {
  if (const char* env = std::getenv("TOPOGUARD_CORA_DIR")) return env;
  return "data/cora";
}

}  // namespace

TEST(Planetoid, ToyFiles) {
  const fs::path d = scratch("toy");
  write(d / "toy.content", "p1\t1\t0\tA\np2\t0\t1\tB\n");
  write(d / "toy.cites", "p1\tp2\np2\tp1\np1\tp1\np1\tghost\n");
  const LoadedGraph lg = load_planetoid(d / "toy.content", d / "toy.cites");
  EXPECT_EQ(lg.graph.num_nodes(), 2u);
  EXPECT_EQ(lg.graph.num_edges(), 1u);
  EXPECT_EQ(lg.graph.num_classes(), 2);
  EXPECT_EQ(lg.graph.num_features(), 2u);
  EXPECT_EQ(lg.stats.cite_lines, 4u);
  EXPECT_EQ(lg.stats.duplicate_edges, 1u);
  EXPECT_EQ(lg.stats.dropped_self, 1u);
  EXPECT_EQ(lg.stats.dropped_unknown, 1u);
  EXPECT_EQ(lg.class_names, (std::vector<std::string>{"A", "B"}));
}

TEST(Planetoid, MalformedInputs) {
  const fs::path d = scratch("bad");
  write(d / "ragged.content", "a\t1\t0\tX\nb\t1\tY\n");
  write(d / "ok.cites", "");
  EXPECT_EQ(code_of([&] { load_planetoid(d / "ragged.content", d / "ok.cites"); }),
            ErrorCode::kInconsistentFeatureWidth);
  write(d / "short.content", "a\tX\n");
  EXPECT_EQ(code_of([&] { load_planetoid(d / "short.content", d / "ok.cites"); }), ErrorCode::kMalformedLine);
  write(d / "good.content", "a\t1\tX\nb\t0\tY\n");
  write(d / "three.cites", "a\tb\tc\n");
  EXPECT_EQ(code_of([&] { load_planetoid(d / "good.content", d / "three.cites"); }), ErrorCode::kMalformedLine);
}

TEST(Planetoid, CoraStatisticsWhenPresent) {
  const fs::path dir = cora_dir();
  if (!fs::exists(dir / "cora.content")) GTEST_SKIP() << "Cora files not present at " << dir;
  const LoadedGraph lg = load_planetoid(dir / "cora.content", dir / "cora.cites");
  EXPECT_EQ(lg.graph.num_nodes(), 2708u);
  EXPECT_EQ(lg.graph.num_features(), 1433u);
  EXPECT_EQ(lg.graph.num_classes(), 7);
  EXPECT_EQ(lg.stats.cite_lines, 5429u);
}

TEST(GraphDir, RoundTripIsIdentity) {
  SbmSpec spec;
  spec.block_sizes = {12, 9};
  spec.p_in = 0.4;
  spec.p_out = 0.05;
  spec.feature_dim = 5;
  spec.feature_signal = 0.6;
  spec.seed = 3;
  const Graph g = generate_sbm(spec);
  const fs::path d = scratch("roundtrip");
  save_graph_dir(g, d);
  const Graph back = load_graph_dir(d);
  EXPECT_EQ(back.adjacency(), g.adjacency());
  EXPECT_EQ(back.features(), g.features());
  EXPECT_EQ(back.labels(), g.labels());
  EXPECT_EQ(back.train_mask(), g.train_mask());
  EXPECT_EQ(back.num_classes(), g.num_classes());
}

TEST(GraphDir, ContractErrors) {
  const fs::path d = scratch("contract");
  write(d / "labels.txt", "0\n1\n0\n");
  write(d / "train_mask.txt", "1\n1\n0\n");
  write(d / "features.csv", "1,0\n0,1\n0.5,0.5\n");
  write(d / "edges.txt", "");
  const Graph edgeless = load_graph_dir(d);
  EXPECT_EQ(edgeless.num_edges(), 0u);
  EXPECT_EQ(edgeless.num_nodes(), 3u);

  write(d / "edges.txt", "2 1\n");
  EXPECT_EQ(code_of([&] { load_graph_dir(d); }), ErrorCode::kNonSymmetricInput);
  write(d / "edges.txt", "0 1\n");
  write(d / "train_mask.txt", "1\n0\n");
  EXPECT_EQ(code_of([&] { load_graph_dir(d); }), ErrorCode::kDimensionMismatch);
  write(d / "train_mask.txt", "1\n1\n0\n");
  write(d / "features.csv", "1,0\n0,1\n");
  EXPECT_EQ(code_of([&] { load_graph_dir(d); }), ErrorCode::kDimensionMismatch);
}

TEST(Sbm, DegenerateProbabilities) {
  SbmSpec spec;
  spec.block_sizes = {3, 3};
  spec.p_in = 1.0;
  spec.p_out = 0.0;
  const Graph tri = generate_sbm(spec);
  EXPECT_EQ(tri.edges(), (EdgeSet{{0, 1}, {0, 2}, {1, 2}, {3, 4}, {3, 5}, {4, 5}}));
  spec.p_in = 0.0;
  EXPECT_EQ(generate_sbm(spec).num_edges(), 0u);
}

TEST(Sbm, EdgeCountWithinThreeSigma) {
  SbmSpec spec;
  spec.block_sizes = {50, 50};
  spec.p_in = 0.2;
  spec.p_out = 0.01;
  spec.seed = 42;
  const Graph g = generate_sbm(spec);
  const double in_pairs = 2.0 * 50 * 49 / 2;
  const double mean = in_pairs * 0.2 + 2500 * 0.01;
  const double sd = std::sqrt(in_pairs * 0.2 * 0.8 + 2500 * 0.01 * 0.99);
  EXPECT_NEAR(mean, 515.0, 1e-9);
  EXPECT_LE(std::fabs(static_cast<double>(g.num_edges()) - mean), 3 * sd);
}

TEST(Sbm, DeterministicFeaturesAndStratifiedMask) {
  SbmSpec spec;
  spec.block_sizes = {40, 25, 5};
  spec.p_in = 0.1;
  spec.p_out = 0.01;
  spec.feature_dim = 4;
  spec.feature_signal = 0.8;
  spec.seed = 9;
  const Graph a = generate_sbm(spec);
  const Graph b = generate_sbm(spec);
  EXPECT_EQ(a.adjacency(), b.adjacency());
  EXPECT_EQ(a.features(), b.features());
  EXPECT_EQ(a.train_mask(), b.train_mask());
  std::vector<int> per_class(3, 0);
  for (std::size_t i = 0; i < a.num_nodes(); ++i) per_class[static_cast<std::size_t>(a.labels()[i])] += a.train_mask()[i];
  EXPECT_EQ(per_class, (std::vector<int>{4, 3, 1}));
  for (std::size_t i = 0; i < a.num_nodes(); ++i) {
    const auto hot = static_cast<Eigen::Index>(a.labels()[i] % 4);
    EXPECT_GE(a.features()(static_cast<Eigen::Index>(i), hot), 0.8);
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  const GcnModel m = make_model(7, {5}, 3, 11);
  const fs::path p = scratch("ckpt") / "m.pgrm";
  save_model(m, p);
  const GcnModel back = load_model(p);
  ASSERT_EQ(back.weights.size(), 2u);
  EXPECT_EQ(std::memcmp(back.weights[0].data(), m.weights[0].data(), sizeof(double) * 35), 0);
  EXPECT_EQ(back, m);
}

TEST(Checkpoint, SizeMatchesFormat) {
  const GcnModel m = make_model(1433, {32}, 7, 1);
  const std::string bytes = encode_model(m);
  const std::size_t header = 4 + 4 + 4 + 2 * 8;
  EXPECT_EQ(bytes.size(), header + 8 * (1433 * 32 + 32 * 7));
  EXPECT_EQ(bytes.substr(0, 4), "PGRM");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1);
}

TEST(Checkpoint, CorruptionIsDetected) {
  const std::string good = encode_model(make_model(3, {}, 2, 5));
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  EXPECT_EQ(code_of([&] { decode_model(bad_magic); }), ErrorCode::kBadMagic);
  std::string bad_version = good;
  bad_version[4] = 2;
  EXPECT_EQ(code_of([&] { decode_model(bad_version); }), ErrorCode::kVersionMismatch);
  EXPECT_EQ(code_of([&] { decode_model(good.substr(0, good.size() - 3)); }), ErrorCode::kTruncatedFile);
  EXPECT_EQ(code_of([&] { decode_model(good.substr(0, 10)); }), ErrorCode::kTruncatedFile);
}
