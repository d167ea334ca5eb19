#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "topoguard/data_io.hpp"
#include "topoguard/gnn.hpp"
#include "topoguard/graph.hpp"
#include "topoguard/pgr.hpp"
#include "topoguard/rng.hpp"

namespace topoguard {

enum class Mechanism { kEdgeRand, kLapEdge };

inline std::string_view to_string(Mechanism m) { return m == Mechanism::kEdgeRand ? "edge-rand" : "lap-edge"; }

inline Mechanism parse_mechanism(std::string_view s) {
  if (s == "edge-rand" || s == "edge_rand") return Mechanism::kEdgeRand;
  if (s == "lap-edge" || s == "lap_edge") return Mechanism::kLapEdge;
  fail(ErrorCode::kInvalidConfig, "unknown mechanism '" + std::string(s) + "'");
}

struct DpConfig {
  Mechanism mechanism = Mechanism::kEdgeRand;
  double epsilon = 1.0;
  double delta = 0.0;
  double epsilon_split = 0.1;  // LapEdge share spent on the edge count
  std::uint64_t seed = 0;

  void check() const {
    if (!(epsilon > 0) || !std::isfinite(epsilon)) fail(ErrorCode::kInvalidConfig, "epsilon must be positive");
    if (!(delta >= 0)) fail(ErrorCode::kInvalidConfig, "delta must be non-negative");
    if (!(epsilon_split > 0 && epsilon_split < 1)) fail(ErrorCode::kInvalidConfig, "epsilon_split must lie in (0,1)");
  }
};

struct DpRelease {
  DenseMatrix a_dp;
  Mechanism mechanism = Mechanism::kEdgeRand;
  double epsilon = 0.0;
  double delta = 0.0;
  std::uint64_t seed = 0;
};

inline double flip_probability(double epsilon) { return 1.0 / (1.0 + std::exp(epsilon)); }

namespace dp_detail {

inline constexpr std::uint64_t kFlipStream = 0xED6E;
inline constexpr std::uint64_t kNoiseStream = 0x1A9E;
inline constexpr std::uint64_t kCountStream = 0xC0A7;

// Visits every upper-triangle entry with its row-major pair index.
template <class F>
void for_each_pair(Eigen::Index n, F&& f) {
  std::uint64_t idx = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) f(i, j, idx++);
  }
}

}  // namespace dp_detail

// Whether pair `index` is flipped; schedule-independent per index.
inline bool edge_rand_flips(std::uint64_t seed, std::uint64_t index, double p_flip) {
  return counter_uniform(derive_seed(seed, dp_detail::kFlipStream), index) < p_flip;
}

inline double lap_edge_noise(std::uint64_t seed, std::uint64_t index, double scale) {
  return laplace_from_uniform(counter_uniform(derive_seed(seed, dp_detail::kNoiseStream), index), scale);
}

// Randomised response on every upper-triangle bit.
inline DpRelease edge_rand(const Graph& g, const DpConfig& cfg) {
  cfg.check();
  if (cfg.mechanism != Mechanism::kEdgeRand) fail(ErrorCode::kInvalidConfig, "edge_rand needs mechanism edge-rand");
  const DenseMatrix& a = g.adjacency();
  const double p = flip_probability(cfg.epsilon);
  DenseMatrix out = DenseMatrix::Zero(a.rows(), a.cols());
  dp_detail::for_each_pair(a.rows(), [&](Eigen::Index i, Eigen::Index j, std::uint64_t idx) {
    const bool bit = a(i, j) != 0.0;
    if (bit != edge_rand_flips(cfg.seed, idx, p)) out(i, j) = out(j, i) = 1.0;
  });
  return DpRelease{std::move(out), cfg.mechanism, cfg.epsilon, cfg.delta, cfg.seed};
}

// Laplace noise on the edge count and on every entry; the noisy count of
// largest entries become edges, ties by pair index.
inline DpRelease lap_edge(const Graph& g, const DpConfig& cfg) {
  cfg.check();
  if (cfg.mechanism != Mechanism::kLapEdge) fail(ErrorCode::kInvalidConfig, "lap_edge needs mechanism lap-edge");
  const DenseMatrix& a = g.adjacency();
  const auto n = a.rows();
  const double eps1 = cfg.epsilon_split * cfg.epsilon;
  const double eps2 = cfg.epsilon - eps1;
  const std::uint64_t total = pair_count(static_cast<std::size_t>(n));

  double count = 0.0;
  std::vector<double> noisy(total);
  dp_detail::for_each_pair(n, [&](Eigen::Index i, Eigen::Index j, std::uint64_t idx) {
    count += a(i, j);
    noisy[idx] = a(i, j) + lap_edge_noise(cfg.seed, idx, 1.0 / eps2);
  });
  const double u = counter_uniform(derive_seed(cfg.seed, dp_detail::kCountStream), 0);
  const double k_noisy = std::round(count + laplace_from_uniform(u, 1.0 / eps1));
  const auto k = static_cast<std::size_t>(std::clamp(k_noisy, 0.0, static_cast<double>(total)));

  std::vector<std::uint64_t> order(total);
  std::iota(order.begin(), order.end(), std::uint64_t{0});
  const auto before = [&](std::uint64_t x, std::uint64_t y) { return noisy[x] != noisy[y] ? noisy[x] > noisy[y] : x < y; };
  std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(), before);
  std::vector<bool> keep(total, false);
  for (std::size_t r = 0; r < k; ++r) keep[order[r]] = true;

  DenseMatrix out = DenseMatrix::Zero(n, n);
  dp_detail::for_each_pair(n, [&](Eigen::Index i, Eigen::Index j, std::uint64_t idx) {
    if (keep[idx]) out(i, j) = out(j, i) = 1.0;
  });
  return DpRelease{std::move(out), cfg.mechanism, cfg.epsilon, cfg.delta, cfg.seed};
}

inline DpRelease release(const Graph& g, const DpConfig& cfg) {
  return cfg.mechanism == Mechanism::kEdgeRand ? edge_rand(g, cfg) : lap_edge(g, cfg);
}

struct DpPgrOutput {
  DpRelease release;
  GcnModel f_dp;  // trained on the released structure
  PgrOutput pgr;
  std::uint64_t raw_reads_after_release = 0;
};

// PGR run entirely on an edge-DP release: the raw adjacency is read by the
// mechanism and never again. With `k_hat_ratio` the budget is that share of
// the released edge count instead of pgr_cfg.k_hat.
inline DpPgrOutput dp_pgr(const Graph& g, const DpConfig& dp, PgrConfig pgr_cfg,
                          std::optional<double> k_hat_ratio = std::nullopt) {
  pgr_cfg.check();
  DpRelease r = release(g, dp);
  const std::uint64_t reads = g.adjacency_reads();

  const Graph released = g.with_adjacency(r.a_dp);
  if (k_hat_ratio) {
    pgr_cfg.k_hat = static_cast<std::size_t>(std::floor(*k_hat_ratio * static_cast<double>(released.num_edges()) + 1e-9));
  }
  GcnModel f_dp = train(released, pgr_cfg.train);
  PgrOutput pgr = pgr_run(released, f_dp, pgr_cfg);

  return DpPgrOutput{std::move(r), std::move(f_dp), std::move(pgr), g.adjacency_reads() - reads};
}

// Graph dir of the released structure plus a provenance sidecar.
inline void save_release(const DpRelease& r, const Graph& public_part, const std::filesystem::path& dir) {
  save_graph_dir(public_part.with_adjacency(r.a_dp), dir);
  auto meta = io_detail::open_out(dir / "release.meta");
  meta << "mechanism=" << to_string(r.mechanism) << '\n'
       << "epsilon=" << format_double(r.epsilon) << '\n'
       << "delta=" << format_double(r.delta) << '\n'
       << "seed=" << r.seed << '\n';
}

}  // namespace topoguard
