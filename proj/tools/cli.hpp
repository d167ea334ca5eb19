#pragma once

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "topoguard/attacks.hpp"
#include "topoguard/data_io.hpp"
#include "topoguard/edge_dp.hpp"
#include "topoguard/harness.hpp"
#include "topoguard/metrics.hpp"
#include "topoguard/pgr.hpp"

namespace topoguard::cli {

namespace fs = std::filesystem;

// A dir with `*.content` and `*.cites` (or a `.content` file) is read as
// Planetoid; anything else as a graph dir.
inline Graph load_any_graph(const fs::path& path, std::uint64_t seed) {
  const auto planetoid = [&](const fs::path& content) {
    fs::path cites = content;
    cites.replace_extension(".cites");
    return load_planetoid(content, cites, seed).graph;
  };
  if (fs::is_regular_file(path) && path.extension() == ".content") return planetoid(path);
  if (fs::is_directory(path) && !fs::exists(path / "edges.txt")) {
    for (const auto& entry : fs::directory_iterator(path)) {
      if (entry.path().extension() == ".content") return planetoid(entry.path());
    }
  }
  return load_graph_dir(path);
}

// "auto" or a count.
inline std::optional<std::size_t> parse_k_a(const std::string& s) {
  if (s == "auto") return std::nullopt;
  std::size_t v = 0;
  if (!io_detail::parse_number(s, v)) fail(ErrorCode::kInvalidConfig, "--k-a expects an integer or auto, got '" + s + "'");
  return v;
}

// "N" is absolute; "0.3x" is floor(0.3 K).
inline std::size_t parse_k_hat(const std::string& s, std::size_t k) {
  if (!s.empty() && s.back() == 'x') {
    double ratio = 0;
    if (!io_detail::parse_number(std::string_view(s).substr(0, s.size() - 1), ratio) || ratio < 0) {
      fail(ErrorCode::kInvalidConfig, "bad --k-hat ratio '" + s + "'");
    }
    return k_hat_for(ratio, k);
  }
  std::size_t v = 0;
  if (!io_detail::parse_number(s, v)) fail(ErrorCode::kInvalidConfig, "--k-hat expects N or a ratio like 0.3x, got '" + s + "'");
  return v;
}

struct TrainArgs {
  std::string graph, out;
  std::size_t layers = 2;
  std::uint64_t seed = 0;
  std::size_t epochs = 100;
};

struct AttackArgs {
  std::string model, graph, attack, k_a = "auto", out;
  std::size_t subgraph_size = 0;
  std::size_t subgraphs = 1;
  std::size_t shadow_size = 0;
  double pgr_tia_ratio = 0.5;
  std::string pgr_tia_base = "i";
  std::uint64_t seed = 0;
};

struct DefendArgs {
  std::string graph, model, k_hat, inner = "1", out;
  double mu = 0.0;
  double eta = 0.01;
  std::uint64_t seed = 0;
};

struct DpArgs {
  std::string graph, mechanism, out, k_hat = "1x";
  double epsilon = 0.0;
  bool with_pgr = false;
  std::uint64_t seed = 0;
};

struct SbmArgs {
  std::vector<std::size_t> blocks;
  double p_in = 0.1, p_out = 0.01, signal = 0.8;
  std::size_t feature_dim = 16;
  std::uint64_t seed = 0;
  std::string out;
};

inline int do_train(const TrainArgs& a) {
  const Graph g = load_any_graph(a.graph, a.seed);
  g.validate();
  TrainConfig tc;
  tc.layers = a.layers;
  tc.seed = a.seed;
  tc.epochs = a.epochs;
  const TrainResult r = fit(g, tc);
  save_model(r.model, a.out);
  std::cout << "trained " << a.layers << "-layer GCN on " << g.num_nodes() << " nodes, " << g.num_edges()
            << " edges; test accuracy " << format_double(accuracy(r.model, g, g.test_nodes())) << "\n";
  return 0;
}

inline int do_attack(const AttackArgs& a) {
  const Graph g = load_any_graph(a.graph, a.seed);
  const GcnModel m = load_model(a.model);
  const BlackBox bb(m, g);
  const double acc = accuracy(m, g, g.test_nodes());
  const std::optional<std::size_t> fixed_k = parse_k_a(a.k_a);
  const std::size_t size = a.subgraph_size == 0 ? g.num_nodes() : a.subgraph_size;

  std::vector<ReportRow> rows;
  for (std::size_t s = 0; s < a.subgraphs; ++s) {
    const Subgraph target = bfs_sample(g, size, derive_seed(a.seed, 0x5B00 + s));
    AttackConfig ac;
    ac.targets = target.nodes;
    ac.k_a = fixed_k.value_or(target.edges.size());
    ac.seed = derive_seed(a.seed, 0xA7 + s);
    std::optional<Subgraph> shadow;
    if (a.attack == "c-tia" || (a.attack == "pgr-tia" && a.pgr_tia_base == "c")) {
      std::vector<bool> excluded(g.num_nodes(), false);
      for (const std::size_t v : target.nodes) excluded[v] = true;
      shadow = bfs_sample(g, a.shadow_size == 0 ? size : a.shadow_size, derive_seed(a.seed, 0x5AD0 + s), excluded);
    }

    const std::string stem = "s" + std::to_string(s);
    const auto emit = [&](const std::string& name, const AttackResult& r) {
      const TplReport rep = tpl(target.edges, r.edges);
      rows.push_back(ReportRow{"graph", "gcn-l" + std::to_string(m.depth()), name, "none", std::nullopt, std::nullopt,
                               std::nullopt, a.seed, s, rep.jaccard, rep.f1, acc, 0.0, r.queries, 0.0});
      save_attack_result(r, a.out, name == a.attack ? stem : stem + "-" + name);
      std::cout << stem << " " << name << ": |E_T|=" << target.edges.size() << " k_a=" << ac.k_a
                << " tpl=" << format_double(rep.jaccard) << "\n";
    };
    if (a.attack == "m-tia") {
      for (const MetricResult& r : m_tia_all(bb, ac)) emit("m-tia-" + std::string(to_string(r.metric)), r.result);
    } else if (a.attack == "c-tia") {
      emit(a.attack, c_tia(bb, *shadow, ac));
    } else if (a.attack == "i-tia") {
      emit(a.attack, i_tia(bb, g.features(), ac));
    } else if (a.attack == "pgr-tia") {
      const auto k_hat = static_cast<std::size_t>(std::llround(a.pgr_tia_ratio * static_cast<double>(ac.k_a)));
      emit(a.attack, pgr_tia(bb, g.features(), ac, k_hat, parse_base_attack(a.pgr_tia_base), shadow ? &*shadow : nullptr).result);
    } else {
      emit(a.attack, random_attack(ac));
    }
  }
  write_report(rows, fs::path(a.out) / "report.csv");
  return 0;
}

inline int do_defend(const DefendArgs& a) {
  const Graph g = load_any_graph(a.graph, a.seed);
  const GcnModel f = load_model(a.model);
  PgrConfig pc;
  pc.k_hat = parse_k_hat(a.k_hat, g.num_edges());
  pc.mu = a.mu;
  pc.eta = a.eta;
  pc.converge = a.inner == "conv";
  pc.seed = a.seed;
  pc.train.layers = f.depth();
  pc.train.seed = a.seed;
  const PgrOutput out = pgr_run(g, f, pc);
  save_pgr_output(out, a.out);
  for (const std::string& w : out.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "inserted " << out.insertion_log.size() << " edges; overlap with the private graph " << out.overlap
            << "; accuracy " << format_double(accuracy(f, g, g.test_nodes())) << " -> "
            << format_double(accuracy(out.model, out.g_hat, g.test_nodes())) << "\n";
  return 0;
}

inline int do_dp(const DpArgs& a) {
  const Graph g = load_any_graph(a.graph, a.seed);
  DpConfig dc;
  dc.mechanism = parse_mechanism(a.mechanism);
  dc.epsilon = a.epsilon;
  dc.seed = a.seed;
  if (!a.with_pgr) {
    const DpRelease r = release(g, dc);
    save_release(r, g, a.out);
    std::cout << "released " << to_string(dc.mechanism) << " eps=" << format_double(dc.epsilon) << " with "
              << static_cast<std::size_t>(r.a_dp.sum() / 2 + 0.5) << " edges\n";
    return 0;
  }
  PgrConfig pc;
  pc.seed = a.seed;
  pc.train.seed = a.seed;
  std::optional<double> ratio;
  if (!a.k_hat.empty() && a.k_hat.back() == 'x') {
    ratio = 0.0;
    if (!io_detail::parse_number(std::string_view(a.k_hat).substr(0, a.k_hat.size() - 1), *ratio) || *ratio < 0) {
      fail(ErrorCode::kInvalidConfig, "bad --k-hat ratio '" + a.k_hat + "'");
    }
  } else {
    pc.k_hat = parse_k_hat(a.k_hat, 0);
  }
  const DpPgrOutput out = dp_pgr(g, dc, pc, ratio);
  save_release(out.release, g, fs::path(a.out) / "release");
  save_model(out.f_dp, fs::path(a.out) / "f_dp.pgrm");
  save_pgr_output(out.pgr, fs::path(a.out) / "pgr");
  std::cout << "dp-pgr " << to_string(dc.mechanism) << " eps=" << format_double(dc.epsilon) << ": inserted "
            << out.pgr.insertion_log.size() << " edges; raw adjacency reads after release "
            << out.raw_reads_after_release << "\n";
  return 0;
}

inline int do_audit(const std::string& config) {
  ExperimentConfig c;
  try {
    c = experiment_from(ConfigFile::load(config));
  } catch (const Error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  const ExperimentResult r = run_experiment(c);
  for (const std::string& f : r.failures) std::cerr << "row failed: " << f << "\n";
  std::cout << "wrote " << r.rows.size() << " rows to " << r.csv.string() << "\n";
  return r.failures.empty() ? 0 : 1;
}

inline int do_report(const std::string& in, const std::vector<std::string>& plots, const std::string& out) {
  const std::vector<ReportRow> rows = read_report(in);
  for (const auto& s : plot_series(rows, "seed", "tpl")) {
    double sum = 0;
    for (const auto& [x, y] : s.points) sum += y;
    std::cout << s.name << " mean tpl " << format_double(sum / static_cast<double>(s.points.size())) << "\n";
  }
  const fs::path dir = out.empty() ? fs::path(in).parent_path() / "plots" : fs::path(out);
  for (const std::string& axes : plots) {
    for (const fs::path& p : emit_plot_data(in, axes, dir)) std::cout << "wrote " << p.string() << "\n";
  }
  return 0;
}

inline int do_gen_sbm(const SbmArgs& a) {
  SbmSpec s;
  s.block_sizes = a.blocks;
  s.p_in = a.p_in;
  s.p_out = a.p_out;
  s.feature_dim = a.feature_dim;
  s.feature_signal = a.signal;
  s.seed = a.seed;
  const Graph g = generate_sbm(s);
  save_graph_dir(g, a.out);
  std::cout << "generated " << g.num_nodes() << " nodes, " << g.num_edges() << " edges\n";
  return 0;
}

inline int run(int argc, char** argv) {
  CLI::App app{"Topology privacy attacks and defenses for graph neural networks"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a GCN and write a checkpoint");
  train_cmd->add_option("--graph", ta.graph, "Graph dir or Planetoid dataset")->required();
  train_cmd->add_option("--out", ta.out, "Checkpoint path")->required();
  train_cmd->add_option("--layers", ta.layers, "GCN depth")->check(CLI::IsMember({1, 2, 3}));
  train_cmd->add_option("--epochs", ta.epochs, "Training epochs");
  train_cmd->add_option("--seed", ta.seed, "Random seed");

  AttackArgs aa;
  auto* attack_cmd = app.add_subcommand("attack", "Run a topology inference attack");
  attack_cmd->add_option("--model", aa.model, "Checkpoint of the target model")->required();
  attack_cmd->add_option("--graph", aa.graph, "Graph the model was trained on")->required();
  attack_cmd->add_option("--attack", aa.attack, "Attack")->required()->check(CLI::IsMember(known_attacks()));
  attack_cmd->add_option("--k-a", aa.k_a, "Edge budget or auto for |E_T|");
  attack_cmd->add_option("--subgraph-size", aa.subgraph_size, "Target subgraph size (default: whole graph)");
  attack_cmd->add_option("--subgraphs", aa.subgraphs, "Number of target subgraphs");
  attack_cmd->add_option("--shadow-size", aa.shadow_size, "Shadow graph size for c-tia");
  attack_cmd->add_option("--pgr-tia-ratio", aa.pgr_tia_ratio, "Round-one budget as a share of k_a");
  attack_cmd->add_option("--pgr-tia-base", aa.pgr_tia_base, "Base attack for pgr-tia")->check(CLI::IsMember({"m", "c", "i"}));
  attack_cmd->add_option("--out", aa.out, "Output dir")->required();
  attack_cmd->add_option("--seed", aa.seed, "Random seed");

  DefendArgs da;
  auto* defend_cmd = app.add_subcommand("defend", "Defend a model");
  defend_cmd->require_subcommand(1);
  auto* pgr_cmd = defend_cmd->add_subcommand("pgr", "Private graph reconstruction");
  pgr_cmd->add_option("--graph", da.graph, "Private training graph")->required();
  pgr_cmd->add_option("--model", da.model, "Checkpoint of the model to protect")->required();
  pgr_cmd->add_option("--k-hat", da.k_hat, "Edges to insert: N or a ratio like 0.3x")->required();
  pgr_cmd->add_option("--mu", da.mu, "Allowed overlap share")->check(CLI::Range(0.0, 1.0));
  pgr_cmd->add_option("--inner", da.inner, "Inner loop: 1 step or conv")->check(CLI::IsMember({"1", "conv"}));
  pgr_cmd->add_option("--eta", da.eta, "Inner learning rate");
  pgr_cmd->add_option("--out", da.out, "Output dir")->required();
  pgr_cmd->add_option("--seed", da.seed, "Random seed");

  DpArgs dpa;
  auto* dp_cmd = app.add_subcommand("dp", "Edge-DP release, optionally followed by PGR");
  dp_cmd->add_option("--graph", dpa.graph, "Private graph")->required();
  dp_cmd->add_option("--mechanism", dpa.mechanism, "Mechanism")->required()->check(CLI::IsMember({"edge-rand", "lap-edge"}));
  dp_cmd->add_option("--epsilon", dpa.epsilon, "Privacy budget")->required()->check(CLI::PositiveNumber);
  dp_cmd->add_flag("--with-pgr", dpa.with_pgr, "Run PGR on the release");
  dp_cmd->add_option("--k-hat", dpa.k_hat, "PGR edges: N or a ratio like 0.5x of the released edge count");
  dp_cmd->add_option("--out", dpa.out, "Output dir")->required();
  dp_cmd->add_option("--seed", dpa.seed, "Random seed");

  std::string config;
  auto* audit_cmd = app.add_subcommand("audit", "Run an experiment config");
  audit_cmd->add_option("--config", config, "Config file")->required();

  std::string report_in, report_out;
  std::vector<std::string> plots;
  auto* report_cmd = app.add_subcommand("report", "Summarise a report and emit plot data");
  report_cmd->add_option("--in", report_in, "Report CSV")->required();
  report_cmd->add_option("--plot", plots, "Axes as x:y, repeatable");
  report_cmd->add_option("--out", report_out, "Plot data dir (default: plots/ next to the report)");

  SbmArgs sa;
  auto* sbm_cmd = app.add_subcommand("gen-sbm", "Write a stochastic block model graph dir");
  sbm_cmd->add_option("--blocks", sa.blocks, "Block sizes")->required()->delimiter(',');
  sbm_cmd->add_option("--p-in", sa.p_in, "Within-block edge probability");
  sbm_cmd->add_option("--p-out", sa.p_out, "Across-block edge probability");
  sbm_cmd->add_option("--feature-dim", sa.feature_dim, "Feature width");
  sbm_cmd->add_option("--signal", sa.signal, "Feature signal strength");
  sbm_cmd->add_option("--seed", sa.seed, "Random seed");
  sbm_cmd->add_option("--out", sa.out, "Output dir")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return 2;
  }

  try {
    if (*train_cmd) return do_train(ta);
    if (*attack_cmd) return do_attack(aa);
    if (*pgr_cmd) return do_defend(da);
    if (*dp_cmd) return do_dp(dpa);
    if (*audit_cmd) return do_audit(config);
    if (*report_cmd) return do_report(report_in, plots, report_out);
    if (*sbm_cmd) return do_gen_sbm(sa);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::kInvalidConfig || e.code() == ErrorCode::kUnknownAxis ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace topoguard::cli
