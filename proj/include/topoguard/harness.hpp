#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "topoguard/attacks.hpp"
#include "topoguard/data_io.hpp"
#include "topoguard/edge_dp.hpp"
#include "topoguard/gnn.hpp"
#include "topoguard/metrics.hpp"
#include "topoguard/pgr.hpp"

namespace topoguard {

namespace harness_detail {

template <class T>
T parse_or_fail(std::string_view s, ErrorCode code, const std::string& where) {
  T v{};
  if (!io_detail::parse_number(s, v)) fail(code, where + ": bad number '" + std::string(s) + "'");
  return v;
}

}  // namespace harness_detail

// Flat key-value configuration in TOML syntax: `key = value` lines,
// optional `[section]` headers that prefix keys as `section.key`, strings
// in double quotes, numbers, booleans and one-line arrays.
class ConfigFile {
 public:
  static ConfigFile parse(std::string_view text) {
    ConfigFile cfg;
    std::string section;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string raw;
    while (std::getline(in, raw)) {
      ++line_no;
      const std::string line(io_detail::trim(strip_comment(raw)));
      if (line.empty()) continue;
      const auto where = " (line " + std::to_string(line_no) + ")";
      if (line.front() == '[') {
        if (line.back() != ']') fail(ErrorCode::kInvalidConfig, "unterminated section header" + where);
        section = std::string(io_detail::trim(std::string_view(line).substr(1, line.size() - 2)));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail(ErrorCode::kInvalidConfig, "expected key = value" + where);
      std::string key(io_detail::trim(std::string_view(line).substr(0, eq)));
      if (key.empty()) fail(ErrorCode::kInvalidConfig, "empty key" + where);
      if (!section.empty()) key = section + "." + key;
      if (cfg.values_.contains(key)) fail(ErrorCode::kInvalidConfig, "duplicate key '" + key + "'" + where);
      cfg.values_[key] = parse_value(io_detail::trim(std::string_view(line).substr(eq + 1)), where);
    }
    return cfg;
  }

  static ConfigFile load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::kIo, "cannot open config " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse(text.str());
  }

  bool has(const std::string& key) const { return values_.contains(key); }

  std::vector<std::string> list(const std::string& key, std::vector<std::string> fallback) const {
    used_.insert(key);
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string text(const std::string& key, const std::string& fallback) const {
    const auto v = list(key, {fallback});
    if (v.size() != 1) fail(ErrorCode::kInvalidConfig, "'" + key + "' must be a single value");
    return v.front();
  }

  double number(const std::string& key, double fallback) const {
    return to_number(key, text(key, format_double(fallback)));
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
    std::vector<std::string> def;
    for (const double d : fallback) def.push_back(format_double(d));
    std::vector<double> out;
    for (const std::string& s : list(key, def)) out.push_back(to_number(key, s));
    return out;
  }

  std::size_t count(const std::string& key, std::size_t fallback) const {
    const double v = number(key, static_cast<double>(fallback));
    if (v < 0 || v != std::floor(v)) fail(ErrorCode::kInvalidConfig, "'" + key + "' must be a non-negative integer");
    return static_cast<std::size_t>(v);
  }

  bool flag(const std::string& key, bool fallback) const {
    const std::string v = text(key, fallback ? "true" : "false");
    if (v == "true") return true;
    if (v == "false") return false;
    fail(ErrorCode::kInvalidConfig, "'" + key + "' must be true or false");
  }

  // Keys present in the file but never consulted.
  std::vector<std::string> unused() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
      if (!used_.contains(k)) out.push_back(k);
    }
    return out;
  }

 private:
  static std::string strip_comment(const std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) return line.substr(0, i);
    }
    return line;
  }

  static std::string scalar(std::string_view s, const std::string& where) {
    s = io_detail::trim(s);
    if (s.empty()) fail(ErrorCode::kInvalidConfig, "missing value" + where);
    if (s.front() == '"') {
      if (s.size() < 2 || s.back() != '"') fail(ErrorCode::kInvalidConfig, "unterminated string" + where);
      return std::string(s.substr(1, s.size() - 2));
    }
    return std::string(s);
  }

  static std::vector<std::string> parse_value(std::string_view v, const std::string& where) {
    if (v.empty() || v.front() != '[') return {scalar(v, where)};
    if (v.back() != ']') fail(ErrorCode::kInvalidConfig, "unterminated array" + where);
    std::vector<std::string> out;
    const std::string_view body = io_detail::trim(v.substr(1, v.size() - 2));
    if (body.empty()) return out;
    for (const std::string_view item : io_detail::split_on(body, ',')) out.push_back(scalar(item, where));
    return out;
  }

  static double to_number(const std::string& key, const std::string& s) {
    return harness_detail::parse_or_fail<double>(s, ErrorCode::kInvalidConfig, "config key '" + key + "'");
  }

  std::map<std::string, std::vector<std::string>> values_;
  mutable std::set<std::string> used_;
};

enum class Defense { kNone, kPgr, kDp, kDpPgr };

inline std::string_view to_string(Defense d) {
  switch (d) {
    case Defense::kNone: return "none";
    case Defense::kPgr: return "pgr";
    case Defense::kDp: return "dp";
    case Defense::kDpPgr: return "dp-pgr";
  }
  return "unknown";
}

inline Defense parse_defense(std::string_view s) {
  for (const Defense d : {Defense::kNone, Defense::kPgr, Defense::kDp, Defense::kDpPgr}) {
    if (to_string(d) == s) return d;
  }
  fail(ErrorCode::kInvalidConfig, "unknown defense '" + std::string(s) + "'");
}

inline const std::vector<std::string>& known_attacks() {
  static const std::vector<std::string> names{"m-tia", "c-tia", "i-tia", "pgr-tia", "random"};
  return names;
}

struct ExperimentConfig {
  std::string name = "graph";
  std::string graph_dir;
  std::string planetoid_content;
  std::string planetoid_cites;
  std::optional<SbmSpec> sbm;

  TrainConfig train;
  std::vector<std::size_t> layers{2};
  std::size_t subgraphs = 5;
  std::size_t subgraph_size = 100;
  std::vector<std::string> attacks;
  Defense defense = Defense::kNone;
  Mechanism mechanism = Mechanism::kEdgeRand;
  std::vector<double> epsilon{7.0};
  std::vector<double> k_hat_ratio{1.0};
  std::vector<double> mu{0.0};
  std::vector<double> density{1.0};
  bool converge = false;
  double eta = 0.01;
  double pgr_tia_ratio = 0.5;
  BaseAttack pgr_tia_base = BaseAttack::kInfluence;
  std::vector<std::uint64_t> seeds{0};
  std::string output = "results";
  bool timing = false;

  void check() const {
    if (attacks.empty()) fail(ErrorCode::kInvalidConfig, "at least one attack is required");
    for (const std::string& a : attacks) {
      if (std::find(known_attacks().begin(), known_attacks().end(), a) == known_attacks().end()) {
        fail(ErrorCode::kInvalidConfig, "unknown attack '" + a + "'");
      }
    }
    if (seeds.empty()) fail(ErrorCode::kInvalidConfig, "seeds must be nonempty");
    const int sources = !graph_dir.empty() + !planetoid_content.empty() + sbm.has_value();
    if (sources != 1) fail(ErrorCode::kInvalidConfig, "exactly one of graph_dir, planetoid or sbm must be given");
    if (!planetoid_content.empty() && planetoid_cites.empty()) fail(ErrorCode::kInvalidConfig, "planetoid needs cites");
    if (sbm) sbm->check();
    if (subgraphs == 0 || subgraph_size < 2) fail(ErrorCode::kInvalidConfig, "need subgraphs >= 1 of size >= 2");
    for (const std::size_t l : layers) {
      if (l < 1 || l > 3) fail(ErrorCode::kInvalidConfig, "layers must be 1, 2 or 3");
    }
    for (const double e : epsilon) {
      if (!(e > 0)) fail(ErrorCode::kInvalidConfig, "epsilon must be positive");
    }
    for (const double r : k_hat_ratio) {
      if (!(r >= 0)) fail(ErrorCode::kInvalidConfig, "k_hat_ratio must be non-negative");
    }
    for (const double m : mu) {
      if (!(m >= 0 && m <= 1)) fail(ErrorCode::kInvalidConfig, "mu must lie in [0,1]");
    }
    for (const double d : density) {
      if (!(d > 0)) fail(ErrorCode::kInvalidConfig, "density must be positive");
      if (d != 1.0 && !sbm) fail(ErrorCode::kInvalidConfig, "density sweeps need an sbm dataset");
    }
    if (!(pgr_tia_ratio >= 0)) fail(ErrorCode::kInvalidConfig, "pgr_tia_ratio must be non-negative");
  }
};

inline BaseAttack parse_base_attack(std::string_view s) {
  for (const BaseAttack b : {BaseAttack::kMetric, BaseAttack::kClassifier, BaseAttack::kInfluence}) {
    if (to_string(b) == s) return b;
  }
  fail(ErrorCode::kInvalidConfig, "pgr_tia_base must be m, c or i");
}

inline ExperimentConfig experiment_from(const ConfigFile& f) {
  ExperimentConfig c;
  c.name = f.text("name", c.name);
  c.graph_dir = f.text("graph_dir", "");
  c.planetoid_content = f.text("planetoid.content", "");
  c.planetoid_cites = f.text("planetoid.cites", "");
  if (f.has("sbm.blocks")) {
    SbmSpec s;
    for (const double b : f.numbers("sbm.blocks", {})) s.block_sizes.push_back(static_cast<std::size_t>(b));
    s.p_in = f.number("sbm.p_in", 0.1);
    s.p_out = f.number("sbm.p_out", 0.01);
    s.feature_dim = f.count("sbm.feature_dim", s.feature_dim);
    s.feature_signal = f.number("sbm.feature_signal", s.feature_signal);
    s.seed = f.count("sbm.seed", 0);
    s.train_fraction = f.number("sbm.train_fraction", s.train_fraction);
    c.sbm = s;
  }
  c.train.epochs = f.count("train.epochs", c.train.epochs);
  c.train.lr = f.number("train.lr", c.train.lr);
  c.train.weight_decay = f.number("train.weight_decay", c.train.weight_decay);
  c.layers.clear();
  for (const double l : f.numbers("layers", {2})) c.layers.push_back(static_cast<std::size_t>(l));
  c.subgraphs = f.count("subgraphs", c.subgraphs);
  c.subgraph_size = f.count("subgraph_size", c.subgraph_size);
  c.attacks = f.list("attacks", {"m-tia", "c-tia", "i-tia", "random"});
  c.defense = parse_defense(f.text("defense", "none"));
  c.mechanism = parse_mechanism(f.text("dp.mechanism", "edge-rand"));
  c.epsilon = f.numbers("dp.epsilon", c.epsilon);
  c.k_hat_ratio = f.numbers("pgr.k_hat_ratio", c.k_hat_ratio);
  c.mu = f.numbers("pgr.mu", c.mu);
  const std::string inner = f.text("pgr.inner", "1");
  if (inner != "1" && inner != "conv") fail(ErrorCode::kInvalidConfig, "pgr.inner must be 1 or conv");
  c.converge = inner == "conv";
  c.eta = f.number("pgr.eta", c.eta);
  c.density = f.numbers("density", c.density);
  c.pgr_tia_ratio = f.number("pgr_tia.ratio", c.pgr_tia_ratio);
  c.pgr_tia_base = parse_base_attack(f.text("pgr_tia.base", "i"));
  c.seeds.clear();
  for (const double s : f.numbers("seeds", {0})) c.seeds.push_back(static_cast<std::uint64_t>(s));
  c.output = f.text("output", c.output);
  c.timing = f.flag("timing", false);
  if (const auto extra = f.unused(); !extra.empty()) fail(ErrorCode::kInvalidConfig, "unknown config key '" + extra.front() + "'");
  c.check();
  return c;
}

struct ReportRow {
  std::string dataset;
  std::string model;
  std::string attack;
  std::string defense;
  std::optional<double> epsilon;
  std::optional<double> k_hat_ratio;
  std::optional<double> mu;
  std::uint64_t seed = 0;
  std::size_t subgraph_id = 0;
  double tpl = 0.0;
  double f1 = 0.0;
  double acc = 0.0;
  double acc_loss = 0.0;
  std::uint64_t queries = 0;
  double runtime_s = 0.0;
};

inline constexpr std::string_view kReportHeader =
    "dataset,model,attack,defense,epsilon,k_hat_ratio,mu,seed,subgraph_id,tpl,f1,acc,acc_loss,queries,runtime_s";

inline std::string csv_line(const ReportRow& r) {
  const auto opt = [](const std::optional<double>& v) { return v ? format_double(*v) : std::string(); };
  std::ostringstream s;
  s << r.dataset << ',' << r.model << ',' << r.attack << ',' << r.defense << ',' << opt(r.epsilon) << ','
    << opt(r.k_hat_ratio) << ',' << opt(r.mu) << ',' << r.seed << ',' << r.subgraph_id << ',' << format_double(r.tpl)
    << ',' << format_double(r.f1) << ',' << format_double(r.acc) << ',' << format_double(r.acc_loss) << ','
    << r.queries << ',' << format_double(r.runtime_s);
  return s.str();
}

inline std::size_t k_hat_for(double ratio, std::size_t k) {
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(k) + 1e-9));
}

namespace harness_detail {

inline Graph load_dataset(const ExperimentConfig& c, std::uint64_t seed, double density) {
  if (!c.graph_dir.empty()) return load_graph_dir(c.graph_dir);
  if (!c.planetoid_content.empty()) return load_planetoid(c.planetoid_content, c.planetoid_cites, seed).graph;
  SbmSpec s = *c.sbm;
  s.p_in = std::min(1.0, s.p_in * density);
  s.p_out = std::min(1.0, s.p_out * density);
  s.seed = derive_seed(s.seed, seed);
  return generate_sbm(s);
}

inline std::string dataset_label(const ExperimentConfig& c, double density) {
  return density == 1.0 ? c.name : c.name + "@density=" + format_double(density);
}

struct Target {
  Subgraph target;
  std::optional<Subgraph> shadow;
};

inline std::vector<Target> sample_targets(const Graph& g, const ExperimentConfig& c, std::uint64_t seed) {
  std::vector<Target> out;
  const bool needs_shadow = std::find(c.attacks.begin(), c.attacks.end(), "c-tia") != c.attacks.end() ||
                            (c.pgr_tia_base == BaseAttack::kClassifier &&
                             std::find(c.attacks.begin(), c.attacks.end(), "pgr-tia") != c.attacks.end());
  for (std::size_t s = 0; s < c.subgraphs; ++s) {
    Target t{bfs_sample(g, c.subgraph_size, derive_seed(seed, 0x5B00 + s)), std::nullopt};
    if (needs_shadow) {
      std::vector<bool> excluded(g.num_nodes(), false);
      for (const std::size_t v : t.target.nodes) excluded[v] = true;
      t.shadow = bfs_sample(g, c.subgraph_size, derive_seed(seed, 0x5AD0 + s), excluded);
    }
    out.push_back(std::move(t));
  }
  return out;
}

struct Victim {
  const BlackBox& bb;
  double acc;
  double acc_loss;
};

using Clock = std::chrono::steady_clock;

// One row per attack variant on one target.
inline void attack_rows(const ExperimentConfig& c, const Graph& g, const Victim& v, const Target& t,
                        std::uint64_t seed, const ReportRow& proto, const std::string& context,
                        std::vector<ReportRow>& rows, std::vector<std::string>& failures) {
  AttackConfig ac;
  ac.targets = t.target.nodes;
  ac.k_a = t.target.edges.size();
  ac.seed = derive_seed(seed, 0xA7 + proto.subgraph_id);
  const auto emit = [&](const std::string& name, const AttackResult& r, Clock::time_point start) {
    ReportRow row = proto;
    row.attack = name;
    const TplReport rep = tpl(t.target.edges, r.edges);
    row.tpl = rep.jaccard;
    row.f1 = rep.f1;
    row.acc = v.acc;
    row.acc_loss = v.acc_loss;
    row.queries = r.queries;
    if (c.timing) row.runtime_s = std::chrono::duration<double>(Clock::now() - start).count();
    rows.push_back(std::move(row));
  };
  for (const std::string& name : c.attacks) {
    const auto start = Clock::now();
    try {
      if (name == "m-tia") {
        for (const MetricResult& m : m_tia_all(v.bb, ac)) emit("m-tia-" + std::string(to_string(m.metric)), m.result, start);
      } else if (name == "c-tia") {
        emit(name, c_tia(v.bb, *t.shadow, ac), start);
      } else if (name == "i-tia") {
        emit(name, i_tia(v.bb, g.features(), ac), start);
      } else if (name == "pgr-tia") {
        const std::size_t k_hat = static_cast<std::size_t>(std::llround(c.pgr_tia_ratio * static_cast<double>(ac.k_a)));
        const Subgraph* shadow = t.shadow ? &*t.shadow : nullptr;
        emit(name, pgr_tia(v.bb, g.features(), ac, k_hat, c.pgr_tia_base, shadow).result, start);
      } else if (name == "random") {
        emit(name, random_attack(ac), start);
      }
    } catch (const Error& err) {
      failures.push_back(context + "/subgraph=" + std::to_string(proto.subgraph_id) + "/" + name + ": " + err.what());
    }
  }
}

struct Job {
  double density;
  std::size_t layers;
  std::uint64_t seed;
};

struct JobOutput {
  std::vector<ReportRow> rows;
  std::vector<std::string> failures;
};

inline JobOutput run_job(const ExperimentConfig& c, const Job& job) {
  JobOutput out;
  const std::string dataset = dataset_label(c, job.density);
  const std::string model = "gcn-l" + std::to_string(job.layers);
  const auto context = [&](const std::string& defense) {
    return dataset + "/" + model + "/seed=" + std::to_string(job.seed) + "/" + defense;
  };
  try {
    const Graph g = load_dataset(c, job.seed, job.density);
    g.validate();
    TrainConfig tc = c.train;
    tc.seed = job.seed;
    tc.layers = job.layers;
    const GcnModel f = train(g, tc);
    const NodeList test = g.test_nodes();
    const double acc = accuracy(f, g, test);
    const BlackBox bb(f, g);
    const std::vector<Target> targets = sample_targets(g, c, job.seed);
    const std::size_t k = g.num_edges();

    ReportRow proto{dataset, model, "", "none", std::nullopt, std::nullopt, std::nullopt, job.seed, 0};
    for (std::size_t s = 0; s < targets.size(); ++s) {
      proto.subgraph_id = s;
      attack_rows(c, g, Victim{bb, acc, 0.0}, targets[s], job.seed, proto, context("none"), out.rows, out.failures);
    }
    if (c.defense == Defense::kNone) return out;

    const std::vector<double> eps = c.defense == Defense::kPgr ? std::vector<double>{0.0} : c.epsilon;
    const bool uses_pgr = c.defense == Defense::kPgr || c.defense == Defense::kDpPgr;
    const std::vector<double> ratios = uses_pgr ? c.k_hat_ratio : std::vector<double>{0.0};
    const std::vector<double> mus = uses_pgr ? c.mu : std::vector<double>{0.0};
    for (const double e : eps) {
      for (const double ratio : ratios) {
        for (const double mu : mus) {
          ReportRow cell = proto;
          cell.defense = std::string(to_string(c.defense));
          if (c.defense != Defense::kPgr) cell.epsilon = e;
          if (uses_pgr) {
            cell.k_hat_ratio = ratio;
            cell.mu = mu;
          }
          const std::string where = context(cell.defense) + " eps=" + format_double(e) +
                                    " k_hat_ratio=" + format_double(ratio) + " mu=" + format_double(mu);
          try {
            PgrConfig pc;
            pc.k_hat = k_hat_for(ratio, k);
            pc.mu = mu;
            pc.eta = c.eta;
            pc.converge = c.converge;
            pc.train = tc;
            pc.seed = job.seed;
            DpConfig dc;
            dc.mechanism = c.mechanism;
            dc.epsilon = e;
            dc.seed = derive_seed(job.seed, 0xD9);

            std::optional<GcnModel> model_def;
            std::optional<Graph> graph_def;
            if (c.defense == Defense::kPgr) {
              PgrOutput o = pgr_run(g, f, pc);
              model_def = std::move(o.model);
              graph_def = std::move(o.g_hat);
            } else if (c.defense == Defense::kDp) {
              Graph released = g.with_adjacency(release(g, dc).a_dp);
              model_def = train(released, tc);
              graph_def = std::move(released);
            } else {
              DpPgrOutput o = dp_pgr(g, dc, pc, ratio);
              model_def = std::move(o.pgr.model);
              graph_def = std::move(o.pgr.g_hat);
            }
            const BlackBox bb_def(*model_def, *graph_def);
            const double acc_def = accuracy(*model_def, *graph_def, test);
            const Victim victim{bb_def, acc_def, accuracy_loss(acc, acc_def)};
            for (std::size_t s = 0; s < targets.size(); ++s) {
              cell.subgraph_id = s;
              attack_rows(c, g, victim, targets[s], job.seed, cell, where, out.rows, out.failures);
            }
          } catch (const Error& err) {
            out.failures.push_back(where + ": " + err.what());
          }
        }
      }
    }
  } catch (const Error& err) {
    out.failures.push_back(context("none") + ": " + err.what());
  }
  return out;
}

inline std::size_t worker_count(std::size_t jobs) {
  std::size_t n = 1;
  if (const char* env = std::getenv("TOPOGUARD_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) n = static_cast<std::size_t>(v);
  }
  return std::max<std::size_t>(1, std::min(n, jobs));
}

}  // namespace harness_detail

struct ExperimentResult {
  std::vector<ReportRow> rows;
  std::vector<std::string> failures;
  std::filesystem::path csv;
};

// Every (density, layers, seed) job, in parallel when TOPOGUARD_THREADS > 1;
// rows are assembled in job order so the output never depends on scheduling.
inline ExperimentResult run_rows(const ExperimentConfig& c) {
  c.check();
  std::vector<harness_detail::Job> jobs;
  for (const double d : c.density) {
    for (const std::size_t l : c.layers) {
      for (const std::uint64_t s : c.seeds) jobs.push_back({d, l, s});
    }
  }
  std::vector<harness_detail::JobOutput> outputs(jobs.size());
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) outputs[i] = harness_detail::run_job(c, jobs[i]);
  };
  const std::size_t workers = harness_detail::worker_count(jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  ExperimentResult r;
  for (auto& o : outputs) {
    r.rows.insert(r.rows.end(), std::make_move_iterator(o.rows.begin()), std::make_move_iterator(o.rows.end()));
    r.failures.insert(r.failures.end(), o.failures.begin(), o.failures.end());
  }
  return r;
}

inline void write_report(const std::vector<ReportRow>& rows, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto out = io_detail::open_out(path);
  out << kReportHeader << '\n';
  for (const ReportRow& r : rows) out << csv_line(r) << '\n';
}

inline ExperimentResult run_experiment(const ExperimentConfig& c) {
  ExperimentResult r = run_rows(c);
  r.csv = std::filesystem::path(c.output) / "report.csv";
  write_report(r.rows, r.csv);
  return r;
}

// A sweep over the declared axes is the experiment itself: every list-valued
// axis already expands into the cartesian product.
inline ExperimentResult factor_sweep(const ExperimentConfig& c) { return run_experiment(c); }

inline std::vector<ReportRow> read_report(const std::filesystem::path& path) {
  const auto lines = io_detail::read_lines(path);
  if (lines.empty() || lines.front() != kReportHeader) {
    fail(ErrorCode::kMalformedLine, path.string() + ": missing report header");
  }
  std::vector<ReportRow> rows;
  for (std::size_t n = 1; n < lines.size(); ++n) {
    if (io_detail::trim(lines[n]).empty()) continue;
    const auto f = io_detail::split_on(lines[n], ',');
    const std::string where = path.string() + ":" + std::to_string(n + 1);
    if (f.size() != 15) fail(ErrorCode::kMalformedLine, where + ": expected 15 fields");
    const auto opt = [&](std::string_view s) -> std::optional<double> {
      if (s.empty()) return std::nullopt;
      return harness_detail::parse_or_fail<double>(s, ErrorCode::kMalformedLine, where);
    };
    ReportRow r;
    r.dataset = std::string(f[0]);
    r.model = std::string(f[1]);
    r.attack = std::string(f[2]);
    r.defense = std::string(f[3]);
    r.epsilon = opt(f[4]);
    r.k_hat_ratio = opt(f[5]);
    r.mu = opt(f[6]);
    r.seed = harness_detail::parse_or_fail<std::uint64_t>(f[7], ErrorCode::kMalformedLine, where);
    r.subgraph_id = harness_detail::parse_or_fail<std::size_t>(f[8], ErrorCode::kMalformedLine, where);
    r.tpl = harness_detail::parse_or_fail<double>(f[9], ErrorCode::kMalformedLine, where);
    r.f1 = harness_detail::parse_or_fail<double>(f[10], ErrorCode::kMalformedLine, where);
    r.acc = harness_detail::parse_or_fail<double>(f[11], ErrorCode::kMalformedLine, where);
    r.acc_loss = harness_detail::parse_or_fail<double>(f[12], ErrorCode::kMalformedLine, where);
    r.queries = harness_detail::parse_or_fail<std::uint64_t>(f[13], ErrorCode::kMalformedLine, where);
    r.runtime_s = harness_detail::parse_or_fail<double>(f[14], ErrorCode::kMalformedLine, where);
    rows.push_back(std::move(r));
  }
  return rows;
}

namespace harness_detail {

inline std::optional<double> axis_value(const ReportRow& r, const std::string& axis) {
  if (axis == "epsilon") return r.epsilon;
  if (axis == "k_hat_ratio") return r.k_hat_ratio;
  if (axis == "mu") return r.mu;
  if (axis == "seed") return static_cast<double>(r.seed);
  if (axis == "subgraph_id") return static_cast<double>(r.subgraph_id);
  if (axis == "tpl") return r.tpl;
  if (axis == "f1") return r.f1;
  if (axis == "acc") return r.acc;
  if (axis == "acc_loss") return r.acc_loss;
  if (axis == "queries") return static_cast<double>(r.queries);
  if (axis == "runtime_s") return r.runtime_s;
  if (axis == "layers") return parse_or_fail<double>(std::string_view(r.model).substr(r.model.rfind('l') + 1), ErrorCode::kUnknownAxis, "model");
  if (axis == "density") {
    const auto at = r.dataset.find("@density=");
    return at == std::string::npos ? 1.0 : parse_or_fail<double>(std::string_view(r.dataset).substr(at + 9), ErrorCode::kUnknownAxis, "dataset");
  }
  fail(ErrorCode::kUnknownAxis, "unknown axis '" + axis + "'");
}

inline std::string file_safe(std::string s) {
  for (char& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '.') ch = '_';
  }
  return s;
}

}  // namespace harness_detail

inline const std::vector<std::string>& known_axes() {
  static const std::vector<std::string> axes{"epsilon", "k_hat_ratio", "mu",       "seed",    "subgraph_id",
                                             "tpl",     "f1",          "acc",      "acc_loss", "queries",
                                             "runtime_s", "layers",    "density"};
  return axes;
}

struct PlotSeries {
  std::string name;  // dataset_model_attack_defense
  std::vector<std::pair<double, double>> points;
};

// Mean of y per distinct x within each (dataset, model, attack, defense)
// series, x ascending. Rows without a value on the x axis are skipped.
inline std::vector<PlotSeries> plot_series(const std::vector<ReportRow>& rows, const std::string& x_axis,
                                           const std::string& y_axis) {
  for (const std::string& a : {x_axis, y_axis}) {
    if (std::find(known_axes().begin(), known_axes().end(), a) == known_axes().end()) {
      fail(ErrorCode::kUnknownAxis, "unknown axis '" + a + "'");
    }
  }
  std::map<std::string, std::map<double, std::pair<double, std::size_t>>> acc;
  for (const ReportRow& r : rows) {
    const auto x = harness_detail::axis_value(r, x_axis);
    const auto y = harness_detail::axis_value(r, y_axis);
    if (!x || !y) continue;
    auto& cell = acc[r.dataset + "_" + r.model + "_" + r.attack + "_" + r.defense][*x];
    cell.first += *y;
    ++cell.second;
  }
  std::vector<PlotSeries> out;
  for (const auto& [name, points] : acc) {
    PlotSeries s{name, {}};
    for (const auto& [x, sum] : points) s.points.emplace_back(x, sum.first / static_cast<double>(sum.second));
    out.push_back(std::move(s));
  }
  return out;
}

// `axes` is "x:y"; writes `<series>.<y>_vs_<x>.dat` with `x y` rows.
inline std::vector<std::filesystem::path> emit_plot_data(const std::filesystem::path& report, const std::string& axes,
                                                         const std::filesystem::path& out_dir) {
  const auto colon = axes.find(':');
  if (colon == std::string::npos) fail(ErrorCode::kUnknownAxis, "axes must be x:y, got '" + axes + "'");
  const std::string x = axes.substr(0, colon);
  const std::string y = axes.substr(colon + 1);
  const auto series = plot_series(read_report(report), x, y);
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> files;
  for (const PlotSeries& s : series) {
    const auto path = out_dir / (harness_detail::file_safe(s.name) + "." + y + "_vs_" + x + ".dat");
    auto out = io_detail::open_out(path);
    for (const auto& [px, py] : s.points) out << format_double(px) << ' ' << format_double(py) << '\n';
    files.push_back(path);
  }
  return files;
}

}  // namespace topoguard
