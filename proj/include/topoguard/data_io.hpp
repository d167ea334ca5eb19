#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include "topoguard/gnn.hpp"
#include "topoguard/graph.hpp"
#include "topoguard/rng.hpp"

namespace topoguard {

namespace io_detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r') ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

inline std::vector<std::string_view> split_on(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  s = trim(s);
  if (s.empty()) return false;
  if constexpr (std::is_floating_point_v<T>) {
    if (s.front() == '+') s.remove_prefix(1);
  }
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size();
}

[[noreturn]] inline void malformed(const std::filesystem::path& file, std::size_t line_no, std::string_view why) {
  fail(ErrorCode::kMalformedLine,
       file.filename().string() + ":" + std::to_string(line_no) + ": " + std::string(why));
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

inline std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  return out;
}

}  // namespace io_detail

// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

// Per-class stratified train mask: round(fraction * class size) nodes of
// each class, at least one.
inline std::vector<bool> stratified_train_mask(const Labels& labels, int num_classes, double fraction,
                                               std::uint64_t seed) {
  std::vector<NodeList> members(static_cast<std::size_t>(std::max(num_classes, 0)));
  for (std::size_t i = 0; i < labels.size(); ++i) members[static_cast<std::size_t>(labels[i])].push_back(i);
  std::vector<bool> mask(labels.size(), false);
  Rng rng(derive_seed(seed, 0x7A1));
  for (NodeList& cls : members) {
    if (cls.empty()) continue;
    for (std::size_t i = cls.size(); i > 1; --i) std::swap(cls[i - 1], cls[rng.index(i)]);
    const auto take = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::llround(fraction * static_cast<double>(cls.size()))), 1, cls.size());
    for (std::size_t k = 0; k < take; ++k) mask[cls[k]] = true;
  }
  return mask;
}

struct PlanetoidStats {
  std::size_t cite_lines = 0;
  std::size_t dropped_unknown = 0;
  std::size_t dropped_self = 0;
  std::size_t duplicate_edges = 0;
};

struct LoadedGraph {
  Graph graph;
  PlanetoidStats stats;
  std::vector<std::string> node_ids;
  std::vector<std::string> class_names;
};

// Citation-network distribution files: `<id> f_1 ... f_F <label>` per node
// and `<cited> <citing>` per citation.
inline LoadedGraph load_planetoid(const std::filesystem::path& content_path, const std::filesystem::path& cites_path,
                                  std::uint64_t split_seed = 0, double train_fraction = 0.1) {
  using namespace io_detail;
  std::unordered_map<std::string, std::size_t> node_index;
  std::map<std::string, int> class_index;
  std::vector<std::string> node_ids;
  std::vector<std::string> class_names;
  std::vector<std::vector<double>> rows;
  Labels labels;
  std::size_t width = 0;

  const auto content = read_lines(content_path);
  for (std::size_t ln = 0; ln < content.size(); ++ln) {
    const auto tok = split_ws(content[ln]);
    if (tok.empty()) continue;
    if (tok.size() < 3) malformed(content_path, ln + 1, "expected id, features and label");
    const std::string id(tok.front());
    if (node_index.contains(id)) malformed(content_path, ln + 1, "duplicate node id " + id);
    const std::size_t f = tok.size() - 2;
    if (rows.empty()) {
      width = f;
    } else if (f != width) {
      fail(ErrorCode::kInconsistentFeatureWidth, content_path.filename().string() + ":" + std::to_string(ln + 1) +
                                                     ": " + std::to_string(f) + " features, expected " +
                                                     std::to_string(width));
    }
    std::vector<double> row(f);
    for (std::size_t k = 0; k < f; ++k) {
      if (!parse_number(tok[k + 1], row[k])) malformed(content_path, ln + 1, "bad feature value");
    }
    const std::string label(tok.back());
    auto [it, fresh] = class_index.try_emplace(label, static_cast<int>(class_names.size()));
    if (fresh) class_names.push_back(label);
    node_index.emplace(id, node_ids.size());
    node_ids.push_back(id);
    rows.push_back(std::move(row));
    labels.push_back(it->second);
  }
  if (rows.empty()) fail(ErrorCode::kInvalidGraph, "no nodes in " + content_path.string());

  const auto n = static_cast<Eigen::Index>(rows.size());
  DenseMatrix x(n, static_cast<Eigen::Index>(width));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) x(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
  }

  PlanetoidStats stats;
  DenseMatrix a = DenseMatrix::Zero(n, n);
  const auto cites = read_lines(cites_path);
  for (std::size_t ln = 0; ln < cites.size(); ++ln) {
    const auto tok = split_ws(cites[ln]);
    if (tok.empty()) continue;
    if (tok.size() != 2) malformed(cites_path, ln + 1, "expected two ids");
    ++stats.cite_lines;
    const auto u = node_index.find(std::string(tok[0]));
    const auto v = node_index.find(std::string(tok[1]));
    if (u == node_index.end() || v == node_index.end()) {
      ++stats.dropped_unknown;
      continue;
    }
    if (u->second == v->second) {
      ++stats.dropped_self;
      continue;
    }
    const auto i = static_cast<Eigen::Index>(u->second);
    const auto j = static_cast<Eigen::Index>(v->second);
    if (a(i, j) != 0.0) {
      ++stats.duplicate_edges;
      continue;
    }
    a(i, j) = a(j, i) = 1.0;
  }

  const int num_classes = static_cast<int>(class_names.size());
  std::vector<bool> mask = stratified_train_mask(labels, num_classes, train_fraction, split_seed);
  Graph g(std::move(a), std::move(x), std::move(labels), std::move(mask), num_classes);
  g.validate();
  return LoadedGraph{std::move(g), stats, std::move(node_ids), std::move(class_names)};
}

// Graph directory: edges.txt, features.csv, labels.txt, train_mask.txt.
inline Graph load_graph_dir(const std::filesystem::path& dir) {
  using namespace io_detail;
  const auto label_lines = read_lines(dir / "labels.txt");
  Labels labels;
  for (std::size_t ln = 0; ln < label_lines.size(); ++ln) {
    if (trim(label_lines[ln]).empty()) continue;
    int v = 0;
    if (!parse_number(label_lines[ln], v) || v < 0) malformed(dir / "labels.txt", ln + 1, "bad label");
    labels.push_back(v);
  }
  const std::size_t n = labels.size();

  const auto mask_lines = read_lines(dir / "train_mask.txt");
  std::vector<bool> mask;
  for (std::size_t ln = 0; ln < mask_lines.size(); ++ln) {
    const auto t = trim(mask_lines[ln]);
    if (t.empty()) continue;
    if (t != "0" && t != "1") malformed(dir / "train_mask.txt", ln + 1, "expected 0 or 1");
    mask.push_back(t == "1");
  }
  if (mask.size() != n) fail(ErrorCode::kDimensionMismatch, "train_mask.txt has " + std::to_string(mask.size()) +
                                                                " entries, labels.txt " + std::to_string(n));

  const auto feature_lines = read_lines(dir / "features.csv");
  std::vector<std::vector<double>> rows;
  for (std::size_t ln = 0; ln < feature_lines.size(); ++ln) {
    if (trim(feature_lines[ln]).empty()) continue;
    const auto cells = split_on(feature_lines[ln], ',');
    std::vector<double> row(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) {
      if (!parse_number(cells[k], row[k])) malformed(dir / "features.csv", ln + 1, "bad number");
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      fail(ErrorCode::kInconsistentFeatureWidth, "features.csv:" + std::to_string(ln + 1));
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() != n) fail(ErrorCode::kDimensionMismatch, "features.csv has " + std::to_string(rows.size()) +
                                                                 " rows, labels.txt " + std::to_string(n));
  const auto width = static_cast<Eigen::Index>(rows.empty() ? 0 : rows.front().size());
  DenseMatrix x(static_cast<Eigen::Index>(n), width);
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < width; ++k) x(static_cast<Eigen::Index>(i), k) = rows[i][static_cast<std::size_t>(k)];
  }

  DenseMatrix a = DenseMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  const auto edge_lines = read_lines(dir / "edges.txt");
  for (std::size_t ln = 0; ln < edge_lines.size(); ++ln) {
    const auto tok = split_ws(edge_lines[ln]);
    if (tok.empty()) continue;
    std::size_t i = 0;
    std::size_t j = 0;
    if (tok.size() != 2 || !parse_number(tok[0], i) || !parse_number(tok[1], j)) {
      malformed(dir / "edges.txt", ln + 1, "expected `i j`");
    }
    if (i >= j) {
      fail(ErrorCode::kNonSymmetricInput, "edges.txt:" + std::to_string(ln + 1) + ": pair must satisfy i < j");
    }
    if (j >= n) fail(ErrorCode::kDimensionMismatch, "edges.txt:" + std::to_string(ln + 1) + ": node out of range");
    a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 1.0;
    a(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = 1.0;
  }

  int num_classes = 0;
  if (const auto classes = dir / "num_classes.txt"; std::filesystem::exists(classes)) {
    const auto lines = read_lines(classes);
    if (lines.empty() || !parse_number(lines.front(), num_classes)) malformed(classes, 1, "bad class count");
  }
  Graph g(std::move(a), std::move(x), std::move(labels), std::move(mask), num_classes);
  g.validate();
  return g;
}

inline void write_edge_list(const std::filesystem::path& path, const EdgeSet& edges) {
  auto out = io_detail::open_out(path);
  for (const Edge& e : edges) out << e.i << ' ' << e.j << '\n';
}

inline void save_graph_dir(const Graph& g, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_edge_list(dir / "edges.txt", g.edges());

  auto features = io_detail::open_out(dir / "features.csv");
  const DenseMatrix& x = g.features();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      if (k > 0) features << ',';
      features << format_double(x(i, k));
    }
    features << '\n';
  }

  auto labels = io_detail::open_out(dir / "labels.txt");
  for (const int l : g.labels()) labels << l << '\n';
  auto mask = io_detail::open_out(dir / "train_mask.txt");
  for (const bool b : g.train_mask()) mask << (b ? 1 : 0) << '\n';
  auto classes = io_detail::open_out(dir / "num_classes.txt");
  classes << g.num_classes() << '\n';
}

struct SbmSpec {
  std::vector<std::size_t> block_sizes;
  double p_in = 0.0;
  double p_out = 0.0;
  std::size_t feature_dim = 16;
  double feature_signal = 1.0;
  std::uint64_t seed = 0;
  double train_fraction = 0.1;

  void check() const {
    if (block_sizes.empty()) fail(ErrorCode::kInvalidConfig, "sbm needs at least one block");
    for (const std::size_t b : block_sizes) {
      if (b == 0) fail(ErrorCode::kInvalidConfig, "sbm block sizes must be positive");
    }
    if (!(0.0 <= p_out && p_out <= p_in && p_in <= 1.0)) fail(ErrorCode::kInvalidConfig, "sbm needs 0 <= p_out <= p_in <= 1");
    if (feature_dim == 0) fail(ErrorCode::kInvalidConfig, "sbm feature_dim must be positive");
    if (!(0.0 <= feature_signal && feature_signal <= 1.0)) fail(ErrorCode::kInvalidConfig, "feature_signal must lie in [0,1]");
  }
};

// Stochastic block model. Labels are block ids; features are a scaled
// one-hot block indicator (block mod feature_dim) plus uniform noise.
inline Graph generate_sbm(const SbmSpec& spec) {
  spec.check();
  Labels labels;
  for (std::size_t b = 0; b < spec.block_sizes.size(); ++b) labels.insert(labels.end(), spec.block_sizes[b], static_cast<int>(b));
  const auto n = static_cast<Eigen::Index>(labels.size());

  DenseMatrix a = DenseMatrix::Zero(n, n);
  Rng edge_rng(derive_seed(spec.seed, 0x5B3E));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double p = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)] ? spec.p_in : spec.p_out;
      if (edge_rng.bernoulli(p)) a(i, j) = a(j, i) = 1.0;
    }
  }

  DenseMatrix x(n, static_cast<Eigen::Index>(spec.feature_dim));
  Rng feature_rng(derive_seed(spec.seed, 0xFEA7));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto hot = static_cast<Eigen::Index>(static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]) % spec.feature_dim);
    for (Eigen::Index k = 0; k < x.cols(); ++k) {
      const double signal = k == hot ? spec.feature_signal : 0.0;
      x(i, k) = signal + feature_rng.uniform() * (1.0 - spec.feature_signal);
    }
  }

  const int num_classes = static_cast<int>(spec.block_sizes.size());
  std::vector<bool> mask = stratified_train_mask(labels, num_classes, spec.train_fraction, spec.seed);
  return Graph(std::move(a), std::move(x), std::move(labels), std::move(mask), num_classes);
}

// Checkpoint: "PGRM", u32 version, u32 layer count, per layer u32 rows and
// u32 cols, then every weight as a little-endian f64, row-major.
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace io_detail {

template <class T>
void put_le(std::string& out, T value) {
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  out.append(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

template <class T>
T get_le(std::string_view data, std::size_t& pos) {
  if (pos > data.size() || data.size() - pos < sizeof(T)) {
    fail(ErrorCode::kTruncatedFile, "checkpoint ends at byte " + std::to_string(data.size()));
  }
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), data.data() + pos, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  pos += sizeof(T);
  return value;
}

}  // namespace io_detail

inline std::string encode_model(const GcnModel& m) {
  std::string out = "PGRM";
  io_detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  io_detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(m.weights.size()));
  for (const DenseMatrix& w : m.weights) {
    io_detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.rows()));
    io_detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w.cols()));
  }
  for (const DenseMatrix& w : m.weights) {
    for (Eigen::Index i = 0; i < w.size(); ++i) io_detail::put_le<double>(out, w.data()[i]);
  }
  return out;
}

inline GcnModel decode_model(std::string_view data) {
  if (data.size() < 4) fail(ErrorCode::kTruncatedFile, "checkpoint shorter than its magic");
  if (data.substr(0, 4) != "PGRM") fail(ErrorCode::kBadMagic, "not a PGRM checkpoint");
  std::size_t pos = 4;
  const auto version = io_detail::get_le<std::uint32_t>(data, pos);
  if (version != kCheckpointVersion) fail(ErrorCode::kVersionMismatch, "checkpoint version " + std::to_string(version));
  const auto layers = io_detail::get_le<std::uint32_t>(data, pos);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> dims;
  for (std::uint32_t l = 0; l < layers; ++l) {
    const auto r = io_detail::get_le<std::uint32_t>(data, pos);
    const auto c = io_detail::get_le<std::uint32_t>(data, pos);
    dims.emplace_back(r, c);
  }
  GcnModel m;
  for (const auto& [r, c] : dims) {
    DenseMatrix w(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = io_detail::get_le<double>(data, pos);
    m.weights.push_back(std::move(w));
  }
  if (pos != data.size()) fail(ErrorCode::kTruncatedFile, "trailing bytes after checkpoint payload");
  m.check();
  return m;
}

inline void save_model(const GcnModel& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto out = io_detail::open_out(path, std::ios::out | std::ios::binary);
  const std::string bytes = encode_model(m);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline GcnModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return decode_model(buf.str());
}

}  // namespace topoguard
