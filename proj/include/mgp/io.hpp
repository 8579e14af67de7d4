#ifndef MGP_IO_HPP
#define MGP_IO_HPP

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgp/common.hpp"
#include "mgp/eval.hpp"
#include "mgp/kernels.hpp"
#include "mgp/likelihood.hpp"
#include "mgp/mcmc.hpp"
#include "mgp/partition.hpp"
#include "mgp/synth.hpp"

namespace mgp {

using nlohmann::json;

/* Shortest decimal that parses back to the same double. */
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline double parse_double(std::string_view s, const std::string& context) {
  double v = 0.0;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end)
    throw DataError("bad number '" + std::string(s) + "' in " + context);
  return v;
}

/* Rejects config objects carrying keys outside the schema. */
inline void require_keys(const json& obj, std::initializer_list<const char*> allowed,
                         const std::string& context) {
  if (!obj.is_object()) throw ConfigError(context + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (const char* a : allowed)
      if (key == a) ok = true;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + context);
  }
}

inline json tree_to_json(const PartitionTree& tree) {
  json cuts = json::array();
  for (const Cut& c : tree.cuts()) cuts.push_back(json::array({c.level, c.value}));
  return json{{"L", tree.levels()},
              {"domain", json::array({tree.domain().lo, tree.domain().hi})},
              {"cuts", cuts}};
}

inline PartitionTree tree_from_json(const json& j) {
  require_keys(j, {"L", "domain", "cuts"}, "tree");
  if (!j.contains("L") || !j.contains("domain") || !j.contains("cuts"))
    throw ConfigError("tree needs keys L, domain, cuts");
  const Interval domain{j["domain"].at(0).get<double>(), j["domain"].at(1).get<double>()};
  std::vector<Cut> cuts;
  for (const auto& c : j["cuts"]) cuts.push_back({c.at(0).get<int>(), c.at(1).get<double>()});
  return PartitionTree::from_cuts(domain, j["L"].get<int>(), std::move(cuts));
}

inline json hyperparams_to_json(const Hyperparams& theta) {
  return json{{"d", theta.d},
              {"kappa", theta.kappa},
              {"sigma2", theta.sigma2},
              {"bandwidth_mode",
               theta.bandwidth_mode == BandwidthMode::kFractal ? "fractal" : "fixed"}};
}

inline Hyperparams hyperparams_from_json(const json& j) {
  require_keys(j, {"d", "kappa", "sigma2", "bandwidth_mode"}, "hyperparams");
  for (const char* key : {"d", "kappa", "sigma2", "bandwidth_mode"})
    if (!j.contains(key)) throw ConfigError(std::string("hyperparams need key ") + key);
  Hyperparams theta;
  theta.d = j["d"].get<std::vector<double>>();
  theta.kappa = j["kappa"].get<double>();
  theta.sigma2 = j["sigma2"].get<double>();
  const std::string mode = j["bandwidth_mode"].get<std::string>();
  if (mode == "fractal")
    theta.bandwidth_mode = BandwidthMode::kFractal;
  else if (mode == "fixed")
    theta.bandwidth_mode = BandwidthMode::kFixed;
  else
    throw ConfigError("bandwidth_mode must be 'fractal' or 'fixed'");
  theta.check(theta.levels());
  if (variance_budget_exceeded(theta))
    std::cerr << "warning: sum of squared child-level scales exceeds 1; variance grows with "
                 "tree depth\n";
  return theta;
}

inline PartitionPrior prior_from_json(const json& j, Interval domain) {
  require_keys(j, {"type", "edges", "weights"}, "prior");
  const std::string type = j.value("type", "uniform");
  if (type == "uniform") return PartitionPrior::uniform(domain);
  if (type == "piecewise") {
    if (!j.contains("edges") || !j.contains("weights"))
      throw ConfigError("piecewise prior needs edges and weights");
    return PartitionPrior::from_weights(j["edges"].get<std::vector<double>>(),
                                        j["weights"].get<std::vector<double>>());
  }
  throw ConfigError("prior type must be 'uniform' or 'piecewise'");
}

/* Trial CSV: header row `x,<x1>,...,<xn>`, then one `trial_j,<y...>` row per
 * trial, doubles as shortest round-trip decimals. */
inline void write_trials_csv(std::ostream& os, const TrialSet& data) {
  os << "x";
  for (int i = 0; i < data.n(); ++i) os << ',' << format_double(data.locations[i]);
  os << '\n';
  for (int j = 0; j < data.num_trials(); ++j) {
    os << "trial_" << (j + 1);
    for (int i = 0; i < data.n(); ++i) os << ',' << format_double(data.trials(i, j));
    os << '\n';
  }
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline TrialSet read_trials_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw DataError("empty trial CSV");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto header = split_csv_line(line);
  if (header.size() < 3 || header[0] != "x")
    throw DataError("trial CSV must start with 'x,<x1>,...' and at least 2 locations");
  const int n = static_cast<int>(header.size()) - 1;
  Eigen::VectorXd locs(n);
  for (int i = 0; i < n; ++i)
    locs[i] = parse_double(header[static_cast<std::size_t>(i) + 1], "location header");

  std::vector<Eigen::VectorXd> rows;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != n + 1)
      throw DataError("trial row has wrong number of fields");
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i)
      y[i] = parse_double(fields[static_cast<std::size_t>(i) + 1], "trial row");
    rows.push_back(std::move(y));
  }
  if (rows.empty()) throw DataError("trial CSV has no trial rows");
  Eigen::MatrixXd trials(n, static_cast<int>(rows.size()));
  for (std::size_t j = 0; j < rows.size(); ++j) trials.col(static_cast<Eigen::Index>(j)) = rows[j];
  return TrialSet(std::move(locs), std::move(trials));
}

inline json sample_to_json(const PosteriorSample& s) {
  return json{{"tree", tree_to_json(s.tree)},
              {"log_likelihood", s.log_likelihood},
              {"log_prior", s.log_prior},
              {"log_proposal", s.log_proposal},
              {"weight", s.weight}};
}

/* JSON-lines export, one posterior sample per line. */
inline void write_samples_jsonl(std::ostream& os, const std::vector<PosteriorSample>& samples) {
  for (const auto& s : samples) os << sample_to_json(s).dump() << '\n';
}

inline std::vector<PosteriorSample> read_samples_jsonl(std::istream& is) {
  std::vector<PosteriorSample> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    json j = json::parse(line);
    require_keys(j, {"tree", "log_likelihood", "log_prior", "log_proposal", "weight"}, "sample");
    out.push_back({tree_from_json(j.at("tree")), nullptr, j.at("log_likelihood").get<double>(),
                   j.at("log_prior").get<double>(), j.at("log_proposal").get<double>(),
                   j.at("weight").get<double>()});
  }
  if (out.empty()) throw DataError("sample file holds no samples");
  return out;
}

inline void write_trace_csv(std::ostream& os, const std::vector<ChainResult>& chains) {
  os << "iteration,chain,log_likelihood\n";
  for (std::size_t c = 0; c < chains.size(); ++c)
    for (std::size_t it = 0; it < chains[c].trace.size(); ++it)
      os << it << ',' << c << ',' << format_double(chains[c].trace[it]) << '\n';
}

inline void write_matrix_csv(std::ostream& os, const Eigen::MatrixXd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) os << ',';
      os << format_double(m(i, j));
    }
    os << '\n';
  }
}

inline void write_histogram_csv(std::ostream& os, const Histogram& h) {
  os << "bin_lo,bin_hi,mass\n";
  for (std::size_t b = 0; b + 1 < h.edges.size(); ++b)
    os << format_double(h.edges[b]) << ',' << format_double(h.edges[b + 1]) << ','
       << format_double(h.mass[b]) << '\n';
}

/* Per-level segment boundaries for plotting hierarchical segmentations. */
inline void write_boundaries_csv(std::ostream& os, const PartitionTree& tree) {
  os << "level,set_index,lo,hi\n";
  for (int l = 0; l < tree.levels(); ++l) {
    const auto& sets = tree.level_sets(l);
    for (std::size_t i = 0; i < sets.size(); ++i)
      os << l << ',' << i << ',' << format_double(sets[i].lo) << ','
         << format_double(sets[i].hi) << '\n';
  }
}

inline json truth_to_json(const SynthTruth& truth) {
  json levels = json::array();
  for (const auto& m : truth.trial_level_funcs) {
    json trials = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      json col = json::array();
      for (Eigen::Index i = 0; i < m.rows(); ++i) col.push_back(m(i, j));
      trials.push_back(std::move(col));
    }
    levels.push_back(std::move(trials));
  }
  json f0 = json::array();
  for (Eigen::Index i = 0; i < truth.f0.size(); ++i) f0.push_back(truth.f0[i]);
  return json{{"tree", tree_to_json(truth.tree)},
              {"f0", std::move(f0)},
              {"trial_level_funcs", std::move(levels)}};
}

inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  os << contents;
  if (!os) throw DataError("failed writing " + path.string());
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace mgp

#endif
