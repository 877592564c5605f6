#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "xbart/config.hpp"
#include "xbart/dataset.hpp"
#include "xbart/dgp.hpp"
#include "xbart/error.hpp"
#include "xbart/sampler.hpp"
#include "xbart/tree.hpp"

namespace xbart {

// ---------------------------------------------------------------------------
// CSV

/// Parsed numeric CSV: optional header names plus column-major values.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::size_t num_rows() const { return columns.empty() ? 0 : columns.front().size(); }
  std::size_t num_cols() const { return columns.size(); }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

inline std::string cell_label(std::size_t line, std::size_t col, const std::vector<std::string>& header) {
  std::string s = "line " + std::to_string(line) + ", column " + std::to_string(col + 1);
  if (col < header.size()) s += " ('" + header[col] + "')";
  return s;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

inline CsvTable read_csv(const std::string& path, bool header) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split_fields(line);
    if (first && header) {
      for (const auto f : fields) table.header.emplace_back(f);
      table.columns.resize(fields.size());
      first = false;
      continue;
    }
    if (first) {
      table.columns.resize(fields.size());
      first = false;
    }
    if (fields.size() != table.columns.size()) {
      throw InputError("line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                       " fields, expected " + std::to_string(table.columns.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto f = fields[c];
      if (f.empty()) throw InputError(detail::cell_label(line_no, c, table.header) + ": empty cell");
      double v = 0.0;
      const auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        throw InputError(detail::cell_label(line_no, c, table.header) + ": '" + std::string(f) +
                         "' is not a number");
      }
      if (!std::isfinite(v)) {
        throw InputError(detail::cell_label(line_no, c, table.header) + ": non-finite value");
      }
      table.columns[c].push_back(v);
    }
  }
  if (table.num_rows() == 0) throw InputError("'" + path + "' holds no data rows");
  return table;
}

/// Column index for a target given by header name or by 0-based index.
inline std::size_t resolve_column(const CsvTable& table, const std::string& target) {
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (table.header[c] == target) return c;
  }
  std::size_t idx = 0;
  const auto res = std::from_chars(target.data(), target.data() + target.size(), idx);
  if (res.ec == std::errc() && res.ptr == target.data() + target.size()) {
    if (idx >= table.num_cols()) throw InputError("target column index " + target + " is out of range");
    return idx;
  }
  throw InputError("target column '" + target + "' not found");
}

inline Dataset load_csv(const std::string& path, const std::string& target, bool header = true) {
  const CsvTable table = read_csv(path, header);
  if (table.num_cols() < 2) throw InputError("need at least one predictor column and a target column");
  const std::size_t t = resolve_column(table, target);
  const std::size_t n = table.num_rows();
  std::vector<double> xs;
  xs.reserve(n * (table.num_cols() - 1));
  std::vector<std::string> names;
  for (std::size_t c = 0; c < table.num_cols(); ++c) {
    if (c == t) continue;
    xs.insert(xs.end(), table.columns[c].begin(), table.columns[c].end());
    names.push_back(header ? table.header[c] : "x" + std::to_string(names.size() + 1));
  }
  return Dataset(Matrix(n, table.num_cols() - 1, std::move(xs)), table.columns[t], std::move(names));
}

/// Writes predictors then the response, shortest round-trip decimal form.
inline void write_csv(const Dataset& data, const std::string& path, const std::string& target_name = "y") {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  for (const auto& name : data.names()) out << name << ',';
  out << target_name << '\n';
  for (std::size_t i = 0; i < data.num_rows(); ++i) {
    for (std::size_t v = 0; v < data.num_vars(); ++v) out << detail::format_double(data.value(i, v)) << ',';
    out << detail::format_double(data.y()[i]) << '\n';
  }
}

inline void write_predictions(const std::vector<double>& pred, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << "prediction\n";
  for (double p : pred) out << detail::format_double(p) << '\n';
}

// ---------------------------------------------------------------------------
// Model artifact

inline constexpr int kModelFormatVersion = 1;

struct TrainingMetadata {
  std::size_t num_rows = 0;
  std::size_t num_vars = 0;
  std::vector<std::string> column_names;
  std::string target;
  std::uint64_t checksum = 0;

  friend bool operator==(const TrainingMetadata&, const TrainingMetadata&) = default;
};

struct ModelArtifact {
  int format_version = kModelFormatVersion;
  PosteriorDraws draws;
  TrainingMetadata training;

  friend bool operator==(const ModelArtifact&, const ModelArtifact&) = default;
};

inline ModelArtifact make_artifact(PosteriorDraws draws, const Dataset& data, std::string target) {
  ModelArtifact a;
  a.draws = std::move(draws);
  a.training = TrainingMetadata{data.num_rows(), data.num_vars(), data.names(), std::move(target), checksum(data)};
  return a;
}

namespace detail {

using nlohmann::json;

inline json config_to_json(const ResolvedConfig& c) {
  return json{{"num_trees", c.num_trees},
              {"num_sweeps", c.num_sweeps},
              {"burnin", c.burnin},
              {"tau", c.tau},
              {"alpha", c.alpha},
              {"beta", c.beta},
              {"num_cutpoints", c.num_cutpoints},
              {"mtry", c.mtry},
              {"sigma_prior_shape", c.sigma_prior_shape},
              {"sigma_prior_scale", c.sigma_prior_scale},
              {"seed", c.seed},
              {"null_weight_multiplier", c.null_weight_multiplier},
              {"max_depth", c.max_depth},
              {"mh", c.mh}};
}

inline ResolvedConfig config_from_json(const json& j) {
  ResolvedConfig c;
  c.num_trees = j.at("num_trees").get<std::size_t>();
  c.num_sweeps = j.at("num_sweeps").get<std::size_t>();
  c.burnin = j.at("burnin").get<std::size_t>();
  c.tau = j.at("tau").get<double>();
  c.alpha = j.at("alpha").get<double>();
  c.beta = j.at("beta").get<double>();
  c.num_cutpoints = j.at("num_cutpoints").get<std::size_t>();
  c.mtry = j.at("mtry").get<std::size_t>();
  c.sigma_prior_shape = j.at("sigma_prior_shape").get<double>();
  c.sigma_prior_scale = j.at("sigma_prior_scale").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.null_weight_multiplier = j.at("null_weight_multiplier").get<double>();
  c.max_depth = j.at("max_depth").get<int>();
  c.mh = j.at("mh").get<bool>();
  return c;
}

// Preorder: ["s", var, cut] for a split, ["l", mu] for a leaf.
inline void tree_to_json(const Tree& t, std::size_t i, json& out) {
  const auto& n = t.node(i);
  if (n.is_leaf()) {
    out.push_back(json::array({"l", n.mu}));
    return;
  }
  out.push_back(json::array({"s", n.var, n.cut}));
  tree_to_json(t, static_cast<std::size_t>(n.left), out);
  tree_to_json(t, static_cast<std::size_t>(n.right), out);
}

inline json tree_to_json(const Tree& t) {
  json out = json::array();
  tree_to_json(t, Tree::root(), out);
  return out;
}

inline void tree_from_json(const json& nodes, std::size_t& pos, Tree& t, std::size_t node, int guard) {
  if (guard > 100000) throw InputError("tree nesting too deep");
  if (pos >= nodes.size()) throw InputError("tree node list ends early");
  const json& n = nodes.at(pos++);
  const auto kind = n.at(0).get<std::string>();
  if (kind == "l") {
    t.set_leaf_value(node, n.at(1).get<double>());
    return;
  }
  if (kind != "s") throw InputError("unknown tree node kind '" + kind + "'");
  const auto var = n.at(1).get<std::size_t>();
  if (var >= t.num_vars()) throw InputError("tree splits on variable " + std::to_string(var) + " beyond the predictor count");
  const auto [left, right] = t.split(node, var, n.at(2).get<double>());
  tree_from_json(nodes, pos, t, left, guard + 1);
  tree_from_json(nodes, pos, t, right, guard + 1);
}

inline Tree tree_from_json(const json& nodes, std::size_t num_vars) {
  if (!nodes.is_array() || nodes.empty()) throw InputError("tree must be a nonempty array");
  Tree t(num_vars);
  std::size_t pos = 0;
  tree_from_json(nodes, pos, t, Tree::root(), 0);
  if (pos != nodes.size()) throw InputError("tree has trailing nodes");
  return t;
}

inline std::string checksum_hex(std::uint64_t c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(c));
  return buf;
}

}  // namespace detail

/// Single-file JSON. Header fields first, then one retained sweep per block
/// with one tree per line.
inline std::string serialize_model(const ModelArtifact& m) {
  using detail::json;
  const json training{{"num_rows", m.training.num_rows},
                      {"num_vars", m.training.num_vars},
                      {"column_names", m.training.column_names},
                      {"target", m.training.target},
                      {"checksum", detail::checksum_hex(m.training.checksum)}};
  std::ostringstream out;
  out << "{\n";
  out << "  \"format\": \"xbart-model\",\n";
  out << "  \"format_version\": " << m.format_version << ",\n";
  out << "  \"config\": " << detail::config_to_json(m.draws.config).dump() << ",\n";
  out << "  \"training\": " << training.dump() << ",\n";
  out << "  \"sigma2_trace\": " << json(m.draws.sigma2_trace).dump() << ",\n";
  out << "  \"sweeps\": [";
  for (std::size_t s = 0; s < m.draws.sweeps.size(); ++s) {
    out << (s == 0 ? "\n" : ",\n") << "    [";
    const auto& forest = m.draws.sweeps[s];
    for (std::size_t l = 0; l < forest.size(); ++l) {
      out << (l == 0 ? "\n" : ",\n") << "      " << detail::tree_to_json(forest[l]).dump();
    }
    out << "\n    ]";
  }
  out << "\n  ]\n}\n";
  return out.str();
}

inline ModelArtifact deserialize_model(std::string_view text) {
  using detail::json;
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError("malformed model file: " + std::string(e.what()), std::min(e.byte, text.size()));
  }
  try {
    if (!j.is_object() || j.value("format", std::string{}) != "xbart-model") {
      throw ParseError("not an xbart model file", 0);
    }
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) throw IncompatibleVersion(version, kModelFormatVersion);

    ModelArtifact m;
    m.format_version = version;
    const json& t = j.at("training");
    m.training.num_rows = t.at("num_rows").get<std::size_t>();
    m.training.num_vars = t.at("num_vars").get<std::size_t>();
    m.training.column_names = t.at("column_names").get<std::vector<std::string>>();
    m.training.target = t.at("target").get<std::string>();
    m.training.checksum = std::stoull(t.at("checksum").get<std::string>(), nullptr, 16);

    m.draws.config = detail::config_from_json(j.at("config"));
    m.draws.num_vars = m.training.num_vars;
    m.draws.sigma2_trace = j.at("sigma2_trace").get<std::vector<double>>();
    for (const json& sweep : j.at("sweeps")) {
      std::vector<Tree> forest;
      for (const json& tree : sweep) forest.push_back(detail::tree_from_json(tree, m.draws.num_vars));
      if (forest.size() != m.draws.config.num_trees) throw InputError("sweep holds the wrong number of trees");
      m.draws.sweeps.push_back(std::move(forest));
    }
    if (m.draws.sweeps.empty()) throw InputError("model holds no retained sweeps");
    return m;
  } catch (const json::exception& e) {
    throw ParseError("invalid model structure: " + std::string(e.what()), text.size());
  } catch (const ParseError&) {
    throw;
  } catch (const IncompatibleVersion&) {
    throw;
  } catch (const InputError& e) {
    throw ParseError(std::string("invalid model structure: ") + e.what(), text.size());
  } catch (const std::logic_error& e) {
    throw ParseError(std::string("invalid model structure: ") + e.what(), text.size());
  }
}

inline void save_model(const ModelArtifact& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out << serialize_model(m);
  if (!out) throw InputError("failed writing '" + path + "'");
}

inline ModelArtifact load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_model(buf.str());
}

/// Predictor matrix for a fitted model. With a header, columns are matched
/// by training name (extra columns such as the target are ignored).
/// Without one, the file must hold exactly V columns.
inline Matrix load_features(const std::string& path, const TrainingMetadata& meta, bool header = true) {
  const CsvTable table = read_csv(path, header);
  const std::size_t n = table.num_rows();
  const std::size_t num_vars = meta.num_vars;
  std::vector<std::size_t> pick;
  if (header) {
    for (const auto& name : meta.column_names) {
      std::size_t found = table.num_cols();
      for (std::size_t c = 0; c < table.num_cols(); ++c) {
        if (table.header[c] == name) found = c;
      }
      if (found == table.num_cols()) throw InputError("prediction input lacks column '" + name + "'");
      pick.push_back(found);
    }
  } else if (table.num_cols() == num_vars) {
    for (std::size_t c = 0; c < num_vars; ++c) pick.push_back(c);
  } else {
    throw InputError("prediction input has " + std::to_string(table.num_cols()) + " columns, model expects " +
                     std::to_string(num_vars));
  }
  std::vector<double> xs;
  xs.reserve(n * num_vars);
  for (const std::size_t c : pick) xs.insert(xs.end(), table.columns[c].begin(), table.columns[c].end());
  return Matrix(n, num_vars, std::move(xs));
}

}  // namespace xbart

namespace xbart {

// ---------------------------------------------------------------------------
// Benchmark suite files
//
// {
//   "seed": 2019,
//   "defaults": { "num_sweeps": 40, ... },      optional, applied to every cell
//   "cells": [
//     { "dgp": "linear", "n": 10000, "d": 30, "kappa": 1,
//       "sigma_from_variance": false, "config": { "num_trees": 20 } }
//   ]
// }

struct BenchSuite {
  std::uint64_t seed = 0;
  std::vector<BenchCell> cells;
};

namespace detail {

inline void apply_config_overrides(const json& j, XbartConfig& c) {
  for (const auto& [key, value] : j.items()) {
    if (key == "num_trees") c.num_trees = value.get<std::size_t>();
    else if (key == "num_sweeps") c.num_sweeps = value.get<std::size_t>();
    else if (key == "burnin") c.burnin = value.get<std::size_t>();
    else if (key == "tau") c.tau = value.get<double>();
    else if (key == "alpha") c.alpha = value.get<double>();
    else if (key == "beta") c.beta = value.get<double>();
    else if (key == "num_cutpoints") c.num_cutpoints = value.get<std::size_t>();
    else if (key == "mtry") c.mtry = value.get<std::size_t>();
    else if (key == "sigma_prior_shape") c.sigma_prior_shape = value.get<double>();
    else if (key == "sigma_prior_scale") c.sigma_prior_scale = value.get<double>();
    else if (key == "null_weight_multiplier") c.null_weight_multiplier = value.get<double>();
    else if (key == "max_depth") c.max_depth = value.get<int>();
    else if (key == "mh") c.mh = value.get<bool>();
    else throw InputError("unknown config key '" + key + "'");
  }
}

}  // namespace detail

inline BenchSuite parse_suite(std::string_view text) {
  using detail::json;
  json j;
  try {
    j = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ParseError("malformed suite file: " + std::string(e.what()), std::min(e.byte, text.size()));
  }
  try {
    BenchSuite suite;
    suite.seed = j.value("seed", std::uint64_t{0});
    XbartConfig defaults;
    if (j.contains("defaults")) detail::apply_config_overrides(j.at("defaults"), defaults);
    for (const json& c : j.at("cells")) {
      BenchCell cell;
      cell.dgp.dgp = parse_dgp(c.at("dgp").get<std::string>());
      cell.dgp.n = c.at("n").get<std::size_t>();
      cell.dgp.d = c.value("d", std::size_t{30});
      cell.dgp.kappa = c.value("kappa", 1.0);
      cell.dgp.sigma_from_variance = c.value("sigma_from_variance", false);
      cell.dgp.validate();
      cell.config = defaults;
      if (c.contains("config")) detail::apply_config_overrides(c.at("config"), cell.config);
      suite.cells.push_back(std::move(cell));
    }
    if (suite.cells.empty()) throw InputError("suite lists no cells");
    return suite;
  } catch (const json::exception& e) {
    throw ParseError("invalid suite structure: " + std::string(e.what()), text.size());
  }
}

inline BenchSuite load_suite(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_suite(buf.str());
}

}  // namespace xbart
