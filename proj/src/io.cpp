#include "mmloc/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace mmloc::io {

using nlohmann::json;

void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("io", "cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("io", "failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("io", "cannot rename " + tmp.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing_file", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

Vec2 to_point(const json& j) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
    throw Error("schema", "expected a point [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error("schema", std::string("malformed JSON: ") + e.what());
  }
}

}  // namespace

bool is_stock_scenario(const std::string& name) { return name == "rect3" || name == "rect4" || name == "lroom3"; }

Scenario stock_scenario(const std::string& name) {
  Scenario s;
  s.name = name;
  if (name == "rect3" || name == "rect4") {
    s.room = Room({{0, 0}, {15, 0}, {15, 10}, {0, 10}});
    s.aps = name == "rect3" ? std::vector<Vec2>{{4, 3}, {7.5, 6}, {11, 3}}
                            : std::vector<Vec2>{{2, 1}, {4, 7}, {10, 4}, {14, 9}};
  } else if (name == "lroom3") {
    // 6x10 lower-left section joined to an 8x18 tall section on the right.
    s.room = Room({{0, 0}, {14, 0}, {14, 18}, {6, 18}, {6, 10}, {0, 10}});
    s.aps = {{4, 7}, {10, 6}, {13, 16}};
    s.va_coverage_threshold = 0.02;
  } else {
    throw Error("missing_file", "unknown stock scenario '" + name + "'");
  }
  validate_scenario(s);
  return s;
}

Scenario parse_scenario(const std::string& json_text, const std::string& name) {
  const json j = parse_json(json_text);
  if (!j.is_object() || !j.contains("room") || !j["room"].contains("vertices") || !j.contains("aps"))
    throw Error("schema", "scenario needs room.vertices and aps");
  Scenario s;
  s.name = j.value("name", name);
  std::vector<Vec2> verts;
  for (const auto& v : j["room"]["vertices"]) verts.push_back(to_point(v));
  s.room = Room(std::move(verts));
  for (const auto& a : j["aps"]) s.aps.push_back(to_point(a));
  if (j.contains("va_coverage_threshold")) s.va_coverage_threshold = j["va_coverage_threshold"].get<double>();
  if (j.contains("probe_grid_m")) s.probe_grid_m = j["probe_grid_m"].get<double>();
  validate_scenario(s);
  return s;
}

std::string scenario_to_json(const Scenario& s) {
  json j;
  json verts = json::array();
  for (auto v : s.room.vertices()) verts.push_back({v.x, v.y});
  j["room"]["vertices"] = verts;
  json aps = json::array();
  for (auto a : s.aps) aps.push_back({a.x, a.y});
  j["aps"] = aps;
  j["va_coverage_threshold"] = s.va_coverage_threshold;
  j["probe_grid_m"] = s.probe_grid_m;
  return j.dump(2) + "\n";
}

Scenario load_scenario(const std::string& name_or_path) {
  if (is_stock_scenario(name_or_path)) return stock_scenario(name_or_path);
  const std::filesystem::path p(name_or_path);
  return parse_scenario(read_file(p), p.stem().string());
}

std::string dataset_to_csv(const Dataset& ds, bool audit_columns) {
  const std::size_t width = ds.n_anchors > 0 ? ds.n_anchors - 1 : 0;
  std::string out = "traj,step,truth_x,truth_y,label_x,label_y,label_source,ref_anchor";
  for (std::size_t k = 0; k < width; ++k) out += ",adoa_" + std::to_string(k);
  for (std::size_t k = 0; k < width; ++k) out += ",mask_" + std::to_string(k);
  if (audit_columns) out += ",residual_norm,converged,iterations";
  out += '\n';
  for (const auto& s : ds.samples) {
    out += std::to_string(s.traj) + ',' + std::to_string(s.step) + ',' + fmt_double(s.truth.x) + ',' +
           fmt_double(s.truth.y) + ',' + fmt_double(s.label.x) + ',' + fmt_double(s.label.y) + ',' +
           to_string(s.label_source) + ',' + std::to_string(s.features.ref_anchor);
    for (double a : s.features.adoa) out += ',' + fmt_double(a);
    for (auto m : s.features.mask) out += m ? ",1" : ",0";
    if (audit_columns) {
      if (s.has_audit)
        out += ',' + fmt_double(s.residual_norm) + ',' + (s.converged ? "1" : "0") + ',' + std::to_string(s.iterations);
      else
        out += ",,,";
    }
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  cells.push_back(cur);
  return cells;
}

double parse_double(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("schema", "line " + std::to_string(line) + ": bad number '" + s + "'");
  }
}

int parse_int(const std::string& s, std::size_t line) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("schema", "line " + std::to_string(line) + ": bad integer '" + s + "'");
  }
}

}  // namespace

Dataset dataset_from_csv(const std::string& text, const AnchorRoster& roster) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error("schema", "dataset CSV is empty");
  const auto header = split_csv_line(line);
  const std::size_t width = roster.size() - 1;
  const std::size_t base = 8 + 2 * width;
  if (header.size() != base && header.size() != base + 3)
    throw Error("schema", "dataset has " + std::to_string(header.size()) + " columns, roster expects " +
                              std::to_string(base) + " (anchors=" + std::to_string(roster.size()) + ")");
  if (header[0] != "traj" || header[7] != "ref_anchor" || header[8] != "adoa_0")
    throw Error("schema", "unexpected dataset header");
  const bool audit = header.size() == base + 3;

  Dataset ds;
  ds.fingerprint = roster.fingerprint();
  ds.n_anchors = roster.size();
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto c = split_csv_line(line);
    if (c.size() != header.size()) throw Error("schema", "line " + std::to_string(lineno) + ": wrong column count");
    Sample s;
    s.traj = parse_int(c[0], lineno);
    s.step = parse_int(c[1], lineno);
    s.truth = {parse_double(c[2], lineno), parse_double(c[3], lineno)};
    s.label = {parse_double(c[4], lineno), parse_double(c[5], lineno)};
    s.label_source = label_source_from_string(c[6]);
    s.features.ref_anchor = parse_int(c[7], lineno);
    if (s.features.ref_anchor < 0 || static_cast<std::size_t>(s.features.ref_anchor) >= roster.size())
      throw Error("schema", "line " + std::to_string(lineno) + ": ref_anchor out of range");
    for (std::size_t k = 0; k < width; ++k) s.features.adoa.push_back(parse_double(c[8 + k], lineno));
    for (std::size_t k = 0; k < width; ++k) {
      const int m = parse_int(c[8 + width + k], lineno);
      if (m != 0 && m != 1) throw Error("schema", "line " + std::to_string(lineno) + ": mask must be 0 or 1");
      s.features.mask.push_back(static_cast<std::uint8_t>(m));
      if (!m && s.features.adoa[k] != kMissingAdoa)
        throw Error("schema", "line " + std::to_string(lineno) + ": masked entry must hold the sentinel");
    }
    if (audit && !c[base].empty()) {
      s.has_audit = true;
      s.residual_norm = parse_double(c[base], lineno);
      s.converged = parse_int(c[base + 1], lineno) != 0;
      s.iterations = parse_int(c[base + 2], lineno);
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

namespace {

json matrix_json(const nn::Model& m, int layer) {
  json rows = json::array();
  for (int i = 0; i < m.fan_in(layer); ++i) {
    json row = json::array();
    for (int j = 0; j < m.fan_out(layer); ++j) row.push_back(m.weight(layer, i, j));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

std::string model_to_json(const nn::Model& m) {
  json j;
  const auto& d = m.dims();
  j["dims"] = {d.n_input, d.n_hidden1, d.n_hidden2, d.n_output};
  j["node_factor"] = m.node_factor();
  json weights = json::array();
  json biases = json::array();
  for (int l = 0; l < 3; ++l) {
    weights.push_back(matrix_json(m, l));
    json b = json::array();
    for (int k = 0; k < m.fan_out(l); ++k) b.push_back(m.bias(l, k));
    biases.push_back(b);
  }
  j["weights"] = weights;
  j["biases"] = biases;
  j["normalization"] = {{"mean", m.feature_mean}, {"std", m.feature_std}};
  j["roster_fingerprint"] = m.roster_fingerprint;
  j["reference_rule"] = m.reference_rule;
  j["training"] = {{"sigma", m.meta.sigma},
                   {"label_source", m.meta.label_source},
                   {"seed", m.meta.seed},
                   {"dropout", m.meta.dropout},
                   {"learning_rate", m.meta.learning_rate},
                   {"best_epoch", m.meta.best_epoch},
                   {"validation_mse", m.meta.validation_mse},
                   {"n_train", m.meta.n_train}};
  return j.dump(2) + "\n";
}

nn::Model model_from_json(const std::string& text) {
  const json j = parse_json(text);
  try {
    const auto dims_v = j.at("dims").get<std::vector<int>>();
    if (dims_v.size() != 4) throw Error("schema", "dims must have 4 entries");
    nn::Model m(nn::LayerDims{dims_v[0], dims_v[1], dims_v[2], dims_v[3]}, j.at("node_factor").get<double>());
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    if (weights.size() != 3 || biases.size() != 3) throw Error("schema", "expected 3 layers");
    for (int l = 0; l < 3; ++l) {
      const auto& w = weights[static_cast<std::size_t>(l)];
      if (w.size() != static_cast<std::size_t>(m.fan_in(l))) throw Error("schema", "weight matrix row count");
      for (int i = 0; i < m.fan_in(l); ++i) {
        const auto& row = w[static_cast<std::size_t>(i)];
        if (row.size() != static_cast<std::size_t>(m.fan_out(l))) throw Error("schema", "weight matrix column count");
        for (int k = 0; k < m.fan_out(l); ++k) m.weight(l, i, k) = row[static_cast<std::size_t>(k)].get<double>();
      }
      const auto& b = biases[static_cast<std::size_t>(l)];
      if (b.size() != static_cast<std::size_t>(m.fan_out(l))) throw Error("schema", "bias length");
      for (int k = 0; k < m.fan_out(l); ++k) m.bias(l, k) = b[static_cast<std::size_t>(k)].get<double>();
    }
    m.feature_mean = j.at("normalization").at("mean").get<std::vector<double>>();
    m.feature_std = j.at("normalization").at("std").get<std::vector<double>>();
    m.roster_fingerprint = j.value("roster_fingerprint", "");
    m.reference_rule = j.value("reference_rule", "first_valid");
    if (j.contains("training")) {
      const auto& t = j["training"];
      m.meta.sigma = t.value("sigma", 0.0);
      m.meta.label_source = t.value("label_source", "truth");
      m.meta.seed = t.value("seed", std::uint64_t{0});
      m.meta.dropout = t.value("dropout", 0.0);
      m.meta.learning_rate = t.value("learning_rate", 0.0);
      m.meta.best_epoch = t.value("best_epoch", 0);
      m.meta.validation_mse = t.value("validation_mse", 0.0);
      m.meta.n_train = t.value("n_train", std::size_t{0});
    }
    m.validate();
    return m;
  } catch (const json::exception& e) {
    throw Error("schema", std::string("bad model file: ") + e.what());
  }
}

std::string config_to_json(const nn::TrainConfig& c) {
  json j{{"node_factor", c.node_factor},     {"dropout", c.dropout},   {"learning_rate", c.learning_rate},
         {"batch_size", c.batch_size},       {"max_epochs", c.max_epochs}, {"patience", c.patience},
         {"validation_fraction", c.validation_fraction}, {"seed", c.seed}};
  return j.dump(2) + "\n";
}

nn::TrainConfig config_from_json(const std::string& text, const nn::TrainConfig& defaults) {
  const json j = parse_json(text);
  try {
    nn::TrainConfig c = defaults;
    c.node_factor = j.value("node_factor", c.node_factor);
    c.dropout = j.value("dropout", c.dropout);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.validation_fraction = j.value("validation_fraction", c.validation_fraction);
    c.seed = j.value("seed", c.seed);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw Error("schema", std::string("bad config file: ") + e.what());
  }
}

}  // namespace mmloc::io
