#include "rcalad/data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "rcalad/error.hpp"
#include "rcalad/rng.hpp"

namespace rcalad {

namespace {

ColumnType parse_column_type(const std::string& s) {
  if (s == "continuous") return ColumnType::continuous;
  if (s == "categorical") return ColumnType::categorical;
  if (s == "label") return ColumnType::label;
  if (s == "ignore") return ColumnType::ignore;
  fail(ErrorCode::config, "unknown column type '" + s + "'");
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

void split_line(std::string_view line, char delim, std::vector<std::string>& out) {
  out.clear();
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delim) {
      out.emplace_back(trim(cell));
      cell.clear();
    } else {
      cell += c;
    }
  }
  out.emplace_back(trim(cell));
}

bool parse_number(std::string_view s, double& v) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && p == s.data() + s.size() && std::isfinite(v);
}

} // namespace

void Schema::validate() const {
  require(!columns.empty(), ErrorCode::config, "schema '" + name + "' declares no columns");
  std::size_t labels = 0, features = 0;
  for (const auto& c : columns) {
    labels += c.type == ColumnType::label;
    features += c.type == ColumnType::continuous || c.type == ColumnType::categorical;
  }
  require(labels <= 1, ErrorCode::config, "schema '" + name + "' has more than one label column");
  require(features >= 1, ErrorCode::config, "schema '" + name + "' has no feature columns");
  if (labels == 1)
    require(anomaly_labels.empty() != normal_labels.empty(), ErrorCode::config,
            "schema '" + name + "' must list either anomaly_labels or normal_labels");
}

Schema Schema::from_yaml(const YAML::Node& node) {
  static const std::set<std::string> known = {
      "name",    "header",         "delimiter",     "missing_token",    "missing",
      "columns", "anomaly_labels", "normal_labels", "expected_features"};
  require(node.IsMap(), ErrorCode::config, "schema must be a mapping");
  for (const auto& kv : node)
    require(known.count(kv.first.as<std::string>()) == 1, ErrorCode::config,
            "unknown schema key '" + kv.first.as<std::string>() + "'");
  Schema s;
  try {
    s.name = node["name"].as<std::string>("");
    s.header = node["header"].as<bool>(false);
    const auto delim = node["delimiter"].as<std::string>(",");
    require(delim.size() == 1, ErrorCode::config, "delimiter must be one character");
    s.delimiter = delim[0];
    s.missing_token = node["missing_token"].as<std::string>("?");
    const auto missing = node["missing"].as<std::string>("error");
    if (missing == "error")
      s.missing = MissingPolicy::error;
    else if (missing == "drop_column")
      s.missing = MissingPolicy::drop_column;
    else
      fail(ErrorCode::config, "unknown missing policy '" + missing + "'");
    // entries are {name, type} or {count, type, prefix} for runs of columns
    for (const auto& c : node["columns"]) {
      const ColumnType type = parse_column_type(c["type"].as<std::string>());
      if (c["count"]) {
        const auto count = c["count"].as<std::size_t>();
        const auto prefix = c["prefix"].as<std::string>("c");
        const std::size_t base = s.columns.size();
        for (std::size_t i = 0; i < count; ++i)
          s.columns.push_back({prefix + std::to_string(base + i), type});
      } else {
        s.columns.push_back({c["name"].as<std::string>(), type});
      }
    }
    if (node["anomaly_labels"]) s.anomaly_labels = node["anomaly_labels"].as<std::vector<std::string>>();
    if (node["normal_labels"]) s.normal_labels = node["normal_labels"].as<std::vector<std::string>>();
    s.expected_features = node["expected_features"].as<std::size_t>(0);
  } catch (const YAML::Exception& e) {
    fail(ErrorCode::config, std::string("malformed schema: ") + e.what());
  }
  s.validate();
  return s;
}

Schema Schema::load(const std::filesystem::path& path) {
  require(std::filesystem::exists(path), ErrorCode::io, "schema file not found: " + path.string());
  try {
    return from_yaml(YAML::LoadFile(path.string()));
  } catch (const YAML::Exception& e) {
    fail(ErrorCode::config, "cannot parse schema " + path.string() + ": " + e.what());
  }
}

RawTable parse_tabular(std::string_view text, const Schema& schema, std::size_t row_limit,
                       const std::string& source) {
  schema.validate();
  const std::size_t ncol = schema.columns.size();
  std::vector<std::vector<std::string>> cells;
  std::vector<std::size_t> line_of;
  std::vector<std::string> parts;
  std::size_t line_no = 0;
  bool skipped_header = !schema.header;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    if (!skipped_header) {
      skipped_header = true;
      continue;
    }
    split_line(line, schema.delimiter, parts);
    require(parts.size() == ncol, ErrorCode::ingestion,
            source + ": line " + std::to_string(line_no) + " has " + std::to_string(parts.size()) +
                " fields, expected " + std::to_string(ncol));
    cells.push_back(parts);
    line_of.push_back(line_no);
    if (row_limit > 0 && cells.size() >= row_limit) break;
  }
  require(!cells.empty(), ErrorCode::ingestion, source + ": no data rows");

  std::vector<bool> drop(ncol, false);
  for (std::size_t c = 0; c < ncol; ++c) {
    const ColumnType t = schema.columns[c].type;
    if (t == ColumnType::ignore) {
      drop[c] = true;
      continue;
    }
    for (std::size_t r = 0; r < cells.size(); ++r) {
      if (cells[r][c] != schema.missing_token && !cells[r][c].empty()) continue;
      require(schema.missing == MissingPolicy::drop_column && t != ColumnType::label,
              ErrorCode::ingestion,
              source + ": line " + std::to_string(line_of[r]) + " has a missing value in column '" +
                  schema.columns[c].name + "'");
      drop[c] = true;
      break;
    }
  }

  RawTable table;
  std::vector<std::size_t> keep;
  std::size_t label_col = ncol;
  for (std::size_t c = 0; c < ncol; ++c) {
    const ColumnSpec& spec = schema.columns[c];
    if (spec.type == ColumnType::label) {
      label_col = c;
    } else if (drop[c]) {
      if (spec.type != ColumnType::ignore) table.dropped.push_back(spec.name);
    } else {
      keep.push_back(c);
      table.names.push_back(spec.name);
      table.categorical.push_back(spec.type == ColumnType::categorical);
    }
  }
  const std::set<std::string> anomaly(schema.anomaly_labels.begin(), schema.anomaly_labels.end());
  const std::set<std::string> normal(schema.normal_labels.begin(), schema.normal_labels.end());
  table.rows.reserve(cells.size());
  for (std::size_t r = 0; r < cells.size(); ++r) {
    std::vector<std::string> row;
    row.reserve(keep.size());
    for (std::size_t c : keep) {
      if (schema.columns[c].type == ColumnType::continuous) {
        double v;
        require(parse_number(cells[r][c], v), ErrorCode::ingestion,
                source + ": line " + std::to_string(line_of[r]) + ", column '" +
                    schema.columns[c].name + "': '" + cells[r][c] + "' is not a number");
      }
      row.push_back(std::move(cells[r][c]));
    }
    table.rows.push_back(std::move(row));
    if (label_col < ncol) {
      const std::string& l = cells[r][label_col];
      table.labels.push_back(anomaly.empty() ? (normal.count(l) ? 0 : 1) : (anomaly.count(l) ? 1 : 0));
    }
  }
  return table;
}

RawTable load_tabular(const std::filesystem::path& path, const Schema& schema,
                      std::size_t row_limit) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::ingestion, "cannot open data file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_tabular(buf.str(), schema, row_limit, path.string());
}

OneHotEncoder OneHotEncoder::fit(const RawTable& table) {
  OneHotEncoder enc;
  enc.names_ = table.names;
  enc.categorical_ = table.categorical;
  enc.vocab_.resize(table.names.size());
  for (std::size_t c = 0; c < table.names.size(); ++c) {
    if (!table.categorical[c]) continue;
    std::set<std::string> values;
    for (const auto& row : table.rows) values.insert(row[c]);
    enc.vocab_[c].assign(values.begin(), values.end());
  }
  return enc;
}

std::size_t OneHotEncoder::width() const {
  std::size_t w = 0;
  for (std::size_t c = 0; c < names_.size(); ++c) w += categorical_[c] ? vocab_[c].size() : 1;
  return w;
}

std::vector<std::string> OneHotEncoder::feature_names() const {
  std::vector<std::string> out;
  for (std::size_t c = 0; c < names_.size(); ++c) {
    if (!categorical_[c]) {
      out.push_back(names_[c]);
      continue;
    }
    for (const auto& v : vocab_[c]) out.push_back(names_[c] + "=" + v);
  }
  return out;
}

Tensor OneHotEncoder::transform(const RawTable& table, std::size_t* unseen) const {
  require(table.names == names_, ErrorCode::contract,
          "table columns do not match the columns the encoder was fit on");
  Tensor out = Tensor::matrix(table.size(), width());
  std::size_t misses = 0;
  for (std::size_t r = 0; r < table.size(); ++r) {
    std::size_t at = 0;
    for (std::size_t c = 0; c < names_.size(); ++c) {
      const std::string& cell = table.rows[r][c];
      if (!categorical_[c]) {
        double v = 0;
        parse_number(cell, v);
        out.at(r, at++) = static_cast<Real>(v);
        continue;
      }
      const auto& voc = vocab_[c];
      const auto it = std::lower_bound(voc.begin(), voc.end(), cell);
      if (it != voc.end() && *it == cell)
        out.at(r, at + static_cast<std::size_t>(it - voc.begin())) = 1;
      else
        ++misses;
      at += voc.size();
    }
  }
  if (unseen) *unseen += misses;
  return out;
}

ScaleMethod parse_scale_method(std::string_view name) {
  if (name == "standardize") return ScaleMethod::standardize;
  if (name == "minmax_pm1") return ScaleMethod::minmax_pm1;
  if (name == "none") return ScaleMethod::none;
  fail(ErrorCode::config, "unknown scaling method '" + std::string(name) + "'");
}

std::string_view to_string(ScaleMethod m) {
  switch (m) {
    case ScaleMethod::standardize: return "standardize";
    case ScaleMethod::minmax_pm1: return "minmax_pm1";
    case ScaleMethod::none: return "none";
  }
  return "?";
}

Scaler Scaler::fit(const Tensor& x, ScaleMethod method) {
  require(x.rank() == 2 && x.rows() >= 1, ErrorCode::insufficient_data,
          "cannot fit scaling on an empty matrix");
  const std::size_t n = x.rows(), d = x.cols();
  Scaler s;
  s.method_ = method;
  s.offset_.assign(d, 0);
  s.scale_.assign(d, 1);
  for (std::size_t c = 0; c < d; ++c) {
    if (method == ScaleMethod::standardize) {
      double mean = 0;
      for (std::size_t r = 0; r < n; ++r) mean += x.at(r, c);
      mean /= static_cast<double>(n);
      double var = 0;
      for (std::size_t r = 0; r < n; ++r) var += (x.at(r, c) - mean) * (x.at(r, c) - mean);
      const double sd = std::sqrt(var / static_cast<double>(n));
      s.offset_[c] = static_cast<Real>(mean);
      s.scale_[c] = sd > 0 ? static_cast<Real>(1 / sd) : Real(1);
    } else if (method == ScaleMethod::minmax_pm1) {
      double lo = x.at(0, c), hi = x.at(0, c);
      for (std::size_t r = 1; r < n; ++r) {
        lo = std::min<double>(lo, x.at(r, c));
        hi = std::max<double>(hi, x.at(r, c));
      }
      s.offset_[c] = static_cast<Real>((lo + hi) / 2);
      s.scale_[c] = hi > lo ? static_cast<Real>(2 / (hi - lo)) : Real(1);
    }
  }
  return s;
}

Scaler Scaler::from_params(ScaleMethod method, std::vector<Real> offset, std::vector<Real> scale) {
  require(offset.size() == scale.size(), ErrorCode::contract, "scaling params differ in length");
  Scaler s;
  s.method_ = method;
  s.offset_ = std::move(offset);
  s.scale_ = std::move(scale);
  return s;
}

Tensor Scaler::transform(const Tensor& x) const {
  require(x.rank() == 2 && x.cols() == offset_.size(), ErrorCode::shape,
          "matrix of shape " + to_string(x.shape()) + " does not match " +
              std::to_string(offset_.size()) + " fitted features");
  Tensor out = x;
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c)
      out.at(r, c) = (x.at(r, c) - offset_[c]) * scale_[c];
  return out;
}

Dataset Dataset::select(std::span<const std::size_t> rows) const {
  Dataset out;
  out.x = x.rows_subset(rows);
  if (labelled()) {
    out.y.reserve(rows.size());
    for (std::size_t r : rows) out.y.push_back(y.at(r));
  }
  return out;
}

std::size_t Dataset::anomalies() const {
  return static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
}

void SplitSpec::validate() const {
  require(train_fraction > 0 && train_fraction < 1, ErrorCode::config,
          "train fraction must lie in (0,1)");
  require(validation_fraction >= 0 && validation_fraction < 1, ErrorCode::config,
          "validation fraction must lie in [0,1)");
}

namespace {

std::vector<std::size_t> shuffled(std::vector<std::size_t> v, RngStream rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
  return v;
}

std::array<std::vector<std::size_t>, 2> by_class(const std::vector<int>& labels) {
  std::array<std::vector<std::size_t>, 2> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] == 0 || labels[i] == 1, ErrorCode::contract, "labels must be 0 or 1");
    out[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  return out;
}

std::size_t rounded(double v) { return static_cast<std::size_t>(std::llround(v)); }

} // namespace

Split split(const std::vector<int>& labels, const SplitSpec& spec) {
  spec.validate();
  const auto classes = by_class(labels);
  require(!classes[0].empty(), ErrorCode::insufficient_data, "no normal rows to train on");
  Split s;
  const RngStream root = RngStream(spec.seed).derive("split");
  for (std::size_t k = 0; k < 2; ++k) {
    const auto rows = shuffled(classes[k], root.derive(k));
    const std::size_t n_test = rounded((1 - spec.train_fraction) * static_cast<double>(rows.size()));
    const std::size_t n_train = rows.size() - n_test;
    const std::size_t n_val = rounded(spec.validation_fraction * static_cast<double>(n_train));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (i < n_test) {
        s.test.push_back(rows[i]);
      } else if (i < n_test + n_val) {
        s.validation.push_back(rows[i]);
      } else {
        s.train.push_back(rows[i]);
        if (k == 0) s.train_normal.push_back(rows[i]);
      }
    }
  }
  for (auto* v : {&s.train, &s.validation, &s.test, &s.train_normal}) std::sort(v->begin(), v->end());
  require(!s.train_normal.empty(), ErrorCode::insufficient_data,
          "split leaves no normal rows for training");
  return s;
}

std::vector<std::size_t> stratified_subsample(const std::vector<int>& labels, std::size_t n,
                                              std::uint64_t seed) {
  std::vector<std::size_t> out;
  if (n >= labels.size()) {
    out.resize(labels.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
    return out;
  }
  const auto classes = by_class(labels);
  const RngStream root = RngStream(seed).derive("subsample");
  const double frac = static_cast<double>(n) / static_cast<double>(labels.size());
  for (std::size_t k = 0; k < 2; ++k) {
    const auto rows = shuffled(classes[k], root.derive(k));
    const std::size_t take = std::min(rows.size(), rounded(frac * static_cast<double>(rows.size())));
    out.insert(out.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(out.begin(), out.end());
  return out;
}

ToyKind parse_toy_kind(std::string_view name) {
  if (name == "gaussian_ring") return ToyKind::gaussian_ring;
  if (name == "two_gaussians") return ToyKind::two_gaussians;
  fail(ErrorCode::config, "unknown toy dataset '" + std::string(name) + "'");
}

Dataset synth_toy(const ToySpec& spec) {
  require(spec.noise >= 0, ErrorCode::config, "toy noise must be >= 0");
  Dataset d;
  d.x = Tensor::matrix(spec.n_normal + spec.n_anomaly, 2);
  d.y.assign(spec.n_normal + spec.n_anomaly, 0);
  RngStream normals = RngStream(spec.seed).derive("toy").derive("normal");
  RngStream anomalies = RngStream(spec.seed).derive("toy").derive("anomaly");
  const double cx = 1.5;
  for (std::size_t i = 0; i < spec.n_normal; ++i) {
    double a, b;
    if (spec.kind == ToyKind::gaussian_ring) {
      const double t = normals.uniform(0, 2 * M_PI);
      a = std::cos(t);
      b = std::sin(t);
    } else {
      a = normals.uniform() < 0.5 ? -cx : cx;
      b = 0;
    }
    d.x.at(i, 0) = static_cast<Real>(a + spec.noise * normals.normal());
    d.x.at(i, 1) = static_cast<Real>(b + spec.noise * normals.normal());
  }
  for (std::size_t i = 0; i < spec.n_anomaly; ++i) {
    double a, b;
    for (;;) {
      a = anomalies.uniform(-3, 3);
      b = anomalies.uniform(-3, 3);
      if (spec.kind == ToyKind::gaussian_ring) {
        const double r = std::hypot(a, b);
        if (r < 0.7 || r > 1.3) break;
      } else {
        const double reach = 4 * spec.noise;
        if (std::hypot(a - cx, b) > reach && std::hypot(a + cx, b) > reach) break;
      }
    }
    const std::size_t row = spec.n_normal + i;
    d.x.at(row, 0) = static_cast<Real>(a);
    d.x.at(row, 1) = static_cast<Real>(b);
    d.y[row] = 1;
  }
  return d;
}

void write_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(out.good(), ErrorCode::io, "cannot write " + path.string());
  out.precision(17);
  for (std::size_t c = 0; c < data.x.cols(); ++c) out << (c ? "," : "") << 'f' << c;
  if (data.labelled()) out << ",label";
  out << '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < data.x.cols(); ++c) out << (c ? "," : "") << data.x.at(r, c);
    if (data.labelled()) out << ',' << data.y[r];
    out << '\n';
  }
  require(out.good(), ErrorCode::io, "failed writing " + path.string());
}

} // namespace rcalad
