#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "rcalad/tensor.hpp"

namespace YAML {
class Node;
}

namespace rcalad {

enum class ColumnType { continuous, categorical, label, ignore };

struct ColumnSpec {
  std::string name;
  ColumnType type = ColumnType::continuous;
};

enum class MissingPolicy { error, drop_column };

/// Describes a delimited text file: one entry per column in file order,
/// exactly one label column when the data is labelled, and the label values
/// that mark anomalies (or, alternatively, the ones that mark normals).
struct Schema {
  std::string name;
  bool header = false;
  char delimiter = ',';
  std::string missing_token = "?";
  MissingPolicy missing = MissingPolicy::error;
  std::vector<ColumnSpec> columns;
  std::vector<std::string> anomaly_labels;
  std::vector<std::string> normal_labels;
  std::size_t expected_features = 0;  // checked after encoding when non-zero

  void validate() const;
  static Schema from_yaml(const YAML::Node& node);
  static Schema load(const std::filesystem::path& path);
};

/// Cells of the kept feature columns as text, plus 0/1 labels.
struct RawTable {
  std::vector<std::string> names;
  std::vector<bool> categorical;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> labels;  // empty when the schema has no label column
  std::vector<std::string> dropped;  // columns removed for missing values

  std::size_t size() const { return rows.size(); }
};

/// Parses the file. Continuous cells must parse as numbers; failures raise
/// an ingestion error naming the 1-based line. `row_limit` > 0 keeps only
/// the first rows.
RawTable load_tabular(const std::filesystem::path& path, const Schema& schema,
                      std::size_t row_limit = 0);
RawTable parse_tabular(std::string_view text, const Schema& schema, std::size_t row_limit = 0,
                       const std::string& source = "<memory>");

/// One-hot expansion of categorical columns; continuous columns pass
/// through in their file order.
class OneHotEncoder {
public:
  static OneHotEncoder fit(const RawTable& table);

  /// Categories not seen by fit() map to an all-zero block and are counted.
  Tensor transform(const RawTable& table, std::size_t* unseen = nullptr) const;
  std::size_t width() const;
  std::vector<std::string> feature_names() const;

private:
  std::vector<std::string> names_;
  std::vector<bool> categorical_;
  std::vector<std::vector<std::string>> vocab_;  // sorted per categorical column
};

enum class ScaleMethod { standardize, minmax_pm1, none };

ScaleMethod parse_scale_method(std::string_view name);
std::string_view to_string(ScaleMethod m);

/// Per-feature affine scaling, fit once and then applied unchanged.
class Scaler {
public:
  /// Constant columns get unit scale so they map to 0.
  static Scaler fit(const Tensor& x, ScaleMethod method);
  Tensor transform(const Tensor& x) const;

  ScaleMethod method() const { return method_; }
  const std::vector<Real>& offset() const { return offset_; }
  const std::vector<Real>& scale() const { return scale_; }
  static Scaler from_params(ScaleMethod method, std::vector<Real> offset, std::vector<Real> scale);

private:
  ScaleMethod method_ = ScaleMethod::none;
  std::vector<Real> offset_;
  std::vector<Real> scale_;  // x' = (x - offset) * scale
};

struct Dataset {
  Tensor x;
  std::vector<int> y;  // 1 = anomaly; empty when unlabelled

  std::size_t size() const { return x.rows(); }
  bool labelled() const { return !y.empty(); }
  Dataset select(std::span<const std::size_t> rows) const;
  std::size_t anomalies() const;
};

struct SplitSpec {
  double train_fraction = 0.8;
  double validation_fraction = 0.25;  // of the training part
  std::uint64_t seed = 0;

  void validate() const;
};

/// Row indices of a stratified split. train, validation and test partition
/// the rows; train_normal is the label-0 subset of train.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::vector<std::size_t> train_normal;
};

Split split(const std::vector<int>& labels, const SplitSpec& spec);

/// Random subset of `n` rows keeping the class ratio (rounded per class);
/// returns all rows when n >= size.
std::vector<std::size_t> stratified_subsample(const std::vector<int>& labels, std::size_t n,
                                              std::uint64_t seed);

enum class ToyKind { gaussian_ring, two_gaussians };

struct ToySpec {
  ToyKind kind = ToyKind::gaussian_ring;
  std::size_t n_normal = 1000;
  std::size_t n_anomaly = 0;
  double noise = 0.05;
  std::uint64_t seed = 0;
};

ToyKind parse_toy_kind(std::string_view name);

/// gaussian_ring: normals at unit radius plus isotropic noise, anomalies
/// uniform on [-3,3]^2 outside the annulus 0.7 <= r <= 1.3.
/// two_gaussians: normals from two blobs at (±1.5, 0) with std `noise`,
/// anomalies uniform on [-3,3]^2 farther than 4 std from both centres.
/// Normals come first, then anomalies.
Dataset synth_toy(const ToySpec& spec);

/// CSV with a header f0..f{d-1}[,label].
void write_csv(const Dataset& data, const std::filesystem::path& path);

} // namespace rcalad
