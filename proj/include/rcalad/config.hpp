#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "rcalad/data.hpp"
#include "rcalad/scoring.hpp"
#include "rcalad/training.hpp"

namespace rcalad {

enum class DatasetKind { toy, arrhythmia, kdd, thyroid, musk, csv };

DatasetKind parse_dataset_kind(std::string_view name);
std::string_view to_string(DatasetKind kind);

/// Contamination rate used when the config leaves alpha unset.
double default_alpha(DatasetKind kind);

struct ToyProtocol {
  ToyKind kind = ToyKind::gaussian_ring;
  std::size_t train_normal = 2000;
  std::size_t test_normal = 500;
  std::size_t test_anomaly = 100;
  double noise = 0.05;
};

struct DatasetConfig {
  DatasetKind kind = DatasetKind::toy;
  std::filesystem::path path;    // empty: <data dir>/<default file name>
  std::filesystem::path schema;  // empty: the shipped schema for the kind
  std::size_t row_limit = 0;
  double subsample = 1.0;  // stratified fraction of the loaded rows
  ScaleMethod scale = ScaleMethod::standardize;
  ToyProtocol toy;
};

struct ArchConfig {
  std::optional<ArchKind> kind;  // unset: follows the dataset
  std::size_t latent_dim = 0;    // 0: layout default
};

struct ScoreConfig {
  ScoreKind kind = ScoreKind::fm;
  Orientation orientation;
};

struct ExperimentConfig {
  DatasetConfig dataset;
  ArchConfig arch;
  Variant variant = Variant::rcalad;
  TrainConfig train;  // train.seed is overwritten per run
  ScoreConfig score;
  SplitSpec split;    // split.seed is overwritten per run
  double alpha = 0;   // filled from the dataset default when absent
  std::size_t runs = 1;
  std::uint64_t seed = 0;
  std::filesystem::path output = "out";
  std::filesystem::path baseline;  // optional metrics.json to compare against

  void validate() const;
  ArchKind arch_kind() const;
  /// Seed of run `i`: seed + i.
  std::uint64_t run_seed(std::size_t i) const { return seed + i; }
};

/// Parses YAML text. Unknown keys and bad values raise config errors that
/// name the key path, e.g. "train.lr".
ExperimentConfig parse_config(std::string_view yaml, const std::string& source = "<memory>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical YAML with every field spelled out; parse_config(to_yaml(c))
/// reproduces c.
std::string to_yaml(const ExperimentConfig& config);

/// FNV-1a of the canonical YAML, excluding output paths.
std::uint64_t config_hash(const ExperimentConfig& config);

/// $RCALAD_DATA_DIR, else "data".
std::filesystem::path data_dir();
std::filesystem::path resolve_data_path(const DatasetConfig& d);
std::filesystem::path resolve_schema_path(const DatasetConfig& d);

} // namespace rcalad
