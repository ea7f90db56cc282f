#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rcalad/config.hpp"
#include "rcalad/metrics.hpp"

namespace rcalad {

/// Scaled matrices for one run. The scaler is fit on train rows only.
struct PreparedData {
  Dataset train;  // normal rows only
  Dataset validation;
  Dataset test;
  std::vector<std::string> feature_names;
  std::vector<std::string> dropped_columns;
  std::size_t unseen_categories = 0;
  std::size_t source_rows = 0;

  std::size_t input_dim() const { return train.x.cols(); }
};

/// Loads (or synthesises) the data and applies split, encoding and scaling
/// for the run seeded with `seed`. Raises ingestion errors for missing
/// files and config errors when the encoded width disagrees with the
/// schema's expected_features.
PreparedData prepare_data(const ExperimentConfig& config, std::uint64_t seed);

/// Fresh bundle for the config and input width, seeded by `seed`.
ModelBundle build_bundle(const ExperimentConfig& config, std::size_t input_dim, std::uint64_t seed);

struct RunResult {
  std::size_t index = 0;
  std::uint64_t seed = 0;
  std::optional<Metrics> metrics;
  std::optional<ConfusionCounts> counts;
  std::optional<std::string> failure;  // "<code>: <message>"
  TrainHistory history;
  ScoreTable scores;  // oriented test scores
  std::vector<int> labels;
  double seconds = 0;
};

struct Report {
  ExperimentConfig config;
  std::uint64_t config_hash = 0;
  std::vector<RunResult> runs;
  std::optional<RunAggregate> aggregate;  // over runs that produced metrics
  std::optional<WilcoxonResult> wilcoxon;  // per-run F1 against the baseline
  std::optional<std::string> wilcoxon_note;
  double seconds = 0;
};

struct RunOptions {
  /// Parallel runs; 0 reads RCALAD_THREADS (default 1).
  std::size_t threads = 0;
  /// When set, each run writes checkpoints under <dir>/run_<i>/.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Progress lines (one per finished run); may be called from workers.
  std::function<void(const std::string&)> log;
};

/// One seed end to end: prepare, fit, score, orient, threshold, metrics.
/// Errors are caught and recorded in `failure`.
RunResult run_single(const ExperimentConfig& config, std::size_t index,
                     const RunOptions& options = {});

/// All runs, then aggregation and the optional baseline comparison.
Report run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Per-run F1 values from a metrics.json written by emit_report.
std::vector<double> load_run_f1(const std::filesystem::path& metrics_json);

/// Writes metrics.json, timing.json, config.yaml and per run
/// run_<i>/scores.csv and run_<i>/loss_history.csv. Everything except
/// timing.json is a pure function of (config, seeds).
void emit_report(const Report& report, const std::filesystem::path& dir);

/// Metrics JSON text (the content of metrics.json).
std::string metrics_json(const Report& report);

/// Score dump: sample_id,a_l1,...,a_all,label with unavailable columns empty.
void write_scores_csv(const ScoreTable& scores, const std::vector<int>& labels,
                      const std::filesystem::path& path);
std::string scores_csv(const ScoreTable& scores, const std::vector<int>& labels);

struct ScoreDump {
  ScoreTable scores;
  std::vector<int> labels;
};
ScoreDump read_scores_csv(const std::filesystem::path& path);

/// One line per epoch: epoch,steps,<nine terms>,d_total,g_total.
std::string loss_history_csv(const TrainHistory& history);

std::size_t resolve_threads(std::size_t requested);

} // namespace rcalad
