#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "rcalad/tensor.hpp"

namespace rcalad {

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
};

struct Metrics {
  double precision = 0;
  double recall = 0;
  double f1 = 0;
  double auroc = std::numeric_limits<double>::quiet_NaN();  // NaN when one class only
  // set when a ratio had a zero denominator and was reported as 0
  bool precision_undefined = false;
  bool recall_undefined = false;
};

/// ceil(alpha * n), with a small slack so 0.2 * 10 is 2 and not 3.
std::size_t flag_count(std::size_t n, double alpha);

/// Flags the flag_count(n, alpha) rows with the largest scores; on equal
/// scores the lower row index wins.
std::vector<bool> threshold_flags(std::span<const Real> oriented_scores, double alpha);

struct Classification {
  ConfusionCounts counts;
  Metrics metrics;  // auroc left as NaN
};

/// Precision, recall and F1 of the anomaly (label 1) class.
Classification prf1(const std::vector<bool>& flags, std::span<const int> labels);

/// Probability that a random anomaly outranks a random normal, ties ½.
/// Throws undefined_metric when only one class is present.
double auroc(std::span<const Real> oriented_scores, std::span<const int> labels);

/// Threshold at alpha, then prf1 plus auroc (NaN if single class).
Metrics evaluate(std::span<const Real> oriented_scores, std::span<const int> labels, double alpha);

struct Summary {
  double mean = 0;
  double std = 0;  // sample std, 0 for a single value
};

struct RunAggregate {
  std::size_t n_runs = 0;
  Summary precision, recall, f1, auroc;
};

Summary summarize(std::span<const double> values);
/// auroc ignores NaN entries (NaN when all are NaN).
RunAggregate aggregate_runs(std::span<const Metrics> runs);

struct WilcoxonResult {
  double statistic = 0;  // min(W+, W-)
  double p_value = 1;    // two-sided
  std::size_t n = 0;     // pairs with a nonzero difference
  double w_plus = 0;
  double w_minus = 0;
  bool exact = false;
};

inline constexpr std::size_t kWilcoxonExactMax = 12;
inline constexpr std::size_t kWilcoxonMinPairs = 5;

/// Paired signed-rank test on a - b. Zero differences are dropped; tied
/// magnitudes share their average rank. Exact null distribution for
/// n <= 12, normal approximation with continuity and tie correction above.
WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b);

} // namespace rcalad
