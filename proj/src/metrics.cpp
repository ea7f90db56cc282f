#include "rcalad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rcalad/error.hpp"

namespace rcalad {

namespace {

void check_labels(std::span<const int> labels) {
  for (int l : labels)
    require(l == 0 || l == 1, ErrorCode::contract, "labels must be 0 or 1");
}

void check_finite(std::span<const Real> scores) {
  for (Real s : scores)
    require(std::isfinite(s), ErrorCode::numerical, "anomaly scores contain NaN or Inf");
}

double ratio(std::size_t num, std::size_t den, bool& undefined) {
  undefined = den == 0;
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

// Average 1-based ranks of values sorted ascending.
std::vector<double> midranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return v[i] < v[j]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2 + 1;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = r;
    i = j + 1;
  }
  return rank;
}

double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

} // namespace

std::size_t flag_count(std::size_t n, double alpha) {
  require(alpha >= 0 && alpha <= 1, ErrorCode::contract, "alpha must lie in [0,1]");
  const double k = std::ceil(alpha * static_cast<double>(n) - 1e-9);
  return std::min(n, static_cast<std::size_t>(std::max(0.0, k)));
}

std::vector<bool> threshold_flags(std::span<const Real> scores, double alpha) {
  check_finite(scores);
  const std::size_t k = flag_count(scores.size(), alpha);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](auto i, auto j) { return scores[i] > scores[j]; });
  std::vector<bool> flags(scores.size(), false);
  for (std::size_t i = 0; i < k; ++i) flags[order[i]] = true;
  return flags;
}

Classification prf1(const std::vector<bool>& flags, std::span<const int> labels) {
  require(flags.size() == labels.size(), ErrorCode::contract,
          "flags (" + std::to_string(flags.size()) + ") and labels (" +
              std::to_string(labels.size()) + ") differ in length");
  check_labels(labels);
  Classification c;
  auto& k = c.counts;
  for (std::size_t i = 0; i < flags.size(); ++i) {
    if (flags[i])
      ++(labels[i] ? k.tp : k.fp);
    else
      ++(labels[i] ? k.fn : k.tn);
  }
  auto& m = c.metrics;
  m.precision = ratio(k.tp, k.tp + k.fp, m.precision_undefined);
  m.recall = ratio(k.tp, k.tp + k.fn, m.recall_undefined);
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0;
  return c;
}

double auroc(std::span<const Real> scores, std::span<const int> labels) {
  require(scores.size() == labels.size(), ErrorCode::contract,
          "scores and labels differ in length");
  check_labels(labels);
  check_finite(scores);
  const auto n1 = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  const std::size_t n0 = labels.size() - n1;
  require(n1 > 0 && n0 > 0, ErrorCode::undefined_metric,
          "AUROC needs both classes (" + std::to_string(n1) + " anomalies, " +
              std::to_string(n0) + " normals)");
  const std::vector<double> s(scores.begin(), scores.end());
  const auto rank = midranks(s);
  double r1 = 0;
  for (std::size_t i = 0; i < rank.size(); ++i)
    if (labels[i]) r1 += rank[i];
  const double u = r1 - static_cast<double>(n1) * static_cast<double>(n1 + 1) / 2;
  return u / (static_cast<double>(n1) * static_cast<double>(n0));
}

Metrics evaluate(std::span<const Real> scores, std::span<const int> labels, double alpha) {
  Metrics m = prf1(threshold_flags(scores, alpha), labels).metrics;
  const auto n1 = std::count(labels.begin(), labels.end(), 1);
  if (n1 > 0 && static_cast<std::size_t>(n1) < labels.size()) m.auroc = auroc(scores, labels);
  return m;
}

Summary summarize(std::span<const double> values) {
  require(!values.empty(), ErrorCode::contract, "cannot summarize an empty list");
  Summary s;
  s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

RunAggregate aggregate_runs(std::span<const Metrics> runs) {
  require(!runs.empty(), ErrorCode::contract, "aggregate_runs needs at least one run");
  RunAggregate agg;
  agg.n_runs = runs.size();
  std::vector<double> p, r, f, a;
  for (const auto& m : runs) {
    p.push_back(m.precision);
    r.push_back(m.recall);
    f.push_back(m.f1);
    if (!std::isnan(m.auroc)) a.push_back(m.auroc);
  }
  agg.precision = summarize(p);
  agg.recall = summarize(r);
  agg.f1 = summarize(f);
  if (a.empty())
    agg.auroc = {std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
  else
    agg.auroc = summarize(a);
  return agg;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::contract, "paired samples differ in length");
  std::vector<double> diff;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    require(std::isfinite(d), ErrorCode::numerical, "paired samples contain NaN or Inf");
    if (d != 0) diff.push_back(d);
  }
  require(diff.size() >= kWilcoxonMinPairs, ErrorCode::insufficient_data,
          "signed-rank test needs at least " + std::to_string(kWilcoxonMinPairs) +
              " nonzero differences, got " + std::to_string(diff.size()));
  const std::size_t n = diff.size();
  std::vector<double> mag(n);
  for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(diff[i]);
  const auto rank = midranks(mag);

  WilcoxonResult res;
  res.n = n;
  for (std::size_t i = 0; i < n; ++i) (diff[i] > 0 ? res.w_plus : res.w_minus) += rank[i];
  res.statistic = std::min(res.w_plus, res.w_minus);

  if (n <= kWilcoxonExactMax) {
    // ranks are multiples of 1/2, so count sign assignments by 2*W+
    std::size_t max_sum = 0;
    std::vector<std::size_t> r2(n);
    for (std::size_t i = 0; i < n; ++i) {
      r2[i] = static_cast<std::size_t>(std::lround(2 * rank[i]));
      max_sum += r2[i];
    }
    std::vector<double> count(max_sum + 1, 0.0);
    count[0] = 1;
    std::size_t reach = 0;
    for (std::size_t r : r2) {
      for (std::size_t s = reach + 1; s-- > 0;) count[s + r] += count[s];
      reach += r;
    }
    const auto obs = static_cast<std::size_t>(std::lround(2 * res.w_plus));
    double le = 0, ge = 0;
    for (std::size_t s = 0; s <= max_sum; ++s) {
      if (s <= obs) le += count[s];
      if (s >= obs) ge += count[s];
    }
    const double total = std::ldexp(1.0, static_cast<int>(n));
    res.p_value = std::min(1.0, 2 * std::min(le, ge) / total);
    res.exact = true;
  } else {
    const double nn = static_cast<double>(n);
    const double mean = nn * (nn + 1) / 4;
    double tie = 0;
    std::vector<double> sorted(rank);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < n;) {
      std::size_t j = i;
      while (j < n && sorted[j] == sorted[i]) ++j;
      const double t = static_cast<double>(j - i);
      tie += t * t * t - t;
      i = j;
    }
    const double var = nn * (nn + 1) * (2 * nn + 1) / 24 - tie / 48;
    const double z = (std::abs(res.w_plus - mean) - 0.5) / std::sqrt(var);
    res.p_value = std::min(1.0, 2 * normal_sf(std::max(0.0, z)));
  }
  return res;
}

} // namespace rcalad
