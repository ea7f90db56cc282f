#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "rcalad/error.hpp"
#include "rcalad/metrics.hpp"
#include "rcalad/rng.hpp"

using namespace rcalad;

namespace {

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::contract;
}

std::size_t count_true(const std::vector<bool>& v) {
  return static_cast<std::size_t>(std::count(v.begin(), v.end(), true));
}

} // namespace

TEST(Threshold, FlagCounts) {
  EXPECT_EQ(flag_count(10, 0.2), 2u);
  EXPECT_EQ(flag_count(10, 0.0), 0u);
  EXPECT_EQ(flag_count(10, 1.0), 10u);
  EXPECT_EQ(flag_count(452, 0.15), 68u);  // 67.8
  EXPECT_EQ(flag_count(3, 0.01), 1u);
  EXPECT_EQ(code_of([] { flag_count(3, 1.5); }), ErrorCode::contract);
}

TEST(Threshold, TopScoresFlaggedWithStableTies) {
  const std::vector<Real> s = {5, 4, 3, 2, 1};
  EXPECT_EQ(threshold_flags(s, 0.4), (std::vector<bool>{true, true, false, false, false}));
  const std::vector<Real> tied = {1, 7, 7, 7, 0};
  EXPECT_EQ(threshold_flags(tied, 0.4), (std::vector<bool>{false, true, true, false, false}));
  EXPECT_EQ(count_true(threshold_flags(s, 0)), 0u);
}

TEST(Threshold, RandomSweepFlagsCeilAlphaN) {
  RngStream rng(21);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.below(300);
    const double alpha = rng.uniform();
    std::vector<Real> s(n);
    for (auto& v : s) v = std::floor(rng.uniform(0, 10));  // plenty of ties
    const auto flags = threshold_flags(s, alpha);
    const auto expect = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(n) - 1e-9));
    ASSERT_EQ(count_true(flags), expect);
    // every flagged score >= every unflagged score
    Real lo = 1e300, hi = -1e300;
    for (std::size_t i = 0; i < n; ++i) {
      if (flags[i])
        lo = std::min(lo, s[i]);
      else
        hi = std::max(hi, s[i]);
    }
    if (expect > 0 && expect < n) EXPECT_GE(lo, hi);
  }
}

TEST(Prf1, HandEnumeratedConfusion) {
  const std::vector<Real> s = {5, 4, 3, 2, 1};
  const std::vector<int> y = {1, 0, 1, 0, 0};
  const auto c = prf1(threshold_flags(s, 0.4), y);
  EXPECT_EQ(c.counts.tp, 1u);
  EXPECT_EQ(c.counts.fp, 1u);
  EXPECT_EQ(c.counts.fn, 1u);
  EXPECT_EQ(c.counts.tn, 2u);
  EXPECT_EQ(c.counts.total(), 5u);
  EXPECT_DOUBLE_EQ(c.metrics.precision, 0.5);
  EXPECT_DOUBLE_EQ(c.metrics.recall, 0.5);
  EXPECT_DOUBLE_EQ(c.metrics.f1, 0.5);
}

TEST(Prf1, PerfectAndDegenerate) {
  const std::vector<int> y = {0, 1, 0, 1};
  const auto perfect = prf1({false, true, false, true}, y).metrics;
  EXPECT_EQ(perfect.precision, 1);
  EXPECT_EQ(perfect.recall, 1);
  EXPECT_EQ(perfect.f1, 1);
  const auto none = prf1({false, false}, std::vector<int>{0, 0});
  EXPECT_EQ(none.metrics.precision, 0);
  EXPECT_EQ(none.metrics.recall, 0);
  EXPECT_EQ(none.metrics.f1, 0);
  EXPECT_TRUE(none.metrics.precision_undefined);
  EXPECT_TRUE(none.metrics.recall_undefined);
  EXPECT_EQ(code_of([&] { prf1({true}, y); }), ErrorCode::contract);
  EXPECT_EQ(code_of([] { prf1({true}, std::vector<int>{2}); }), ErrorCode::contract);
}

TEST(Prf1, SeparatingScoresGiveF1OneWhenCountsMatch) {
  RngStream rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 5 + rng.below(200);
    const std::size_t k = 1 + rng.below(n - 1);
    std::vector<int> y(n, 0);
    std::vector<Real> s(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = rng.uniform();
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = rng.below(n);
      y[j] = 1;
    }
    const auto a = static_cast<std::size_t>(std::count(y.begin(), y.end(), 1));
    for (std::size_t i = 0; i < n; ++i) s[i] += y[i] ? 2 : 0;
    const double alpha = static_cast<double>(a) / static_cast<double>(n);
    ASSERT_EQ(flag_count(n, alpha), a);
    EXPECT_EQ(prf1(threshold_flags(s, alpha), y).metrics.f1, 1);
  }
}

TEST(Auroc, WorkedExamples) {
  const std::vector<Real> s = {0.9, 0.8, 0.2, 0.1};
  EXPECT_DOUBLE_EQ(auroc(s, std::vector<int>{1, 1, 0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(auroc(s, std::vector<int>{0, 0, 1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(auroc(std::vector<Real>{4, 3, 2, 1}, std::vector<int>{1, 0, 1, 0}), 0.75);
  EXPECT_DOUBLE_EQ(auroc(std::vector<Real>{1, 1, 1, 1}, std::vector<int>{1, 0, 1, 0}), 0.5);
}

TEST(Auroc, MatchesPairwiseOracleWithTies) {
  RngStream rng(8);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.below(80);
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::floor(rng.uniform(0, 6));
      y[i] = rng.uniform() < 0.3;
    }
    y[0] = 1;
    y[1] = 0;
    EXPECT_NEAR(auroc(s, y), oracle::auroc_pairwise(s, y), 1e-12);
  }
}

TEST(Auroc, InvariantUnderIncreasingTransforms) {
  RngStream rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 4 + rng.below(40);
    std::vector<Real> s(n), t(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = rng.normal();
      y[i] = i % 3 == 0;
    }
    const double a = rng.uniform(0.1, 5), b = rng.uniform(-3, 3);
    const int kind = static_cast<int>(trial % 3);
    for (std::size_t i = 0; i < n; ++i)
      t[i] = kind == 0 ? a * s[i] + b : kind == 1 ? std::exp(s[i]) : std::atan(s[i]) + s[i] * s[i] * s[i];
    ASSERT_DOUBLE_EQ(auroc(s, y), auroc(t, y));
  }
}

TEST(Auroc, SingleClassIsUndefined) {
  const std::vector<Real> s = {1, 2, 3};
  EXPECT_EQ(code_of([&] { auroc(s, std::vector<int>{0, 0, 0}); }), ErrorCode::undefined_metric);
  EXPECT_EQ(code_of([&] { auroc(s, std::vector<int>{1, 1, 1}); }), ErrorCode::undefined_metric);
  EXPECT_TRUE(std::isnan(evaluate(s, std::vector<int>{0, 0, 0}, 0.3).auroc));
  EXPECT_EQ(code_of([] { auroc(std::vector<Real>{NAN, 1}, std::vector<int>{1, 0}); }),
            ErrorCode::numerical);
}

TEST(Aggregate, MeanAndSampleStd) {
  Metrics a, b;
  a.f1 = 0.4;
  b.f1 = 0.6;
  a.auroc = 0.7;
  const std::vector<Metrics> runs = {a, b};
  const auto agg = aggregate_runs(runs);
  EXPECT_EQ(agg.n_runs, 2u);
  EXPECT_NEAR(agg.f1.mean, 0.5, 1e-15);
  EXPECT_NEAR(agg.f1.std, std::sqrt(0.02), 1e-12);
  EXPECT_NEAR(agg.f1.std, 0.1414, 1e-4);
  EXPECT_DOUBLE_EQ(agg.auroc.mean, 0.7);  // NaN run skipped
  EXPECT_EQ(agg.auroc.std, 0);
  const std::vector<Metrics> one = {a};
  EXPECT_EQ(aggregate_runs(one).f1.std, 0);
  EXPECT_EQ(code_of([] { aggregate_runs(std::span<const Metrics>{}); }), ErrorCode::contract);
}

TEST(Wilcoxon, AllPositiveTenPairs) {
  std::vector<double> a(10), b(10, 0.5);
  for (std::size_t i = 0; i < 10; ++i) a[i] = 0.6 + 0.01 * static_cast<double>(i);
  const auto r = wilcoxon_signed_rank(a, b);
  EXPECT_EQ(r.n, 10u);
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_EQ(r.w_plus, 55.0);
  EXPECT_TRUE(r.exact);
  EXPECT_NEAR(r.p_value, 2.0 / 1024, 1e-15);
  EXPECT_NEAR(r.p_value, 0.00195, 5e-6);
}

TEST(Wilcoxon, KnownExactValue) {
  // ranks 1..10 with 1, 2 and 4 negative: W- = 7, 2 * 19/1024
  const std::vector<double> d = {-1, -2, 3, -4, 5, 6, 7, 8, 9, 10};
  const std::vector<double> zero(10, 0);
  const auto r = wilcoxon_signed_rank(d, zero);
  EXPECT_EQ(r.statistic, 7);
  EXPECT_NEAR(r.p_value, 0.037109375, 1e-15);
}

TEST(Wilcoxon, ExactMatchesSignFlipEnumeration) {
  RngStream rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 5 + rng.below(8);  // 5..12
    std::vector<double> a(n), b(n, 0);
    // small integers so tied magnitudes are common
    for (auto& v : a) {
      do v = std::round(rng.uniform(-6, 6)); while (v == 0);
    }
    const auto r = wilcoxon_signed_rank(a, b);
    ASSERT_TRUE(r.exact);
    std::vector<double> mag(n);
    for (std::size_t i = 0; i < n; ++i) mag[i] = std::abs(a[i]);
    std::vector<double> ranks(n);
    for (std::size_t i = 0; i < n; ++i) {
      double below = 0, equal = 0;
      for (std::size_t j = 0; j < n; ++j) {
        below += mag[j] < mag[i];
        equal += mag[j] == mag[i];
      }
      ranks[i] = below + (equal + 1) / 2;
    }
    double w_plus = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (a[i] > 0) w_plus += ranks[i];
    EXPECT_DOUBLE_EQ(r.w_plus, w_plus);
    EXPECT_NEAR(r.p_value, oracle::signed_rank_p_enumerated(ranks, w_plus), 1e-12);
    EXPECT_LE(r.statistic, static_cast<double>(n * (n + 1)) / 4);
    EXPECT_GT(r.p_value, 0);
    EXPECT_LE(r.p_value, 1);
  }
}

TEST(Wilcoxon, NormalApproximationAboveTwelve) {
  // reference values from an independent implementation (normal approx,
  // continuity and tie correction, zero differences dropped)
  const std::vector<double> d = {3, -1, 4, 1, -5, 9, 2, 6, -5, 3, 5, 8,
                                 9, -7, 9, 3, 2, 3, 8, 4, 0, 6, -2};
  const std::vector<double> zero(d.size(), 0);
  const auto r = wilcoxon_signed_rank(d, zero);
  EXPECT_FALSE(r.exact);
  EXPECT_EQ(r.n, 22u);
  EXPECT_DOUBLE_EQ(r.statistic, 48.5);
  EXPECT_NEAR(r.p_value, 0.011721870903424473, 1e-12);

  const std::vector<double> e = {2, -1, 3, 5, -4, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, -17, 18};
  const auto s = wilcoxon_signed_rank(e, std::vector<double>(e.size(), 0));
  EXPECT_DOUBLE_EQ(s.statistic, 22);
  EXPECT_NEAR(s.p_value, 0.006075613544498056, 1e-12);
}

TEST(Wilcoxon, Errors) {
  const std::vector<double> a = {1, 2, 3, 4, 5, 6};
  EXPECT_EQ(code_of([&] { wilcoxon_signed_rank(a, a); }), ErrorCode::insufficient_data);
  const std::vector<double> b = {1, 2, 3, 4, 0, 0};
  EXPECT_EQ(code_of([&] { wilcoxon_signed_rank(a, b); }), ErrorCode::insufficient_data);
  EXPECT_EQ(code_of([&] { wilcoxon_signed_rank(a, std::vector<double>{1}); }),
            ErrorCode::contract);
}
