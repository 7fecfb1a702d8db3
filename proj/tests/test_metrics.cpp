#include "gcm/error.hpp"
#include "gcm/metrics.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>
#include <json.hpp>

#include <random>

using namespace gcm;

TEST(Metrics, Perfect) {
  const std::vector<int> y{0, 1, 2, 1, 0};
  const auto r = compute_metrics(y, y, 3);
  EXPECT_EQ(r.accuracy, 1.0);
  for (const auto& m : r.per_label) {
    EXPECT_EQ(m.precision, 1.0);
    EXPECT_EQ(m.recall, 1.0);
    EXPECT_EQ(m.f1, 1.0);
  }
  EXPECT_EQ(r.macro_f1, 1.0);
  EXPECT_EQ(r.weighted_f1, 1.0);
}

TEST(Metrics, AllWrong) {
  const std::vector<int> actual{0, 1, 0, 1}, pred{1, 0, 1, 0};
  const auto r = compute_metrics(pred, actual, 2);
  EXPECT_EQ(r.accuracy, 0.0);
  EXPECT_EQ(r.per_label[0].f1, 0.0);
  EXPECT_EQ(r.per_label[1].f1, 0.0);
}

TEST(Metrics, HandComputedF1) {
  // Class 0: TP 8, FP 2, FN 4.
  std::vector<int> actual, pred;
  auto add = [&](int a, int p, int n) {
    for (int i = 0; i < n; ++i) actual.push_back(a), pred.push_back(p);
  };
  add(0, 0, 8);
  add(1, 0, 2);
  add(0, 1, 4);
  add(1, 1, 6);
  const auto r = compute_metrics(pred, actual, 2);
  EXPECT_NEAR(r.per_label[0].precision, 0.8, 1e-12);
  EXPECT_NEAR(r.per_label[0].recall, 0.66667, 1e-5);
  EXPECT_NEAR(r.per_label[0].f1, 0.72727, 1e-5);
  EXPECT_EQ(r.per_label[0].support, 12u);
  EXPECT_EQ(r.confusion, (std::vector<std::vector<std::size_t>>{{8, 4}, {2, 6}}));
}

TEST(Metrics, AbsentClassAndZeroDenominators) {
  const std::vector<int> actual{0, 0, 1}, pred{0, 2, 1};
  const auto r = compute_metrics(pred, actual, 3);
  EXPECT_EQ(r.per_label[2].precision, 0.0);
  EXPECT_EQ(r.per_label[2].recall, 0.0);
  EXPECT_EQ(r.per_label[2].support, 0u);
  // Class 2 is absent from `actual`, so macro-F1 averages classes 0 and 1.
  EXPECT_NEAR(r.macro_f1, (r.per_label[0].f1 + r.per_label[1].f1) / 2, 1e-15);
}

TEST(Metrics, Errors) {
  const std::vector<int> a{0, 1}, b{0};
  try {
    compute_metrics(a, b, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LengthMismatch);
  }
  EXPECT_THROW(compute_metrics(std::vector<int>{}, std::vector<int>{}, 2), Error);
  try {
    compute_metrics(std::vector<int>{0, 3}, a, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::LabelOutOfRange);
  }
}

TEST(Metrics, RecountAndPermutationInvariance) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 1000; ++t) {
    const int classes = 2 + t % 5;
    const std::size_t n = 1 + rng() % 60;
    std::vector<int> pred(n), actual(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = static_cast<int>(rng() % classes);
      actual[i] = static_cast<int>(rng() % classes);
    }
    const auto r = compute_metrics(pred, actual, classes);
    const auto o = oracle::confusion(pred, actual, classes);
    ASSERT_EQ(r.confusion, o.counts);
    ASSERT_EQ(r.accuracy, o.accuracy);
    std::size_t total = 0;
    for (int k = 0; k < classes; ++k) {
      ASSERT_EQ(r.per_label[k].precision, o.precision[k]);
      ASSERT_EQ(r.per_label[k].recall, o.recall[k]);
      ASSERT_EQ(r.per_label[k].f1, o.f1[k]);
      for (int j = 0; j < classes; ++j) total += r.confusion[k][j];
      for (double v : {o.precision[k], o.recall[k], o.f1[k]}) {
        ASSERT_GE(v, 0.0);
        ASSERT_LE(v, 1.0);
      }
    }
    ASSERT_EQ(total, n);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<int> pp(n), ap(n);
    for (std::size_t i = 0; i < n; ++i) pp[i] = pred[perm[i]], ap[i] = actual[perm[i]];
    ASSERT_EQ(compute_metrics(pp, ap, classes), r);
  }
}

TEST(Metrics, JsonKeys) {
  const std::vector<int> y{0, 1, 1};
  const auto j = nlohmann::json::parse(metrics_json(compute_metrics(y, y, 2)));
  for (const char* k : {"accuracy", "per_label", "macro_f1", "weighted_f1", "confusion"}) EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["per_label"].size(), 2u);
  EXPECT_EQ(j["per_label"][1]["support"], 2);
  EXPECT_EQ(j["confusion"][1][1], 2);
}
