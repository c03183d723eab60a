#include <doctest.h>

#include <cmath>

#include "hufor/errors.hpp"
#include "hufor/metrics.hpp"
#include "hufor/rng.hpp"
#include "oracles.hpp"

using namespace hufor;
using namespace hufor::metrics;

namespace {

ScoredSet make(std::vector<double> scores, std::vector<int> labels, std::vector<std::string> sources = {}) {
  return {std::move(scores), std::move(labels), std::move(sources)};
}

ScoredSet random_set(Rng& rng, std::size_t n) {
  ScoredSet s;
  for (std::size_t i = 0; i < n; ++i) {
    s.scores.push_back(std::round(rng.uniform() * 20.0) / 20.0);
    s.labels.push_back(static_cast<int>(i % 2));
  }
  return s;
}

}  // namespace

TEST_CASE("worked example") {
  const auto s = make({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1});
  CHECK(auc(s) == 0.75);
  CHECK(accuracy_at_optimal(s).accuracy == 0.75);
  CHECK(tpr_at_fpr(s, 0.05) == 0.5);
}

TEST_CASE("perfect, inverted and tied rankings") {
  CHECK(auc(make({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1})) == 1.0);
  CHECK(accuracy_at_optimal(make({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1})).accuracy == 1.0);
  CHECK(auc(make({0.9, 0.8, 0.2, 0.1}, {0, 0, 1, 1})) == 0.0);
  CHECK(auc(make({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1})) == 0.5);
  CHECK(tpr_at_fpr(make({0.5, 0.5, 0.5, 0.5}, {0, 1, 0, 1}), 0.0) == 0.0);
}

TEST_CASE("a zero cap still admits a perfectly separated positive run") {
  CHECK(tpr_at_fpr(make({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 0.0) == 1.0);
}

TEST_CASE("the optimal threshold reproduces the reported accuracy") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto s = random_set(rng, 12);
    const auto op = accuracy_at_optimal(s);
    CHECK(static_cast<double>(test::correct_at(s, op.threshold)) / 12.0 == op.accuracy);
  }
}

TEST_CASE("strictly increasing score transforms change nothing") {
  Rng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = random_set(rng, 15);
    auto t = s;
    for (double& v : t.scores) v = std::pow(v, 3.0) * 0.5 + 0.25;
    CHECK(auc(t) == auc(s));
    CHECK(accuracy_at_optimal(t).accuracy == accuracy_at_optimal(s).accuracy);
    CHECK(tpr_at_fpr(t, 0.05) == tpr_at_fpr(s, 0.05));
  }
}

TEST_CASE("tpr grows with the fpr cap") {
  Rng rng(3);
  for (int trial = 0; trial < 30; ++trial) {
    const auto s = random_set(rng, 20);
    double prev = 0.0;
    for (double cap : {0.0, 0.01, 0.05, 0.1, 0.3, 0.6, 0.99}) {
      const double t = tpr_at_fpr(s, cap);
      CHECK(t >= prev);
      prev = t;
    }
  }
}

TEST_CASE("exhaustive agreement with brute-force references") {
  std::size_t sets = 0;
  bool ok = true;
  test::for_each_grid_set({0.2, 0.5, 0.8}, 6, [&](const ScoredSet& s) {
    ++sets;
    ok = ok && accuracy_at_optimal(s).accuracy == test::oracle_accuracy(s);
    if (s.positives() == 0 || s.negatives() == 0) return;
    ok = ok && auc(s) == test::oracle_auc(s);
    for (double cap : {0.0, 0.05, 0.25, 0.5}) ok = ok && tpr_at_fpr(s, cap) == test::oracle_tpr_at_fpr(s, cap);
  });
  CHECK(sets > 40000);
  CHECK(ok);
}

TEST_CASE("roc curve runs from the origin to (1, 1) with monotone steps") {
  const auto roc = roc_curve(make({0.1, 0.4, 0.35, 0.8, 0.4}, {0, 0, 1, 1, 1}));
  REQUIRE(roc.size() == 5);
  CHECK(roc.front().fpr == 0.0);
  CHECK(roc.front().tpr == 0.0);
  CHECK(roc.back().fpr == 1.0);
  CHECK(roc.back().tpr == 1.0);
  for (std::size_t i = 1; i < roc.size(); ++i) {
    CHECK(roc[i].fpr >= roc[i - 1].fpr);
    CHECK(roc[i].tpr >= roc[i - 1].tpr);
    CHECK(roc[i].threshold < roc[i - 1].threshold);
  }
}

TEST_CASE("single-class sets") {
  const auto s = make({0.2, 0.7, 0.4}, {1, 1, 1});
  CHECK_THROWS_AS(auc(s), UndefinedMetric);
  CHECK_THROWS_AS(tpr_at_fpr(s, 0.05), UndefinedMetric);
  CHECK(accuracy_at_optimal(s).accuracy == 1.0);
  const auto row = evaluate_row(s, "x");
  CHECK_FALSE(row.auc.has_value());
  CHECK_FALSE(row.tpr95.has_value());
  CHECK(format_table({row, {}}).find("undefined") != std::string::npos);
}

TEST_CASE("input validation") {
  CHECK_THROWS_AS(auc(make({0.2}, {1})), InvalidArgument);
  CHECK_THROWS_AS(auc(make({0.2, 0.3}, {1})), InvalidArgument);
  CHECK_THROWS_AS(auc(make({0.2, 1.3}, {0, 1})), InvalidArgument);
  CHECK_THROWS_AS(auc(make({0.2, 0.3}, {0, 2})), InvalidArgument);
  CHECK_THROWS_AS(auc(make({0.2, std::nan("")}, {0, 1})), InvalidArgument);
  CHECK_THROWS_AS(tpr_at_fpr(make({0.2, 0.3}, {0, 1}), 1.0), InvalidArgument);
}

TEST_CASE("per-source subsets score each source against the shared real pool") {
  const auto s = make({0.1, 0.3, 0.9, 0.2, 0.6, 0.25}, {0, 0, 1, 1, 1, 0}, {"real", "real", "a", "a", "b", "real"});
  const auto report = evaluate(s);
  CHECK(report.overall.auc == auc(s));
  REQUIRE(report.per_source.size() == 3);
  CHECK(report.per_source[0].scope == "real");
  CHECK_FALSE(report.per_source[0].auc.has_value());
  const auto a = source_subset(s, "a");
  CHECK(a.scores == std::vector<double>{0.1, 0.3, 0.9, 0.2, 0.25});
  CHECK(report.per_source[1].auc == auc(a));
  CHECK(report.per_source[1].auc == test::oracle_auc(a));
  CHECK(report.per_source[2].auc == 1.0);
}

TEST_CASE("report formats are stable") {
  const auto s = make({0.1, 0.4, 0.35, 0.8}, {0, 0, 1, 1}, {"real", "real", "x", "x"});
  const auto report = evaluate(s);
  CHECK(format_table(report) == format_table(evaluate(s)));
  CHECK(format_table(report).starts_with("metric\toverall\treal\tx\n"));
  CHECK(format_jsonl(report).find("\"scope\":\"overall\"") != std::string::npos);
}
