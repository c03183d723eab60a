#pragma once

#include <optional>
#include <string>
#include <vector>

namespace hufor::metrics {

struct ScoredSet {
  std::vector<double> scores;  // in [0, 1]
  std::vector<int> labels;     // 0 real, 1 forged
  std::vector<std::string> sources;  // optional; empty or one tag per sample

  /// Equal lengths, n >= 2, scores finite in [0, 1], labels binary.
  void validate() const;
  std::size_t positives() const;
  std::size_t negatives() const;
};

/// P(score of a random positive > score of a random negative), ties credited 0.5.
/// Throws UndefinedMetric when a class is missing.
double auc(const ScoredSet& set);

struct Operating {
  double accuracy = 0.0;
  double threshold = 0.0;
};

/// Best accuracy over thresholds {-inf, midpoints of adjacent distinct scores,
/// +inf}, predicting forged when score >= threshold. Ties go to the smallest
/// threshold.
Operating accuracy_at_optimal(const ScoredSet& set);

/// Largest TPR over thresholds whose empirical FPR <= fpr_cap, on the step ROC.
double tpr_at_fpr(const ScoredSet& set, double fpr_cap);

struct RocPoint {
  double threshold;
  double fpr;
  double tpr;
};

/// Vertices of the step ROC from (0, 0) at +inf down to (1, 1).
std::vector<RocPoint> roc_curve(const ScoredSet& set);

struct MetricRow {
  std::string scope;
  std::size_t n = 0, positives = 0, negatives = 0;
  std::optional<double> auc;
  double accuracy = 0.0;
  double threshold = 0.0;
  std::optional<double> tpr95;
  std::optional<double> tpr99;
};

struct EvalReport {
  MetricRow overall;
  /// One row per source tag in order of first appearance. The subset for a
  /// tag is its own samples plus every label-0 sample, so forged-only sources
  /// are scored against the shared real pool.
  std::vector<MetricRow> per_source;
};

/// Metrics that need both classes are left empty instead of throwing.
MetricRow evaluate_row(const ScoredSet& set, std::string scope);
EvalReport evaluate(const ScoredSet& set);
ScoredSet source_subset(const ScoredSet& set, const std::string& source);

/// Columnar text: header "metric overall <sources...>", one row per metric.
std::string format_table(const EvalReport& report);
/// One JSON object per scope.
std::string format_jsonl(const EvalReport& report);
std::string format_roc(const std::vector<RocPoint>& roc);

}  // namespace hufor::metrics
