#include "hufor/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "hufor/errors.hpp"

namespace hufor::metrics {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require_both_classes(const ScoredSet& set, const char* metric) {
  if (set.positives() == 0 || set.negatives() == 0) {
    throw UndefinedMetric(std::string(metric) + " needs at least one positive and one negative sample");
  }
}

/// (score, label) sorted ascending by score.
std::vector<std::pair<double, int>> sorted_pairs(const ScoredSet& set) {
  std::vector<std::pair<double, int>> v(set.scores.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = {set.scores[i], set.labels[i]};
  std::sort(v.begin(), v.end());
  return v;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "undefined"; }

nlohmann::ordered_json opt_json(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

void ScoredSet::validate() const {
  if (scores.size() != labels.size()) throw InvalidArgument("scored set: scores and labels differ in length");
  if (!sources.empty() && sources.size() != scores.size()) {
    throw InvalidArgument("scored set: sources must be empty or match the number of scores");
  }
  if (scores.size() < 2) throw InvalidArgument("scored set: at least two samples required");
  for (double s : scores) {
    if (!(s >= 0.0 && s <= 1.0)) throw InvalidArgument("scored set: scores must lie in [0, 1]");
  }
  for (int l : labels) {
    if (l != 0 && l != 1) throw InvalidArgument("scored set: labels must be 0 or 1");
  }
}

std::size_t ScoredSet::positives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
}

std::size_t ScoredSet::negatives() const {
  return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 0));
}

double auc(const ScoredSet& set) {
  set.validate();
  require_both_classes(set, "auc");
  const auto v = sorted_pairs(set);
  // Twice the Mann-Whitney count, kept integral so the result is one division.
  unsigned long long twice_wins = 0, negatives_below = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    unsigned long long pos = 0, neg = 0;
    for (; j < v.size() && v[j].first == v[i].first; ++j) (v[j].second == 1 ? pos : neg) += 1;
    twice_wins += pos * (2 * negatives_below + neg);
    negatives_below += neg;
    i = j;
  }
  const double pairs = static_cast<double>(set.positives()) * static_cast<double>(set.negatives());
  return static_cast<double>(twice_wins) / (2.0 * pairs);
}

Operating accuracy_at_optimal(const ScoredSet& set) {
  set.validate();
  const auto v = sorted_pairs(set);
  const std::size_t n = v.size();
  // Threshold -inf predicts everything forged: correct = positives.
  std::size_t correct = set.positives();
  Operating best{static_cast<double>(correct) / n, -kInf};
  std::size_t best_correct = correct;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    for (; j < n && v[j].first == v[i].first; ++j) correct += v[j].second == 0 ? 1 : 0;
    for (std::size_t k = i; k < j; ++k) correct -= v[k].second == 1 ? 1 : 0;
    // Threshold now sits above the group [i, j).
    const double threshold = j < n ? (v[j - 1].first + v[j].first) / 2.0 : kInf;
    if (correct > best_correct) {
      best_correct = correct;
      best = {static_cast<double>(correct) / n, threshold};
    }
    i = j;
  }
  return best;
}

double tpr_at_fpr(const ScoredSet& set, double fpr_cap) {
  set.validate();
  if (!(fpr_cap >= 0.0 && fpr_cap < 1.0)) throw InvalidArgument("tpr_at_fpr: fpr_cap must lie in [0, 1)");
  require_both_classes(set, "tpr_at_fpr");
  const auto roc = roc_curve(set);
  double best = 0.0;
  for (const auto& p : roc) {
    if (p.fpr <= fpr_cap) best = std::max(best, p.tpr);
  }
  return best;
}

std::vector<RocPoint> roc_curve(const ScoredSet& set) {
  set.validate();
  require_both_classes(set, "roc_curve");
  const auto v = sorted_pairs(set);
  const double p = static_cast<double>(set.positives());
  const double n = static_cast<double>(set.negatives());
  std::vector<RocPoint> out{{kInf, 0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t j = v.size(); j > 0;) {
    std::size_t i = j;
    for (; i > 0 && v[i - 1].first == v[j - 1].first; --i) (v[i - 1].second == 1 ? tp : fp) += 1;
    out.push_back({v[j - 1].first, static_cast<double>(fp) / n, static_cast<double>(tp) / p});
    j = i;
  }
  return out;
}

ScoredSet source_subset(const ScoredSet& set, const std::string& source) {
  ScoredSet out;
  for (std::size_t i = 0; i < set.scores.size(); ++i) {
    if (set.sources[i] == source || set.labels[i] == 0) {
      out.scores.push_back(set.scores[i]);
      out.labels.push_back(set.labels[i]);
      out.sources.push_back(set.sources[i]);
    }
  }
  return out;
}

MetricRow evaluate_row(const ScoredSet& set, std::string scope) {
  set.validate();
  MetricRow row;
  row.scope = std::move(scope);
  row.n = set.scores.size();
  row.positives = set.positives();
  row.negatives = set.negatives();
  const Operating op = accuracy_at_optimal(set);
  row.accuracy = op.accuracy;
  row.threshold = op.threshold;
  if (row.positives > 0 && row.negatives > 0) {
    row.auc = auc(set);
    row.tpr95 = tpr_at_fpr(set, 0.05);
    row.tpr99 = tpr_at_fpr(set, 0.01);
  }
  return row;
}

EvalReport evaluate(const ScoredSet& set) {
  EvalReport report;
  report.overall = evaluate_row(set, "overall");
  std::vector<std::string> tags;
  for (const auto& s : set.sources) {
    if (std::find(tags.begin(), tags.end(), s) == tags.end()) tags.push_back(s);
  }
  for (const auto& tag : tags) {
    const ScoredSet subset = source_subset(set, tag);
    if (subset.scores.size() < 2) {
      MetricRow row;
      row.scope = tag;
      row.n = subset.scores.size();
      row.positives = subset.positives();
      row.negatives = subset.negatives();
      row.accuracy = std::numeric_limits<double>::quiet_NaN();
      report.per_source.push_back(row);
      continue;
    }
    report.per_source.push_back(evaluate_row(subset, tag));
  }
  return report;
}

std::string format_table(const EvalReport& report) {
  std::vector<const MetricRow*> cols{&report.overall};
  for (const auto& r : report.per_source) cols.push_back(&r);
  std::string out = "metric";
  for (const auto* c : cols) out += "\t" + c->scope;
  out += "\n";
  auto line = [&](const char* name, auto get) {
    out += name;
    for (const auto* c : cols) out += "\t" + get(*c);
    out += "\n";
  };
  line("n", [](const MetricRow& r) { return std::to_string(r.n); });
  line("positives", [](const MetricRow& r) { return std::to_string(r.positives); });
  line("negatives", [](const MetricRow& r) { return std::to_string(r.negatives); });
  line("auc", [](const MetricRow& r) { return fmt(r.auc); });
  line("accuracy_opt", [](const MetricRow& r) { return std::isnan(r.accuracy) ? "undefined" : fmt(r.accuracy); });
  line("threshold_opt", [](const MetricRow& r) { return std::isnan(r.accuracy) ? "undefined" : fmt(r.threshold); });
  line("tpr95", [](const MetricRow& r) { return fmt(r.tpr95); });
  line("tpr99", [](const MetricRow& r) { return fmt(r.tpr99); });
  return out;
}

std::string format_jsonl(const EvalReport& report) {
  std::string out;
  auto emit = [&](const MetricRow& r) {
    nlohmann::ordered_json j;
    j["scope"] = r.scope;
    j["n"] = r.n;
    j["positives"] = r.positives;
    j["negatives"] = r.negatives;
    j["auc"] = opt_json(r.auc);
    const bool defined = !std::isnan(r.accuracy);
    j["accuracy_opt"] = defined ? nlohmann::ordered_json(r.accuracy) : nlohmann::ordered_json(nullptr);
    // JSON has no infinities; the extreme thresholds are spelled out.
    if (!defined) {
      j["threshold_opt"] = nullptr;
    } else if (std::isinf(r.threshold)) {
      j["threshold_opt"] = r.threshold > 0 ? "+inf" : "-inf";
    } else {
      j["threshold_opt"] = r.threshold;
    }
    j["tpr95"] = opt_json(r.tpr95);
    j["tpr99"] = opt_json(r.tpr99);
    out += j.dump() + "\n";
  };
  emit(report.overall);
  for (const auto& r : report.per_source) emit(r);
  return out;
}

std::string format_roc(const std::vector<RocPoint>& roc) {
  std::string out = "threshold\tfpr\ttpr\n";
  char buf[96];
  for (const auto& p : roc) {
    if (std::isinf(p.threshold)) {
      std::snprintf(buf, sizeof buf, "inf\t%.6f\t%.6f\n", p.fpr, p.tpr);
    } else {
      std::snprintf(buf, sizeof buf, "%.6f\t%.6f\t%.6f\n", p.threshold, p.fpr, p.tpr);
    }
    out += buf;
  }
  return out;
}

}  // namespace hufor::metrics
