#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <limits>
#include <vector>

#include "hufor/metrics.hpp"

// Brute-force metric references: every threshold is tried directly, no sorting.
namespace hufor::test {

inline std::vector<double> candidate_thresholds(const metrics::ScoredSet& set) {
  std::vector<double> t = set.scores;
  t.push_back(-std::numeric_limits<double>::infinity());
  t.push_back(std::numeric_limits<double>::infinity());
  return t;
}

inline double oracle_auc(const metrics::ScoredSet& set) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < set.scores.size(); ++i) {
    if (set.labels[i] != 1) continue;
    for (std::size_t j = 0; j < set.scores.size(); ++j) {
      if (set.labels[j] != 0) continue;
      pairs += 1.0;
      if (set.scores[i] > set.scores[j]) wins += 1.0;
      if (set.scores[i] == set.scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

inline std::size_t correct_at(const metrics::ScoredSet& set, double threshold) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < set.scores.size(); ++i) {
    correct += (set.scores[i] >= threshold ? 1 : 0) == set.labels[i] ? 1 : 0;
  }
  return correct;
}

inline double oracle_accuracy(const metrics::ScoredSet& set) {
  std::size_t best = 0;
  for (double t : candidate_thresholds(set)) best = std::max(best, correct_at(set, t));
  return static_cast<double>(best) / static_cast<double>(set.scores.size());
}

inline double oracle_tpr_at_fpr(const metrics::ScoredSet& set, double cap) {
  const double p = static_cast<double>(set.positives());
  const double n = static_cast<double>(set.negatives());
  double best = 0.0;
  for (double t : candidate_thresholds(set)) {
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < set.scores.size(); ++i) {
      if (set.scores[i] < t) continue;
      (set.labels[i] == 1 ? tp : fp) += 1;
    }
    if (static_cast<double>(fp) / n <= cap) best = std::max(best, static_cast<double>(tp) / p);
  }
  return best;
}

/// Calls visit for every (scores, labels) assignment of size 2..max_n over the grid.
inline void for_each_grid_set(const std::vector<double>& grid, std::size_t max_n,
                              const std::function<void(const metrics::ScoredSet&)>& visit) {
  metrics::ScoredSet set;
  const std::size_t g = grid.size();
  for (std::size_t n = 2; n <= max_n; ++n) {
    set.scores.assign(n, 0.0);
    set.labels.assign(n, 0);
    std::size_t states = 1;
    for (std::size_t i = 0; i < n; ++i) states *= 2 * g;
    for (std::size_t code = 0; code < states; ++code) {
      std::size_t c = code;
      for (std::size_t i = 0; i < n; ++i) {
        set.scores[i] = grid[c % g];
        c /= g;
        set.labels[i] = static_cast<int>(c % 2);
        c /= 2;
      }
      visit(set);
    }
  }
}

}  // namespace hufor::test
