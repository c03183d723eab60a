#pragma once

#include <span>
#include <vector>

namespace hufor {

inline constexpr double kProbabilityClamp = 1e-7;

/// -[t log y + (1 - t) log(1 - y)] with y clamped to [1e-7, 1 - 1e-7].
/// Throws InvalidArgument when target is not 0 or 1.
double bce_loss(double y, int target);

/// Row-major T x V logits.
struct LogitRows {
  int rows = 0;
  int vocab = 0;
  std::vector<double> data;
};

/// -sum_t log softmax(logits[t])[targets[t]].
double next_token_nll(const LogitRows& logits, std::span<const int> targets);

/// Same loss; also writes d loss / d logits into grad (resized to match).
double next_token_nll(const LogitRows& logits, std::span<const int> targets, std::vector<double>& grad);

}  // namespace hufor
