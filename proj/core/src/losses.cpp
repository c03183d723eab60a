#include "hufor/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hufor/errors.hpp"

namespace hufor {

double bce_loss(double y, int target) {
  if (target != 0 && target != 1) {
    throw InvalidArgument("bce_loss: target must be 0 or 1, got " + std::to_string(target));
  }
  const double p = std::clamp(y, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return target == 1 ? -std::log(p) : -std::log1p(-p);
}

namespace {

double nll_impl(const LogitRows& logits, std::span<const int> targets, std::vector<double>* grad) {
  if (static_cast<int>(targets.size()) != logits.rows) {
    throw InvalidArgument("next_token_nll: one target per logit row required");
  }
  if (logits.data.size() != static_cast<std::size_t>(logits.rows) * logits.vocab) {
    throw InvalidArgument("next_token_nll: logit buffer does not match rows x vocab");
  }
  if (grad) grad->assign(logits.data.size(), 0.0);
  double loss = 0.0;
  for (int t = 0; t < logits.rows; ++t) {
    const int target = targets[t];
    if (target < 0 || target >= logits.vocab) {
      throw InvalidArgument("next_token_nll: target id " + std::to_string(target) + " outside vocabulary of " +
                            std::to_string(logits.vocab));
    }
    const double* row = logits.data.data() + static_cast<std::size_t>(t) * logits.vocab;
    const double m = *std::max_element(row, row + logits.vocab);
    double sum = 0.0;
    for (int v = 0; v < logits.vocab; ++v) sum += std::exp(row[v] - m);
    const double log_z = m + std::log(sum);
    loss += log_z - row[target];
    if (grad) {
      double* g = grad->data() + static_cast<std::size_t>(t) * logits.vocab;
      for (int v = 0; v < logits.vocab; ++v) g[v] = std::exp(row[v] - log_z);
      g[target] -= 1.0;
    }
  }
  return loss;
}

}  // namespace

double next_token_nll(const LogitRows& logits, std::span<const int> targets) {
  return nll_impl(logits, targets, nullptr);
}

double next_token_nll(const LogitRows& logits, std::span<const int> targets, std::vector<double>& grad) {
  return nll_impl(logits, targets, &grad);
}

}  // namespace hufor
