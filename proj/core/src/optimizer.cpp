#include "hufor/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hufor/errors.hpp"

namespace hufor {

Schedule parse_schedule(std::string_view name) {
  if (name == "constant") return Schedule::constant;
  if (name == "cosine") return Schedule::cosine;
  throw InvalidArgument("unknown learning-rate schedule '" + std::string(name) + "'");
}

double scheduled_rate(const StageConfig& config, std::size_t step, std::size_t total) {
  if (config.schedule == Schedule::constant || total == 0) return config.learning_rate;
  const double t = static_cast<double>(step) / static_cast<double>(total);
  return config.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

std::size_t total_steps(const StageConfig& config, std::size_t n) {
  const auto batch = static_cast<std::size_t>(std::max(1, config.batch));
  return static_cast<std::size_t>(std::max(0, config.epochs)) * ((n + batch - 1) / batch);
}

bool in_namespaces(const std::string& name, const std::vector<std::string>& prefixes) {
  return std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) { return name.starts_with(p); });
}

Sgd::Sgd(ParameterStore& store, std::vector<std::string> prefixes, double learning_rate, double momentum)
    : store_(store), prefixes_(std::move(prefixes)), lr_(learning_rate), momentum_(momentum) {
  if (learning_rate < 0.0) throw InvalidArgument("sgd: learning rate must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw InvalidArgument("sgd: momentum must be in [0, 1)");
  for (const auto& name : store.names()) {
    if (!in_namespaces(name, prefixes_)) continue;
    Param& p = store.at(name);
    slots_.push_back({&p, std::vector<double>(p.size(), 0.0)});
  }
}

void Sgd::zero_grad() {
  for (auto& s : slots_) std::fill(s.param->grad.begin(), s.param->grad.end(), 0.0);
}

void Sgd::step(double scale) {
  for (auto& s : slots_) {
    auto& value = s.param->value;
    const auto& grad = s.param->grad;
    for (std::size_t i = 0; i < value.size(); ++i) {
      s.velocity[i] = momentum_ * s.velocity[i] + scale * grad[i];
      value[i] -= lr_ * s.velocity[i];
    }
  }
  store_.advance_step();
}

}  // namespace hufor
