#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hufor/parameter_store.hpp"

namespace hufor {

enum class Schedule { constant, cosine };

Schedule parse_schedule(std::string_view name);

struct StageConfig {
  int epochs = 20;
  int batch = 16;
  double learning_rate = 1e-2;  // peak rate for the cosine schedule
  double momentum = 0.9;
  Schedule schedule = Schedule::cosine;
  std::uint64_t seed = 7;
};

/// Rate for update `step` of `total`: constant, or
/// lr * (1 + cos(pi * step / total)) / 2.
double scheduled_rate(const StageConfig& config, std::size_t step, std::size_t total);

/// Number of updates a stage performs over n examples.
std::size_t total_steps(const StageConfig& config, std::size_t n);

/// Per-epoch mean training loss.
struct LossTrace {
  std::vector<double> epoch_loss;
};

/// SGD with heavy-ball momentum over the entries of selected namespaces:
///   v <- momentum * v + scale * grad;  theta <- theta - lr * v
/// Entries outside the namespaces are never touched.
class Sgd {
 public:
  Sgd(ParameterStore& store, std::vector<std::string> prefixes, double learning_rate, double momentum = 0.9);

  /// Applies one update using grad * scale (scale = 1/batch for a batch mean).
  void step(double scale = 1.0);
  void zero_grad();

  double learning_rate() const noexcept { return lr_; }
  void set_learning_rate(double lr) noexcept { lr_ = lr; }

 private:
  struct Slot {
    Param* param;
    std::vector<double> velocity;
  };
  ParameterStore& store_;
  std::vector<std::string> prefixes_;
  std::vector<Slot> slots_;
  double lr_;
  double momentum_;
};

/// True when name begins with any of the prefixes.
bool in_namespaces(const std::string& name, const std::vector<std::string>& prefixes);

}  // namespace hufor
