#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "hufor/parameter_store.hpp"

namespace hufor {

struct FdOptions {
  double eps = 1e-5;
  /// Coordinates probed per entry; 0 probes every coordinate. Entries with
  /// fewer coordinates are probed exhaustively.
  std::size_t per_entry = 0;
  std::uint64_t seed = 0;
  /// Only entries whose names start with this prefix are probed.
  std::string prefix;
  /// Combines the eps and 2 eps estimates as (4 D(eps) - D(2 eps)) / 3,
  /// cancelling the eps^2 error term.
  bool richardson = false;
};

struct FdEstimate {
  std::string name;
  std::size_t index = 0;
  double value = 0.0;
};

/// Central differences (L(theta+eps) - L(theta-eps)) / (2 eps) per probed
/// coordinate. Values are restored exactly after each probe. Throws
/// NumericFailure naming the entry when a perturbed loss is not finite.
std::vector<FdEstimate> finite_diff_grad(const std::function<double(const ParameterStore&)>& loss,
                                         ParameterStore& params, const FdOptions& options = {});

/// |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor = 1e-6);

struct GradcheckGroup {
  std::string name;
  std::size_t probes = 0;
  double worst = 0.0;
  std::size_t worst_index = 0;
};

struct GradcheckReport {
  std::vector<GradcheckGroup> groups;

  double worst() const;
  bool passed(double tolerance) const { return worst() <= tolerance; }
  std::size_t probes() const;
};

/// Compares finite-difference estimates with the analytic gradients held in
/// params (grad slots), one group per entry name.
GradcheckReport compare_gradients(const ParameterStore& params, const std::vector<FdEstimate>& estimates);

}  // namespace hufor
