#pragma once

#include <string_view>
#include <vector>

#include "hufor/feature_map.hpp"

namespace hufor {

enum class Padding { reflect, circular, replicate };

Padding parse_padding(std::string_view name);
std::string_view to_string(Padding p);

/// Map an out-of-range index onto [0, n) under the given boundary policy.
/// Reflect mirrors about the edge sample without repeating it (…c b | a b c | b a…).
int pad_index(int i, int n, Padding padding) noexcept;

struct GaussianSpec {
  double sigma = 1.0;
  /// 0 selects ceil(3 * sigma).
  int radius = 0;
  Padding padding = Padding::reflect;

  int effective_radius() const;
};

/// Sampled, normalized 1-D kernel of length 2r+1 (index r is the center).
std::vector<double> gaussian_kernel(const GaussianSpec& spec);

/// Depthwise separable smoothing: a horizontal pass followed by a vertical pass.
FeatureMap gaussian_smooth(const FeatureMap& x, const GaussianSpec& spec);

/// Adjoint of gaussian_smooth (the backward pass of a linear operator).
FeatureMap gaussian_smooth_adjoint(const FeatureMap& grad_out, const GaussianSpec& spec);

}  // namespace hufor
