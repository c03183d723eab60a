#pragma once

#include <cmath>
#include <numbers>

#include "hufor/feature_map.hpp"
#include "hufor/parameter_store.hpp"
#include "hufor/rng.hpp"

namespace hufor::test {

inline FeatureMap random_map(Rng& rng, int c, int h, int w) {
  FeatureMap x(c, h, w);
  for (double& v : x.data()) v = rng.normal();
  return x;
}

inline void randomize(ParameterStore& store, Rng& rng, double scale) {
  for (const auto& name : store.names()) {
    for (double& v : store.at(name).value) v = rng.uniform(-scale, scale);
  }
}

/// sin(omega * x + phase) along the columns of every row and channel.
inline FeatureMap sinusoid(int channels, int size, double period, double phase = 0.3) {
  FeatureMap x(channels, size, size);
  const double omega = 2.0 * std::numbers::pi / period;
  for (int c = 0; c < channels; ++c)
    for (int y = 0; y < size; ++y)
      for (int i = 0; i < size; ++i) x(c, y, i) = std::sin(omega * i + phase);
  return x;
}

/// Least-squares amplitude of y against the reference sinusoid x (same phase).
inline double amplitude_ratio(const FeatureMap& y, const FeatureMap& x) {
  return dot(y, x) / dot(x, x);
}

inline double max_abs_diff(const FeatureMap& a, const FeatureMap& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace hufor::test
