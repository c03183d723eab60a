#pragma once

// Small differentiable building blocks. Every layer binds its parameters in a
// ParameterStore by name, caches what its backward pass needs during forward,
// and accumulates parameter gradients into the store's gradient slots.
// Layers are therefore stateful: one forward must precede each backward, and
// a layer instance must not be shared between threads.

#include <span>
#include <string>
#include <vector>

#include "hufor/feature_map.hpp"
#include "hufor/parameter_store.hpp"
#include "hufor/rng.hpp"

namespace hufor::nn {

using Vector = std::vector<double>;

double sigmoid(double x) noexcept;
double silu(double x) noexcept;
double silu_grad(double x) noexcept;

/// Max-subtracted softmax.
Vector softmax(std::span<const double> logits);
/// Backward of softmax given its output p: dz_i = p_i (g_i - sum_j g_j p_j).
Vector softmax_backward(std::span<const double> p, std::span<const double> grad_p);

/// Fan-in-scaled uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in)).
void init_fan_in(Param& p, std::size_t fan_in, Rng& rng);

/// Stride-1 convolution with zero "same" padding and bias; odd kernel sizes.
class Conv2d {
 public:
  Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels, int kernel);

  FeatureMap forward(const FeatureMap& x);
  FeatureMap backward(const FeatureMap& grad_out);
  void init(Rng& rng);
  void zero();

  int in_channels() const noexcept { return in_; }
  int out_channels() const noexcept { return out_; }
  int kernel() const noexcept { return k_; }
  Param& weight() noexcept { return *weight_; }
  Param& bias() noexcept { return *bias_; }
  /// Rescales output channel c so that (y_c - mean_c) / stddev_c replaces y_c.
  void standardize(std::span<const double> mean, std::span<const double> stddev);

 private:
  int in_, out_, k_;
  Param* weight_;
  Param* bias_;
  FeatureMap input_;
};

/// Per-channel scale and shift (the normalization slot of a conv block).
class ChannelAffine {
 public:
  ChannelAffine(ParameterStore& store, const std::string& name, int channels);

  FeatureMap forward(const FeatureMap& x);
  FeatureMap backward(const FeatureMap& grad_out);
  void init();

 private:
  int channels_;
  Param* scale_;
  Param* shift_;
  FeatureMap input_;
};

class Silu {
 public:
  FeatureMap forward(const FeatureMap& x);
  FeatureMap backward(const FeatureMap& grad_out) const;

 private:
  FeatureMap input_;
};

/// 2x2 average pooling with stride 2; odd trailing rows/columns are dropped.
class AvgPool2 {
 public:
  FeatureMap forward(const FeatureMap& x);
  FeatureMap backward(const FeatureMap& grad_out) const;

 private:
  int in_h_ = 0, in_w_ = 0;
};

Vector global_average_pool(const FeatureMap& x);
FeatureMap global_average_pool_backward(std::span<const double> grad, int channels, int height, int width);

class Linear {
 public:
  Linear(ParameterStore& store, const std::string& name, int in_features, int out_features);

  Vector forward(std::span<const double> x);
  Vector backward(std::span<const double> grad_out);
  void init(Rng& rng);
  void zero();

  int in_features() const noexcept { return in_; }
  int out_features() const noexcept { return out_; }
  Param& weight() noexcept { return *weight_; }
  Param& bias() noexcept { return *bias_; }
  /// Rescales output j so that (y_j - mean_j) / stddev_j replaces y_j.
  void standardize(std::span<const double> mean, std::span<const double> stddev);

 private:
  int in_, out_;
  Param* weight_;
  Param* bias_;
  Vector input_;
};

/// Linear -> SiLU -> Linear.
class Mlp2 {
 public:
  Mlp2(ParameterStore& store, const std::string& name, int in_features, int hidden, int out_features);

  Vector forward(std::span<const double> x);
  Vector backward(std::span<const double> grad_out);
  void init(Rng& rng);
  /// Zeroes the output layer only, so the perceptron starts at a constant 0.
  void zero_output();

  int in_features() const noexcept { return first_.in_features(); }
  int out_features() const noexcept { return second_.out_features(); }
  Linear& output_layer() noexcept { return second_; }

 private:
  Linear first_;
  Linear second_;
  Vector pre_;
};

}  // namespace hufor::nn
