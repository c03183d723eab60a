#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hufor {

/// Dense C x H x W array of activations, channel-major then row-major.
/// The shape is fixed at construction.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int channels, int height, int width, double fill = 0.0);
  FeatureMap(int channels, int height, int width, std::vector<double> data);

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(int c, int y, int x) noexcept { return data_[index(c, y, x)]; }
  double operator()(int c, int y, int x) const noexcept { return data_[index(c, y, x)]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> plane(int c) noexcept { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const double> plane(int c) const noexcept {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  bool same_shape(const FeatureMap& other) const noexcept {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }
  bool all_finite() const noexcept;

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t index(int c, int y, int x) const noexcept {
    return (static_cast<std::size_t>(c) * height_ + y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<double> data_;
};

// Elementwise helpers. Shapes must match; mismatches throw InvalidArgument.
FeatureMap operator+(const FeatureMap& a, const FeatureMap& b);
FeatureMap operator-(const FeatureMap& a, const FeatureMap& b);
FeatureMap operator*(double s, const FeatureMap& a);
FeatureMap& operator+=(FeatureMap& a, const FeatureMap& b);
void axpy(double alpha, const FeatureMap& x, FeatureMap& y);

/// Sum of |entries| over one channel (or all channels when channel < 0).
double l1_norm(const FeatureMap& x, int channel = -1);
double channel_sum(const FeatureMap& x, int channel);
double dot(const FeatureMap& a, const FeatureMap& b);

/// Circular shift by (dy, dx) in every channel.
FeatureMap circular_shift(const FeatureMap& x, int dy, int dx);

void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* what);
void require_finite(const FeatureMap& x, const char* what);

}  // namespace hufor
