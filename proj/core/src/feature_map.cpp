#include "hufor/feature_map.hpp"

#include <cmath>
#include <string>

#include "hufor/errors.hpp"

namespace hufor {

FeatureMap::FeatureMap(int channels, int height, int width, double fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels < 1 || height < 1 || width < 1) {
    throw InvalidArgument("FeatureMap: every dimension must be >= 1");
  }
  data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

FeatureMap::FeatureMap(int channels, int height, int width, std::vector<double> data)
    : channels_(channels), height_(height), width_(width), data_(std::move(data)) {
  if (channels < 1 || height < 1 || width < 1) {
    throw InvalidArgument("FeatureMap: every dimension must be >= 1");
  }
  if (data_.size() != static_cast<std::size_t>(channels) * height * width) {
    throw InvalidArgument("FeatureMap: data length does not match shape");
  }
}

bool FeatureMap::all_finite() const noexcept {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InvalidArgument(std::string(what) + ": shape mismatch (" + std::to_string(a.channels()) +
                          "x" + std::to_string(a.height()) + "x" + std::to_string(a.width()) +
                          " vs " + std::to_string(b.channels()) + "x" + std::to_string(b.height()) +
                          "x" + std::to_string(b.width()) + ")");
  }
}

void require_finite(const FeatureMap& x, const char* what) {
  if (!x.all_finite()) throw InvalidArgument(std::string(what) + ": input contains NaN or Inf");
}

FeatureMap operator+(const FeatureMap& a, const FeatureMap& b) {
  FeatureMap out = a;
  out += b;
  return out;
}

FeatureMap operator-(const FeatureMap& a, const FeatureMap& b) {
  require_same_shape(a, b, "operator-");
  FeatureMap out = a;
  auto o = out.data();
  auto bb = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bb[i];
  return out;
}

FeatureMap operator*(double s, const FeatureMap& a) {
  FeatureMap out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

FeatureMap& operator+=(FeatureMap& a, const FeatureMap& b) {
  require_same_shape(a, b, "operator+=");
  auto o = a.data();
  auto bb = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bb[i];
  return a;
}

void axpy(double alpha, const FeatureMap& x, FeatureMap& y) {
  require_same_shape(x, y, "axpy");
  auto xs = x.data();
  auto ys = y.data();
  for (std::size_t i = 0; i < ys.size(); ++i) ys[i] += alpha * xs[i];
}

double l1_norm(const FeatureMap& x, int channel) {
  double s = 0.0;
  if (channel < 0) {
    for (double v : x.data()) s += std::abs(v);
  } else {
    for (double v : x.plane(channel)) s += std::abs(v);
  }
  return s;
}

double channel_sum(const FeatureMap& x, int channel) {
  double s = 0.0;
  for (double v : x.plane(channel)) s += v;
  return s;
}

double dot(const FeatureMap& a, const FeatureMap& b) {
  require_same_shape(a, b, "dot");
  double s = 0.0;
  auto as = a.data();
  auto bs = b.data();
  for (std::size_t i = 0; i < as.size(); ++i) s += as[i] * bs[i];
  return s;
}

FeatureMap circular_shift(const FeatureMap& x, int dy, int dx) {
  FeatureMap out(x.channels(), x.height(), x.width());
  const int h = x.height();
  const int w = x.width();
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < h; ++y) {
      const int ty = ((y + dy) % h + h) % h;
      for (int xx = 0; xx < w; ++xx) {
        const int tx = ((xx + dx) % w + w) % w;
        out(c, ty, tx) = x(c, y, xx);
      }
    }
  }
  return out;
}

}  // namespace hufor
