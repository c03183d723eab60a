#include "hufor/nn.hpp"

#include <algorithm>
#include <cmath>

#include "hufor/errors.hpp"

namespace hufor::nn {

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double silu(double x) noexcept { return x * sigmoid(x); }

double silu_grad(double x) noexcept {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

Vector softmax(std::span<const double> logits) {
  Vector p(logits.size());
  if (logits.empty()) return p;
  const double m = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

Vector softmax_backward(std::span<const double> p, std::span<const double> grad_p) {
  double inner = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) inner += p[i] * grad_p[i];
  Vector g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = p[i] * (grad_p[i] - inner);
  return g;
}

void init_fan_in(Param& p, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(std::max<std::size_t>(fan_in, 1)));
  for (double& v : p.value) v = rng.uniform(-bound, bound);
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(ParameterStore& store, const std::string& name, int in_channels, int out_channels, int kernel)
    : in_(in_channels), out_(out_channels), k_(kernel) {
  if (kernel < 1 || kernel % 2 == 0) throw InvalidArgument(name + ": kernel size must be odd");
  weight_ = &store.bind(name + ".weight", {static_cast<std::size_t>(out_channels),
                                           static_cast<std::size_t>(in_channels), static_cast<std::size_t>(kernel),
                                           static_cast<std::size_t>(kernel)});
  bias_ = &store.bind(name + ".bias", {static_cast<std::size_t>(out_channels)});
}

void Conv2d::init(Rng& rng) {
  init_fan_in(*weight_, static_cast<std::size_t>(in_ * k_ * k_), rng);
  std::fill(bias_->value.begin(), bias_->value.end(), 0.0);
}

void Conv2d::zero() {
  std::fill(weight_->value.begin(), weight_->value.end(), 0.0);
  std::fill(bias_->value.begin(), bias_->value.end(), 0.0);
}

void Conv2d::standardize(std::span<const double> mean, std::span<const double> stddev) {
  const std::size_t per_out = static_cast<std::size_t>(in_) * k_ * k_;
  for (int o = 0; o < out_; ++o) {
    const double inv = 1.0 / stddev[o];
    for (std::size_t i = 0; i < per_out; ++i) weight_->value[o * per_out + i] *= inv;
    bias_->value[o] = (bias_->value[o] - mean[o]) * inv;
  }
}

FeatureMap Conv2d::forward(const FeatureMap& x) {
  if (x.channels() != in_) {
    throw InvalidArgument("conv2d: expected " + std::to_string(in_) + " input channels, got " +
                          std::to_string(x.channels()));
  }
  input_ = x;
  const int h = x.height();
  const int w = x.width();
  const int pad = k_ / 2;
  FeatureMap out(out_, h, w);
  const double* wt = weight_->value.data();
  for (int o = 0; o < out_; ++o) {
    auto plane = out.plane(o);
    std::fill(plane.begin(), plane.end(), bias_->value[o]);
    double* op = plane.data();
    for (int i = 0; i < in_; ++i) {
      const double* ip = x.plane(i).data();
      for (int ky = 0; ky < k_; ++ky) {
        const int dy = ky - pad;
        const int y0 = std::max(0, -dy);
        const int y1 = std::min(h, h - dy);
        for (int kx = 0; kx < k_; ++kx) {
          const int dx = kx - pad;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          const double wv = wt[((o * in_ + i) * k_ + ky) * k_ + kx];
          for (int y = y0; y < y1; ++y) {
            double* orow = op + static_cast<std::size_t>(y) * w;
            const double* irow = ip + static_cast<std::size_t>(y + dy) * w + dx;
            for (int xx = x0; xx < x1; ++xx) orow[xx] += wv * irow[xx];
          }
        }
      }
    }
  }
  return out;
}

FeatureMap Conv2d::backward(const FeatureMap& grad_out) {
  const int h = input_.height();
  const int w = input_.width();
  const int pad = k_ / 2;
  FeatureMap grad_in(in_, h, w);
  const double* wt = weight_->value.data();
  double* gw = weight_->grad.data();
  for (int o = 0; o < out_; ++o) {
    const double* gp = grad_out.plane(o).data();
    double bsum = 0.0;
    for (std::size_t j = 0; j < grad_out.plane_size(); ++j) bsum += gp[j];
    bias_->grad[o] += bsum;
    for (int i = 0; i < in_; ++i) {
      const double* ip = input_.plane(i).data();
      double* gip = grad_in.plane(i).data();
      for (int ky = 0; ky < k_; ++ky) {
        const int dy = ky - pad;
        const int y0 = std::max(0, -dy);
        const int y1 = std::min(h, h - dy);
        for (int kx = 0; kx < k_; ++kx) {
          const int dx = kx - pad;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(w, w - dx);
          const std::size_t widx = ((o * in_ + i) * k_ + ky) * k_ + kx;
          const double wv = wt[widx];
          double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
          for (int y = y0; y < y1; ++y) {
            const double* grow = gp + static_cast<std::size_t>(y) * w;
            const double* irow = ip + static_cast<std::size_t>(y + dy) * w + dx;
            double* girow = gip + static_cast<std::size_t>(y + dy) * w + dx;
            int xx = x0;
            for (; xx + 3 < x1; xx += 4) {
              a0 += grow[xx] * irow[xx];
              a1 += grow[xx + 1] * irow[xx + 1];
              a2 += grow[xx + 2] * irow[xx + 2];
              a3 += grow[xx + 3] * irow[xx + 3];
            }
            for (; xx < x1; ++xx) a0 += grow[xx] * irow[xx];
            for (xx = x0; xx < x1; ++xx) girow[xx] += wv * grow[xx];
          }
          gw[widx] += (a0 + a1) + (a2 + a3);
        }
      }
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------- ChannelAffine

ChannelAffine::ChannelAffine(ParameterStore& store, const std::string& name, int channels) : channels_(channels) {
  scale_ = &store.bind(name + ".scale", {static_cast<std::size_t>(channels)});
  shift_ = &store.bind(name + ".shift", {static_cast<std::size_t>(channels)});
}

void ChannelAffine::init() {
  std::fill(scale_->value.begin(), scale_->value.end(), 1.0);
  std::fill(shift_->value.begin(), shift_->value.end(), 0.0);
}

FeatureMap ChannelAffine::forward(const FeatureMap& x) {
  if (x.channels() != channels_) throw InvalidArgument("channel_affine: channel mismatch");
  input_ = x;
  FeatureMap out = x;
  for (int c = 0; c < channels_; ++c) {
    const double s = scale_->value[c];
    const double b = shift_->value[c];
    for (double& v : out.plane(c)) v = s * v + b;
  }
  return out;
}

FeatureMap ChannelAffine::backward(const FeatureMap& grad_out) {
  FeatureMap grad_in = grad_out;
  for (int c = 0; c < channels_; ++c) {
    const auto g = grad_out.plane(c);
    const auto in = input_.plane(c);
    double gs = 0.0, gb = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) {
      gs += g[j] * in[j];
      gb += g[j];
    }
    scale_->grad[c] += gs;
    shift_->grad[c] += gb;
    const double s = scale_->value[c];
    for (double& v : grad_in.plane(c)) v *= s;
  }
  return grad_in;
}

// ---------------------------------------------------------------- Silu

FeatureMap Silu::forward(const FeatureMap& x) {
  input_ = x;
  FeatureMap out = x;
  for (double& v : out.data()) v = silu(v);
  return out;
}

FeatureMap Silu::backward(const FeatureMap& grad_out) const {
  FeatureMap grad_in = grad_out;
  auto g = grad_in.data();
  auto in = input_.data();
  for (std::size_t j = 0; j < g.size(); ++j) g[j] *= silu_grad(in[j]);
  return grad_in;
}

// ---------------------------------------------------------------- pooling

FeatureMap AvgPool2::forward(const FeatureMap& x) {
  in_h_ = x.height();
  in_w_ = x.width();
  const int oh = std::max(1, in_h_ / 2);
  const int ow = std::max(1, in_w_ / 2);
  if (in_h_ < 2 || in_w_ < 2) throw InvalidArgument("avgpool2: input smaller than 2x2");
  FeatureMap out(x.channels(), oh, ow);
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx) {
        out(c, y, xx) = 0.25 * (x(c, 2 * y, 2 * xx) + x(c, 2 * y, 2 * xx + 1) + x(c, 2 * y + 1, 2 * xx) +
                                x(c, 2 * y + 1, 2 * xx + 1));
      }
    }
  }
  return out;
}

FeatureMap AvgPool2::backward(const FeatureMap& grad_out) const {
  FeatureMap grad_in(grad_out.channels(), in_h_, in_w_);
  for (int c = 0; c < grad_out.channels(); ++c) {
    for (int y = 0; y < grad_out.height(); ++y) {
      for (int xx = 0; xx < grad_out.width(); ++xx) {
        const double g = 0.25 * grad_out(c, y, xx);
        grad_in(c, 2 * y, 2 * xx) += g;
        grad_in(c, 2 * y, 2 * xx + 1) += g;
        grad_in(c, 2 * y + 1, 2 * xx) += g;
        grad_in(c, 2 * y + 1, 2 * xx + 1) += g;
      }
    }
  }
  return grad_in;
}

Vector global_average_pool(const FeatureMap& x) {
  Vector out(x.channels());
  const double inv = 1.0 / static_cast<double>(x.plane_size());
  for (int c = 0; c < x.channels(); ++c) {
    double s = 0.0;
    for (double v : x.plane(c)) s += v;
    out[c] = s * inv;
  }
  return out;
}

FeatureMap global_average_pool_backward(std::span<const double> grad, int channels, int height, int width) {
  FeatureMap g(channels, height, width);
  const double inv = 1.0 / (static_cast<double>(height) * width);
  for (int c = 0; c < channels; ++c) {
    for (double& v : g.plane(c)) v = grad[c] * inv;
  }
  return g;
}

// ---------------------------------------------------------------- Linear

Linear::Linear(ParameterStore& store, const std::string& name, int in_features, int out_features)
    : in_(in_features), out_(out_features) {
  weight_ = &store.bind(name + ".weight",
                        {static_cast<std::size_t>(out_features), static_cast<std::size_t>(in_features)});
  bias_ = &store.bind(name + ".bias", {static_cast<std::size_t>(out_features)});
}

void Linear::init(Rng& rng) {
  init_fan_in(*weight_, static_cast<std::size_t>(in_), rng);
  std::fill(bias_->value.begin(), bias_->value.end(), 0.0);
}

void Linear::zero() {
  std::fill(weight_->value.begin(), weight_->value.end(), 0.0);
  std::fill(bias_->value.begin(), bias_->value.end(), 0.0);
}

void Linear::standardize(std::span<const double> mean, std::span<const double> stddev) {
  for (int j = 0; j < out_; ++j) {
    const double inv = 1.0 / stddev[j];
    for (int i = 0; i < in_; ++i) weight_->value[static_cast<std::size_t>(j) * in_ + i] *= inv;
    bias_->value[j] = (bias_->value[j] - mean[j]) * inv;
  }
}

Vector Linear::forward(std::span<const double> x) {
  if (static_cast<int>(x.size()) != in_) {
    throw InvalidArgument("linear: expected " + std::to_string(in_) + " inputs, got " + std::to_string(x.size()));
  }
  input_.assign(x.begin(), x.end());
  Vector out(out_);
  const double* w = weight_->value.data();
  for (int o = 0; o < out_; ++o) {
    double s = bias_->value[o];
    const double* row = w + static_cast<std::size_t>(o) * in_;
    for (int i = 0; i < in_; ++i) s += row[i] * x[i];
    out[o] = s;
  }
  return out;
}

Vector Linear::backward(std::span<const double> grad_out) {
  Vector grad_in(in_, 0.0);
  const double* w = weight_->value.data();
  double* gw = weight_->grad.data();
  for (int o = 0; o < out_; ++o) {
    const double g = grad_out[o];
    bias_->grad[o] += g;
    const double* row = w + static_cast<std::size_t>(o) * in_;
    double* grow = gw + static_cast<std::size_t>(o) * in_;
    for (int i = 0; i < in_; ++i) {
      grow[i] += g * input_[i];
      grad_in[i] += g * row[i];
    }
  }
  return grad_in;
}

// ---------------------------------------------------------------- Mlp2

Mlp2::Mlp2(ParameterStore& store, const std::string& name, int in_features, int hidden, int out_features)
    : first_(store, name + ".fc1", in_features, hidden), second_(store, name + ".fc2", hidden, out_features) {}

void Mlp2::init(Rng& rng) {
  first_.init(rng);
  second_.init(rng);
}

void Mlp2::zero_output() { second_.zero(); }

Vector Mlp2::forward(std::span<const double> x) {
  pre_ = first_.forward(x);
  Vector hidden(pre_.size());
  for (std::size_t i = 0; i < pre_.size(); ++i) hidden[i] = silu(pre_[i]);
  return second_.forward(hidden);
}

Vector Mlp2::backward(std::span<const double> grad_out) {
  Vector g = second_.backward(grad_out);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= silu_grad(pre_[i]);
  return first_.backward(g);
}

}  // namespace hufor::nn
