#include "hufor/gaussian.hpp"

#include <cmath>
#include <string>

#include "hufor/errors.hpp"

namespace hufor {

Padding parse_padding(std::string_view name) {
  if (name == "reflect") return Padding::reflect;
  if (name == "circular") return Padding::circular;
  if (name == "replicate") return Padding::replicate;
  throw InvalidArgument("unknown padding policy '" + std::string(name) + "'");
}

std::string_view to_string(Padding p) {
  switch (p) {
    case Padding::reflect: return "reflect";
    case Padding::circular: return "circular";
    case Padding::replicate: return "replicate";
  }
  return "?";
}

int pad_index(int i, int n, Padding padding) noexcept {
  if (i >= 0 && i < n) return i;
  switch (padding) {
    case Padding::circular:
      return ((i % n) + n) % n;
    case Padding::replicate:
      return i < 0 ? 0 : n - 1;
    case Padding::reflect: {
      if (n == 1) return 0;
      const int period = 2 * (n - 1);
      int m = ((i % period) + period) % period;
      return m < n ? m : period - m;
    }
  }
  return 0;
}

int GaussianSpec::effective_radius() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw InvalidArgument("gaussian: sigma must be positive, got " + std::to_string(sigma));
  }
  if (radius == 0) return static_cast<int>(std::ceil(3.0 * sigma));
  if (radius < 1) throw InvalidArgument("gaussian: radius must be >= 1");
  return radius;
}

std::vector<double> gaussian_kernel(const GaussianSpec& spec) {
  const int r = spec.effective_radius();
  std::vector<double> k(2 * r + 1);
  const double denom = 2.0 * spec.sigma * spec.sigma;
  double sum = 0.0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-static_cast<double>(i) * i / denom);
    sum += k[i + r];
  }
  for (double& v : k) v /= sum;
  return k;
}

namespace {

// One row of a 1-D boundary-aware convolution, taps merged by source index in
// first-occurrence order so circular shifts see identical summation order.
struct LineOperator {
  std::vector<int> start;  // n + 1 offsets
  std::vector<int> src;
  std::vector<double> weight;
};

LineOperator build_line_operator(int n, const std::vector<double>& kernel, Padding padding) {
  const int r = static_cast<int>(kernel.size() / 2);
  LineOperator op;
  op.start.reserve(n + 1);
  std::vector<int> slot(n, -1);
  for (int i = 0; i < n; ++i) {
    const int row_begin = static_cast<int>(op.src.size());
    op.start.push_back(row_begin);
    for (int j = -r; j <= r; ++j) {
      const int s = pad_index(i + j, n, padding);
      if (slot[s] < 0) {
        slot[s] = static_cast<int>(op.src.size());
        op.src.push_back(s);
        op.weight.push_back(kernel[j + r]);
      } else {
        op.weight[slot[s]] += kernel[j + r];
      }
    }
    for (std::size_t e = row_begin; e < op.src.size(); ++e) slot[op.src[e]] = -1;
  }
  op.start.push_back(static_cast<int>(op.src.size()));
  return op;
}

}  // namespace

FeatureMap gaussian_smooth(const FeatureMap& x, const GaussianSpec& spec) {
  require_finite(x, "gaussian_smooth");
  const auto kernel = gaussian_kernel(spec);
  const int h = x.height();
  const int w = x.width();
  const LineOperator hop = build_line_operator(w, kernel, spec.padding);
  const LineOperator vop = build_line_operator(h, kernel, spec.padding);

  FeatureMap tmp(x.channels(), h, w);
  FeatureMap out(x.channels(), h, w);
  for (int c = 0; c < x.channels(); ++c) {
    const double* in = x.plane(c).data();
    double* t = tmp.plane(c).data();
    for (int y = 0; y < h; ++y) {
      const double* row = in + static_cast<std::size_t>(y) * w;
      double* trow = t + static_cast<std::size_t>(y) * w;
      for (int xx = 0; xx < w; ++xx) {
        double acc = 0.0;
        for (int e = hop.start[xx]; e < hop.start[xx + 1]; ++e) acc += hop.weight[e] * row[hop.src[e]];
        trow[xx] = acc;
      }
    }
    double* o = out.plane(c).data();
    for (int y = 0; y < h; ++y) {
      double* orow = o + static_cast<std::size_t>(y) * w;
      for (int e = vop.start[y]; e < vop.start[y + 1]; ++e) {
        const double wt = vop.weight[e];
        const double* srow = t + static_cast<std::size_t>(vop.src[e]) * w;
        for (int xx = 0; xx < w; ++xx) orow[xx] += wt * srow[xx];
      }
    }
  }
  return out;
}

FeatureMap gaussian_smooth_adjoint(const FeatureMap& grad_out, const GaussianSpec& spec) {
  const auto kernel = gaussian_kernel(spec);
  const int h = grad_out.height();
  const int w = grad_out.width();
  const LineOperator hop = build_line_operator(w, kernel, spec.padding);
  const LineOperator vop = build_line_operator(h, kernel, spec.padding);

  FeatureMap tmp(grad_out.channels(), h, w);
  FeatureMap out(grad_out.channels(), h, w);
  for (int c = 0; c < grad_out.channels(); ++c) {
    const double* g = grad_out.plane(c).data();
    double* t = tmp.plane(c).data();
    for (int y = 0; y < h; ++y) {
      const double* grow = g + static_cast<std::size_t>(y) * w;
      for (int e = vop.start[y]; e < vop.start[y + 1]; ++e) {
        const double wt = vop.weight[e];
        double* trow = t + static_cast<std::size_t>(vop.src[e]) * w;
        for (int xx = 0; xx < w; ++xx) trow[xx] += wt * grow[xx];
      }
    }
    double* o = out.plane(c).data();
    for (int y = 0; y < h; ++y) {
      const double* trow = t + static_cast<std::size_t>(y) * w;
      double* orow = o + static_cast<std::size_t>(y) * w;
      for (int xx = 0; xx < w; ++xx) {
        const double gv = trow[xx];
        for (int e = hop.start[xx]; e < hop.start[xx + 1]; ++e) orow[hop.src[e]] += hop.weight[e] * gv;
      }
    }
  }
  return out;
}

}  // namespace hufor
