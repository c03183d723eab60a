#include "hufor/adalog.hpp"

#include <algorithm>
#include <cmath>

#include "hufor/errors.hpp"

namespace hufor::adalog {

void ScaleBank::validate() const {
  if (sigmas.empty()) throw InvalidArgument("scale bank: at least one sigma required");
  for (std::size_t i = 0; i < sigmas.size(); ++i) {
    if (!(sigmas[i] > 0.0)) throw InvalidArgument("scale bank: sigmas must be positive");
    if (i > 0 && !(sigmas[i] > sigmas[i - 1])) throw InvalidArgument("scale bank: sigmas must be strictly increasing");
  }
}

GaussianSpec ScaleBank::smoothing(double sigma, Padding padding) {
  return {sigma, static_cast<int>(std::ceil(kRadiusInSigmas * sigma)), padding};
}

ScaleBank fine_bank() { return {{1.0, 4.0, 7.0}}; }
ScaleBank coarse_bank() { return {{9.0, 12.0, 15.0}}; }

std::vector<FeatureMap> log_residual_bank(const FeatureMap& x, const ScaleBank& bank, Padding padding) {
  bank.validate();
  std::vector<FeatureMap> out;
  out.reserve(bank.sigmas.size());
  for (double sigma : bank.sigmas) {
    out.push_back(x - gaussian_smooth(x, ScaleBank::smoothing(sigma, padding)));
  }
  return out;
}

Decision decide(const FeatureMap& o_raw) {
  const int k = o_raw.channels() - 1;
  if (k < 1) throw InvalidArgument("adalog: decision map needs at least 2 channels");
  const int h = o_raw.height();
  const int w = o_raw.width();
  Decision d;
  d.blend_weights.assign(k, FeatureMap(1, h, w));
  d.gate = FeatureMap(1, h, w);
  const std::size_t n = o_raw.plane_size();
  std::vector<double> logits(k);
  for (std::size_t p = 0; p < n; ++p) {
    double m = -INFINITY;
    for (int j = 0; j < k; ++j) {
      logits[j] = o_raw.plane(j)[p];
      m = std::max(m, logits[j]);
    }
    double sum = 0.0;
    for (int j = 0; j < k; ++j) {
      logits[j] = std::exp(logits[j] - m);
      sum += logits[j];
    }
    for (int j = 0; j < k; ++j) d.blend_weights[j].data()[p] = logits[j] / sum;
    d.gate.data()[p] = nn::sigmoid(o_raw.plane(k)[p]);
  }
  return d;
}

FeatureMap adalog_fuse(const FeatureMap& x, std::span<const FeatureMap> residuals, const Decision& decision) {
  if (residuals.size() != decision.blend_weights.size()) {
    throw InvalidArgument("adalog_fuse: residual count does not match blend weight count");
  }
  const FeatureMap plane_shape(1, x.height(), x.width());
  require_same_shape(decision.gate, plane_shape, "adalog_fuse gate");
  for (std::size_t k = 0; k < residuals.size(); ++k) {
    require_same_shape(residuals[k], x, "adalog_fuse residual");
    require_same_shape(decision.blend_weights[k], plane_shape, "adalog_fuse blend weight");
  }
  FeatureMap z(x.channels(), x.height(), x.width());
  const std::size_t n = x.plane_size();
  const double* lam = decision.gate.data().data();
  for (int c = 0; c < x.channels(); ++c) {
    const double* xp = x.plane(c).data();
    double* zp = z.plane(c).data();
    for (std::size_t p = 0; p < n; ++p) {
      double comp = 0.0;
      for (std::size_t k = 0; k < residuals.size(); ++k) {
        comp += decision.blend_weights[k].data()[p] * residuals[k].plane(c)[p];
      }
      zp[p] = (1.0 - lam[p]) * xp[p] + lam[p] * comp;
    }
  }
  return z;
}

// ---------------------------------------------------------------- Controller

Controller::Controller(ParameterStore& store, const std::string& name, int channels, int hidden, int scales)
    : scales_(scales),
      stage_a_(store, name + ".conv_a", channels, hidden, 3),
      stage_b_(store, name + ".conv_b", hidden, scales + 1, 1) {}

void Controller::init(Rng& rng) {
  stage_a_.init(rng);
  stage_b_.zero();
}

FeatureMap Controller::forward(const FeatureMap& x) { return stage_b_.forward(act_.forward(stage_a_.forward(x))); }

FeatureMap Controller::backward(const FeatureMap& grad_o_raw) {
  return stage_a_.backward(act_.backward(stage_b_.backward(grad_o_raw)));
}

ControllerOutput controller_forward(const FeatureMap& x, Controller& controller) {
  ControllerOutput out;
  out.o_raw = controller.forward(x);
  out.decision = decide(out.o_raw);
  return out;
}

// ---------------------------------------------------------------- AdaLogBlock

AdaLogBlock::AdaLogBlock(ParameterStore& store, const std::string& name, int channels, ScaleBank bank, int hidden,
                         Padding padding)
    : bank_(std::move(bank)),
      padding_(padding),
      controller_(store, name + ".controller", channels, hidden, static_cast<int>(bank_.sigmas.size())) {
  bank_.validate();
}

FeatureMap AdaLogBlock::forward(const FeatureMap& x) {
  input_ = x;
  auto ctrl = controller_forward(x, controller_);
  o_raw_ = std::move(ctrl.o_raw);
  decision_ = std::move(ctrl.decision);
  residuals_ = log_residual_bank(x, bank_, padding_);
  return adalog_fuse(x, residuals_, decision_);
}

FeatureMap AdaLogBlock::backward(const FeatureMap& grad_out) {
  const int k = bank_.size();
  const int channels = input_.channels();
  const std::size_t n = input_.plane_size();
  const double* lam = decision_.gate.data().data();

  FeatureMap grad_x(channels, input_.height(), input_.width());
  std::vector<FeatureMap> grad_y(k, FeatureMap(channels, input_.height(), input_.width()));
  std::vector<double> grad_lam(n, 0.0);
  std::vector<std::vector<double>> grad_c(k, std::vector<double>(n, 0.0));

  for (int c = 0; c < channels; ++c) {
    const double* g = grad_out.plane(c).data();
    const double* xp = input_.plane(c).data();
    double* gx = grad_x.plane(c).data();
    for (std::size_t p = 0; p < n; ++p) {
      double comp = 0.0;
      for (int j = 0; j < k; ++j) {
        const double yk = residuals_[j].plane(c)[p];
        comp += decision_.blend_weights[j].data()[p] * yk;
        grad_c[j][p] += g[p] * lam[p] * yk;
        grad_y[j].plane(c)[p] = g[p] * lam[p] * decision_.blend_weights[j].data()[p];
      }
      gx[p] += (1.0 - lam[p]) * g[p];
      grad_lam[p] += g[p] * (comp - xp[p]);
    }
  }

  // Residual path: Y_k = x - G_k x.
  for (int j = 0; j < k; ++j) {
    grad_x += grad_y[j];
    axpy(-1.0, gaussian_smooth_adjoint(grad_y[j], ScaleBank::smoothing(bank_.sigmas[j], padding_)), grad_x);
  }

  // Decision path back into o_raw, then through the controller.
  FeatureMap grad_o(k + 1, input_.height(), input_.width());
  for (std::size_t p = 0; p < n; ++p) {
    double inner = 0.0;
    for (int j = 0; j < k; ++j) inner += decision_.blend_weights[j].data()[p] * grad_c[j][p];
    for (int j = 0; j < k; ++j) {
      const double cj = decision_.blend_weights[j].data()[p];
      grad_o.plane(j)[p] = cj * (grad_c[j][p] - inner);
    }
    grad_o.plane(k)[p] = grad_lam[p] * lam[p] * (1.0 - lam[p]);
  }
  grad_x += controller_.backward(grad_o);
  return grad_x;
}

}  // namespace hufor::adalog
