#pragma once

#include <span>
#include <string>
#include <vector>

#include "hufor/feature_map.hpp"
#include "hufor/gaussian.hpp"
#include "hufor/nn.hpp"
#include "hufor/parameter_store.hpp"

namespace hufor::adalog {

/// Strictly increasing, positive smoothing scales (pixels).
struct ScaleBank {
  std::vector<double> sigmas;

  int size() const noexcept { return static_cast<int>(sigmas.size()); }
  void validate() const;

  /// Residual smoothing uses radius ceil(4 sigma) rather than the 3 sigma default.
  static constexpr double kRadiusInSigmas = 4.0;
  static GaussianSpec smoothing(double sigma, Padding padding);
};

ScaleBank fine_bank();    // {1, 4, 7}
ScaleBank coarse_bank();  // {9, 12, 15}

/// Per-pixel control signals, each 1 x H x W and broadcast over feature channels.
struct Decision {
  std::vector<FeatureMap> blend_weights;  // K maps, simplex at every pixel
  FeatureMap gate;                        // values in (0, 1)
};

/// Y_k = x - G_{sigma_k}(x) for every scale in the bank.
std::vector<FeatureMap> log_residual_bank(const FeatureMap& x, const ScaleBank& bank,
                                          Padding padding = Padding::reflect);

/// Softmax over channels [0, K) and sigmoid of channel K of a (K+1)-channel map.
Decision decide(const FeatureMap& o_raw);

/// Z = (1 - gate) x + gate * sum_k c_k Y_k.
FeatureMap adalog_fuse(const FeatureMap& x, std::span<const FeatureMap> residuals, const Decision& decision);

/// The content-aware controller: 3x3 conv -> SiLU -> 1x1 conv to K+1 channels.
class Controller {
 public:
  Controller(ParameterStore& store, const std::string& name, int channels, int hidden, int scales);

  FeatureMap forward(const FeatureMap& x);
  FeatureMap backward(const FeatureMap& grad_o_raw);
  /// Random first stage, zero output stage (uniform blend, gate 0.5).
  void init(Rng& rng);

  int scales() const noexcept { return scales_; }
  nn::Conv2d& output_stage() noexcept { return stage_b_; }

 private:
  int scales_;
  nn::Conv2d stage_a_;
  nn::Silu act_;
  nn::Conv2d stage_b_;
};

struct ControllerOutput {
  FeatureMap o_raw;
  Decision decision;
};

ControllerOutput controller_forward(const FeatureMap& x, Controller& controller);

/// Residual bank, controller, and gated fusion as one differentiable block.
class AdaLogBlock {
 public:
  AdaLogBlock(ParameterStore& store, const std::string& name, int channels, ScaleBank bank, int hidden = 16,
              Padding padding = Padding::reflect);

  FeatureMap forward(const FeatureMap& x);
  FeatureMap backward(const FeatureMap& grad_out);
  void init(Rng& rng) { controller_.init(rng); }

  const ScaleBank& bank() const noexcept { return bank_; }
  Controller& controller() noexcept { return controller_; }
  // Intermediates of the most recent forward pass.
  const std::vector<FeatureMap>& residuals() const noexcept { return residuals_; }
  const Decision& decision() const noexcept { return decision_; }
  const FeatureMap& o_raw() const noexcept { return o_raw_; }

 private:
  ScaleBank bank_;
  Padding padding_;
  Controller controller_;
  FeatureMap input_;
  FeatureMap o_raw_;
  std::vector<FeatureMap> residuals_;
  Decision decision_;
};

}  // namespace hufor::adalog
