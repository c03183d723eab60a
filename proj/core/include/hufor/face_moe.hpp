#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hufor/adalog.hpp"
#include "hufor/feature_map.hpp"
#include "hufor/nn.hpp"
#include "hufor/optimizer.hpp"
#include "hufor/parameter_store.hpp"

namespace hufor::face {

enum class ExpertKind { rgb_conv, adalog };

struct ExpertConfig {
  ExpertKind kind = ExpertKind::rgb_conv;
  int kernel = 3;           // rgb_conv
  adalog::ScaleBank bank;   // adalog
};

/// 3x3 conv, 9x9 conv, fine adaLoG, coarse adaLoG.
std::vector<ExpertConfig> default_experts();

/// Shape-preserving expert: C x H x W -> C x H x W.
class Expert {
 public:
  virtual ~Expert() = default;
  virtual FeatureMap forward(const FeatureMap& x) = 0;
  virtual FeatureMap backward(const FeatureMap& grad_out) = 0;
  virtual void init(Rng& rng) = 0;
};

class ConvExpert final : public Expert {
 public:
  ConvExpert(ParameterStore& store, const std::string& name, int channels, int kernel);
  FeatureMap forward(const FeatureMap& x) override { return act_.forward(conv_.forward(x)); }
  FeatureMap backward(const FeatureMap& g) override { return conv_.backward(act_.backward(g)); }
  void init(Rng& rng) override { conv_.init(rng); }

 private:
  nn::Conv2d conv_;
  nn::Silu act_;
};

class AdaLogExpert final : public Expert {
 public:
  AdaLogExpert(ParameterStore& store, const std::string& name, int channels, adalog::ScaleBank bank, int hidden,
               Padding padding);
  FeatureMap forward(const FeatureMap& x) override { return block_.forward(x); }
  FeatureMap backward(const FeatureMap& g) override { return block_.backward(g); }
  void init(Rng& rng) override { block_.init(rng); }
  adalog::AdaLogBlock& block() noexcept { return block_; }

 private:
  adalog::AdaLogBlock block_;
};

std::unique_ptr<Expert> make_expert(ParameterStore& store, const std::string& name, int channels,
                                    const ExpertConfig& config, int controller_hidden, Padding padding);

/// Softmax weights over experts; non-negative and summing to one.
struct GateScores {
  std::vector<double> pi;
};

/// 1x1 conv to one logit per expert, global average pool, softmax.
class Gate {
 public:
  Gate(ParameterStore& store, const std::string& name, int channels, int experts);

  GateScores forward(const FeatureMap& x);
  FeatureMap backward(std::span<const double> grad_pi);
  void init(Rng& rng) { conv_.init(rng); }
  nn::Conv2d& conv() noexcept { return conv_; }

 private:
  nn::Conv2d conv_;
  int height_ = 0, width_ = 0;
  std::vector<double> pi_;
};

GateScores gate_forward(const FeatureMap& x, Gate& gate);

/// sum_k pi_k Z_k.
FeatureMap combine_experts(std::span<const FeatureMap> outputs, std::span<const double> pi);

/// Dense soft mixture: every expert is evaluated on every input.
class MoeLayer {
 public:
  MoeLayer(ParameterStore& store, const std::string& name, int channels, const std::vector<ExpertConfig>& experts,
           int controller_hidden = 16, Padding padding = Padding::reflect);

  FeatureMap forward(const FeatureMap& x);
  FeatureMap backward(const FeatureMap& grad_out);
  void init(Rng& rng);

  std::size_t expert_count() const noexcept { return experts_.size(); }
  Expert& expert(std::size_t k) { return *experts_[k]; }
  Gate& gate() noexcept { return gate_; }
  const GateScores& last_scores() const noexcept { return scores_; }
  const std::vector<FeatureMap>& last_outputs() const noexcept { return outputs_; }

 private:
  std::vector<std::unique_ptr<Expert>> experts_;
  Gate gate_;
  GateScores scores_;
  std::vector<FeatureMap> outputs_;
};

struct FaceConfig {
  int input_size = 64;
  int width = 8;         // channels of blocks 1-3 and of the MoE layer
  int head_width = 16;   // channels of block 4
  int feature_dim = 128; // d
  int controller_hidden = 16;
  int moe_layers = 1;
  Padding adalog_padding = Padding::reflect;
  std::vector<ExpertConfig> experts = default_experts();
  /// Crops used by the data-dependent initialization in train_face; 0 disables it.
  int calibration = 64;
};

/// Running mean and variance of a set of vectors (or of feature-map channels).
class MomentAccumulator {
 public:
  explicit MomentAccumulator(std::size_t width = 0) : sum_(width), sum_sq_(width) {}
  void add(std::size_t i, double v) {
    sum_[i] += v;
    sum_sq_[i] += v * v;
  }
  void count(double n) { count_ += n; }
  std::vector<double> mean() const;
  /// sqrt(variance + floor), floored so constant units stay finite.
  std::vector<double> stddev(double floor = 1e-8) const;

 private:
  std::vector<double> sum_, sum_sq_;
  double count_ = 0.0;
};

/// conv -> per-channel affine -> SiLU.
class ConvBlock {
 public:
  ConvBlock(ParameterStore& store, const std::string& name, int in_channels, int out_channels);
  FeatureMap forward(const FeatureMap& x);
  FeatureMap backward(const FeatureMap& g) { return conv_.backward(norm_.backward(act_.backward(g))); }
  void init(Rng& rng) {
    conv_.init(rng);
    norm_.init();
  }

  /// Between begin and end, forward passes accumulate per-channel conv output
  /// moments; end rescales the conv so those outputs are standardized.
  void begin_calibration();
  void end_calibration();

 private:
  nn::Conv2d conv_;
  nn::ChannelAffine norm_;
  nn::Silu act_;
  std::unique_ptr<MomentAccumulator> moments_;
};

struct FaceOutput {
  nn::Vector feature;  // f_face
  double logit = 0.0;
  double probability = 0.5;
};

/// Four conv blocks (2x downsampling after blocks 2 and 4) with the MoE layer
/// after block 3, global average pooling, a projection to f_face, and a
/// single-logit classification head.
class FaceBranch {
 public:
  FaceBranch(ParameterStore& store, FaceConfig config, const std::string& name = "face");

  FaceOutput forward(const FeatureMap& face);
  /// Backpropagates gradients w.r.t. f_face and the head logit.
  FeatureMap backward(std::span<const double> grad_feature, double grad_logit);
  void init(Rng& rng);
  void zero_head() { head_.zero(); }
  /// Data-dependent initialization: rescales each conv block and the
  /// projection, in forward order, so their outputs have zero mean and unit
  /// variance over the given crops. Experts, gate and head are untouched.
  void calibrate(std::span<const FeatureMap> crops);

  const FaceConfig& config() const noexcept { return config_; }
  MoeLayer& moe(std::size_t i = 0) { return *moe_[i]; }
  std::size_t moe_count() const noexcept { return moe_.size(); }

 private:
  FaceConfig config_;
  ConvBlock block1_, block2_, block3_, block4_;
  std::vector<std::unique_ptr<MoeLayer>> moe_;
  nn::AvgPool2 pool1_, pool2_;
  nn::Linear proj_;
  nn::Linear head_;
  int pooled_c_ = 0, pooled_h_ = 0, pooled_w_ = 0;
  nn::Vector proj_pre_;
  nn::Vector feature_;
};

FaceOutput face_forward(const FeatureMap& face_image, FaceBranch& model);

struct FaceExample {
  FeatureMap crop;
  int label = 0;
};

/// Stage-two training: calibrates the branch on up to config().calibration
/// training crops, then minimizes BCE of the face head over labeled crops,
/// updating only entries under the branch prefix.
LossTrace train_face(FaceBranch& model, ParameterStore& store, std::span<const FaceExample> corpus,
                     const StageConfig& config, const std::string& prefix = "face.");

}  // namespace hufor::face
