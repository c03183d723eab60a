#pragma once

#include <span>
#include <string_view>

#include "hufor/ctx_branch.hpp"
#include "hufor/nn.hpp"
#include "hufor/parameter_store.hpp"

namespace hufor::fusion {

/// Which branch the confidence scales.
///   weight_face: head([f_ctx ; c * f_face])   (default)
///   weight_ctx:  head([c * f_ctx ; f_face])
enum class Mode { weight_face, weight_ctx };

Mode parse_mode(std::string_view name);
std::string_view to_string(Mode mode);

struct FusionConfig {
  int feature_dim = 128;  // d, shared by f_face and f_ctx
  int hidden = 64;
  Mode mode = Mode::weight_face;
};

struct FusionGrad {
  nn::Vector face;
  nn::Vector ctx;
  double confidence = 0.0;
};

/// Two-layer perceptron over the confidence-weighted concatenation, parameters
/// under "fusion.".
class FusionModel {
 public:
  FusionModel(ParameterStore& store, FusionConfig config);

  /// Returns y_final in (0, 1). Throws InvalidArgument on dimension mismatch
  /// or c outside [0, 1].
  double forward(std::span<const double> face_feature, std::span<const double> ctx_feature, double c);
  /// Backward from d loss / d logit.
  FusionGrad backward(double grad_logit);
  double last_logit() const noexcept { return logit_; }

  void init(Rng& rng) { head_.init(rng); }
  void zero() { head_.zero_output(); }
  const FusionConfig& config() const noexcept { return config_; }

 private:
  FusionConfig config_;
  nn::Mlp2 head_;
  nn::Vector face_, ctx_;
  double c_ = 0.0;
  double logit_ = 0.0;
};

double fuse(std::span<const double> face_feature, std::span<const double> ctx_feature, double c, FusionModel& model);

struct FusionExample {
  nn::Vector face_feature;
  ctx::ContextOutput context;
  int label = 0;
};

/// Stage-three training: minimizes BCE of y_final jointly over the fusion head
/// and the ctx projection and confidence heads ("fusion.", "ctx_proj.",
/// "ctx_conf."). Face and context features are inputs, so the branches that
/// produced them cannot change.
LossTrace train_fusion(FusionModel& model, ctx::CtxHeads& heads, ParameterStore& store,
                            std::span<const FusionExample> corpus, const StageConfig& config);

}  // namespace hufor::fusion
