#include "hufor/face_moe.hpp"

#include <algorithm>
#include <cmath>

#include "hufor/errors.hpp"
#include "hufor/losses.hpp"

namespace hufor::face {

std::vector<ExpertConfig> default_experts() {
  return {
      {ExpertKind::rgb_conv, 3, {}},
      {ExpertKind::rgb_conv, 9, {}},
      {ExpertKind::adalog, 0, adalog::fine_bank()},
      {ExpertKind::adalog, 0, adalog::coarse_bank()},
  };
}

ConvExpert::ConvExpert(ParameterStore& store, const std::string& name, int channels, int kernel)
    : conv_(store, name + ".conv", channels, channels, kernel) {}

AdaLogExpert::AdaLogExpert(ParameterStore& store, const std::string& name, int channels, adalog::ScaleBank bank,
                           int hidden, Padding padding)
    : block_(store, name + ".adalog", channels, std::move(bank), hidden, padding) {}

std::unique_ptr<Expert> make_expert(ParameterStore& store, const std::string& name, int channels,
                                    const ExpertConfig& config, int controller_hidden, Padding padding) {
  if (config.kind == ExpertKind::rgb_conv) return std::make_unique<ConvExpert>(store, name, channels, config.kernel);
  return std::make_unique<AdaLogExpert>(store, name, channels, config.bank, controller_hidden, padding);
}

// ---------------------------------------------------------------- Gate

Gate::Gate(ParameterStore& store, const std::string& name, int channels, int experts)
    : conv_(store, name + ".conv", channels, experts, 1) {}

GateScores Gate::forward(const FeatureMap& x) {
  height_ = x.height();
  width_ = x.width();
  const auto pooled = nn::global_average_pool(conv_.forward(x));
  pi_ = nn::softmax(pooled);
  return {pi_};
}

FeatureMap Gate::backward(std::span<const double> grad_pi) {
  const auto grad_logits = nn::softmax_backward(pi_, grad_pi);
  return conv_.backward(
      nn::global_average_pool_backward(grad_logits, static_cast<int>(grad_logits.size()), height_, width_));
}

GateScores gate_forward(const FeatureMap& x, Gate& gate) {
  if (x.channels() != gate.conv().in_channels()) {
    throw InvalidArgument("gate_forward: expected " + std::to_string(gate.conv().in_channels()) +
                          " channels, got " + std::to_string(x.channels()));
  }
  return gate.forward(x);
}

FeatureMap combine_experts(std::span<const FeatureMap> outputs, std::span<const double> pi) {
  if (outputs.empty() || outputs.size() != pi.size()) {
    throw InvalidArgument("combine_experts: need one gate score per expert output");
  }
  FeatureMap out(outputs[0].channels(), outputs[0].height(), outputs[0].width());
  for (std::size_t k = 0; k < outputs.size(); ++k) axpy(pi[k], outputs[k], out);
  return out;
}

// ---------------------------------------------------------------- MoeLayer

MoeLayer::MoeLayer(ParameterStore& store, const std::string& name, int channels,
                   const std::vector<ExpertConfig>& experts, int controller_hidden, Padding padding)
    : gate_(store, name + ".gate", channels, static_cast<int>(experts.size())) {
  if (experts.empty()) throw InvalidArgument("moe: at least one expert required");
  for (std::size_t k = 0; k < experts.size(); ++k) {
    experts_.push_back(
        make_expert(store, name + ".expert" + std::to_string(k + 1), channels, experts[k], controller_hidden, padding));
  }
}

void MoeLayer::init(Rng& rng) {
  for (auto& e : experts_) e->init(rng);
  gate_.init(rng);
}

FeatureMap MoeLayer::forward(const FeatureMap& x) {
  outputs_.clear();
  for (auto& e : experts_) {
    outputs_.push_back(e->forward(x));
    require_same_shape(outputs_.back(), x, "moe expert output");
  }
  scores_ = gate_forward(x, gate_);
  return combine_experts(outputs_, scores_.pi);
}

FeatureMap MoeLayer::backward(const FeatureMap& grad_out) {
  std::vector<double> grad_pi(experts_.size());
  FeatureMap grad_x(grad_out.channels(), grad_out.height(), grad_out.width());
  for (std::size_t k = 0; k < experts_.size(); ++k) {
    grad_pi[k] = dot(grad_out, outputs_[k]);
    grad_x += experts_[k]->backward(scores_.pi[k] * grad_out);
  }
  grad_x += gate_.backward(grad_pi);
  return grad_x;
}

// ---------------------------------------------------------------- FaceBranch

std::vector<double> MomentAccumulator::mean() const {
  std::vector<double> m(sum_.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = sum_[i] / count_;
  return m;
}

std::vector<double> MomentAccumulator::stddev(double floor) const {
  std::vector<double> s(sum_.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double m = sum_[i] / count_;
    s[i] = std::sqrt(std::max(0.0, sum_sq_[i] / count_ - m * m) + floor);
  }
  return s;
}

ConvBlock::ConvBlock(ParameterStore& store, const std::string& name, int in_channels, int out_channels)
    : conv_(store, name + ".conv", in_channels, out_channels, 3), norm_(store, name + ".norm", out_channels) {}

FeatureMap ConvBlock::forward(const FeatureMap& x) {
  FeatureMap y = conv_.forward(x);
  if (moments_) {
    for (int c = 0; c < y.channels(); ++c)
      for (double v : y.plane(c)) moments_->add(static_cast<std::size_t>(c), v);
    moments_->count(static_cast<double>(y.plane_size()));
  }
  return act_.forward(norm_.forward(y));
}

void ConvBlock::begin_calibration() {
  moments_ = std::make_unique<MomentAccumulator>(static_cast<std::size_t>(conv_.out_channels()));
}

void ConvBlock::end_calibration() {
  conv_.standardize(moments_->mean(), moments_->stddev());
  moments_.reset();
}

FaceBranch::FaceBranch(ParameterStore& store, FaceConfig config, const std::string& name)
    : config_(std::move(config)),
      block1_(store, name + ".block1", 3, config_.width),
      block2_(store, name + ".block2", config_.width, config_.width),
      block3_(store, name + ".block3", config_.width, config_.width),
      block4_(store, name + ".block4", config_.width, config_.head_width),
      proj_(store, name + ".proj", config_.head_width, config_.feature_dim),
      head_(store, name + ".head", config_.feature_dim, 1) {
  if (config_.moe_layers < 1) throw InvalidArgument("face branch: moe_layers must be >= 1");
  if (config_.input_size < 4) throw InvalidArgument("face branch: input_size must be >= 4");
  for (int i = 0; i < config_.moe_layers; ++i) {
    moe_.push_back(std::make_unique<MoeLayer>(store, name + ".moe" + std::to_string(i + 1), config_.width,
                                              config_.experts, config_.controller_hidden, config_.adalog_padding));
  }
}

void FaceBranch::init(Rng& rng) {
  block1_.init(rng);
  block2_.init(rng);
  block3_.init(rng);
  for (auto& m : moe_) m->init(rng);
  block4_.init(rng);
  proj_.init(rng);
  head_.init(rng);
}

void FaceBranch::calibrate(std::span<const FeatureMap> crops) {
  if (crops.empty()) return;
  for (ConvBlock* block : {&block1_, &block2_, &block3_, &block4_}) {
    block->begin_calibration();
    for (const auto& x : crops) forward(x);
    block->end_calibration();
  }
  MomentAccumulator moments(static_cast<std::size_t>(config_.feature_dim));
  for (const auto& x : crops) {
    forward(x);
    for (std::size_t j = 0; j < proj_pre_.size(); ++j) moments.add(j, proj_pre_[j]);
    moments.count(1.0);
  }
  proj_.standardize(moments.mean(), moments.stddev());
}

FaceOutput FaceBranch::forward(const FeatureMap& face) {
  if (face.channels() != 3) {
    throw InvalidArgument("face_forward: expected a 3-channel image, got " + std::to_string(face.channels()));
  }
  FeatureMap x = pool1_.forward(block2_.forward(block1_.forward(face)));
  x = block3_.forward(x);
  for (auto& m : moe_) x = m->forward(x);
  x = pool2_.forward(block4_.forward(x));
  pooled_c_ = x.channels();
  pooled_h_ = x.height();
  pooled_w_ = x.width();
  proj_pre_ = proj_.forward(nn::global_average_pool(x));
  feature_.resize(proj_pre_.size());
  for (std::size_t i = 0; i < proj_pre_.size(); ++i) feature_[i] = nn::silu(proj_pre_[i]);
  FaceOutput out;
  out.feature = feature_;
  out.logit = head_.forward(feature_)[0];
  out.probability = nn::sigmoid(out.logit);
  return out;
}

FeatureMap FaceBranch::backward(std::span<const double> grad_feature, double grad_logit) {
  const double gl[1] = {grad_logit};
  nn::Vector g = head_.backward(gl);
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!grad_feature.empty()) g[i] += grad_feature[i];
    g[i] *= nn::silu_grad(proj_pre_[i]);
  }
  const nn::Vector g_pooled = proj_.backward(g);
  FeatureMap gx = nn::global_average_pool_backward(g_pooled, pooled_c_, pooled_h_, pooled_w_);
  gx = block4_.backward(pool2_.backward(gx));
  for (auto it = moe_.rbegin(); it != moe_.rend(); ++it) gx = (*it)->backward(gx);
  gx = block3_.backward(gx);
  return block1_.backward(block2_.backward(pool1_.backward(gx)));
}

FaceOutput face_forward(const FeatureMap& face_image, FaceBranch& model) { return model.forward(face_image); }

LossTrace train_face(FaceBranch& model, ParameterStore& store, std::span<const FaceExample> corpus,
                     const StageConfig& config, const std::string& prefix) {
  if (corpus.empty()) throw InvalidArgument("train_face: empty corpus");
  if (config.batch < 1 || config.epochs < 0) throw InvalidArgument("train_face: batch >= 1 and epochs >= 0 required");
  Sgd opt(store, {prefix}, config.learning_rate, config.momentum);
  Rng rng(derive_seed(config.seed, 0, "face-train"));
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const auto calibration = static_cast<std::size_t>(std::max(0, model.config().calibration));
  if (calibration > 0) {
    Rng pick(derive_seed(config.seed, 0, "face-calibrate"));
    auto chosen = order;
    pick.shuffle(chosen.begin(), chosen.end());
    chosen.resize(std::min(calibration, chosen.size()));
    std::vector<FeatureMap> crops;
    for (std::size_t i : chosen) crops.push_back(corpus[i].crop);
    model.calibrate(crops);
  }

  const std::size_t updates = total_steps(config, order.size());
  std::size_t step = 0;
  LossTrace trace;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch));
      opt.zero_grad();
      for (std::size_t i = start; i < end; ++i) {
        const FaceExample& ex = corpus[order[i]];
        const FaceOutput out = model.forward(ex.crop);
        total += bce_loss(out.probability, ex.label);
        model.backward({}, out.probability - ex.label);
      }
      opt.set_learning_rate(scheduled_rate(config, step++, updates));
      opt.step(1.0 / static_cast<double>(end - start));
    }
    const double mean = total / static_cast<double>(order.size());
    if (!std::isfinite(mean)) throw NumericFailure("train_face: loss became non-finite at epoch " + std::to_string(epoch));
    trace.epoch_loss.push_back(mean);
  }
  return trace;
}

}  // namespace hufor::face
