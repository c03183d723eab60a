#include "hufor/fusion.hpp"

#include <cmath>
#include <string>

#include "hufor/errors.hpp"
#include "hufor/losses.hpp"
#include "hufor/optimizer.hpp"
#include "hufor/rng.hpp"

namespace hufor::fusion {

Mode parse_mode(std::string_view name) {
  if (name == "weight_face") return Mode::weight_face;
  if (name == "weight_ctx") return Mode::weight_ctx;
  throw InvalidArgument("unknown fusion mode '" + std::string(name) + "'");
}

std::string_view to_string(Mode mode) { return mode == Mode::weight_face ? "weight_face" : "weight_ctx"; }

FusionModel::FusionModel(ParameterStore& store, FusionConfig config)
    : config_(config), head_(store, "fusion.mlp", 2 * config.feature_dim, config.hidden, 1) {}

double FusionModel::forward(std::span<const double> face_feature, std::span<const double> ctx_feature, double c) {
  const auto d = static_cast<std::size_t>(config_.feature_dim);
  if (face_feature.size() != d || ctx_feature.size() != d) {
    throw InvalidArgument("fuse: expected features of width " + std::to_string(d) + ", got " +
                          std::to_string(face_feature.size()) + " and " + std::to_string(ctx_feature.size()));
  }
  if (!(c >= 0.0 && c <= 1.0)) throw InvalidArgument("fuse: confidence must lie in [0, 1], got " + std::to_string(c));
  face_.assign(face_feature.begin(), face_feature.end());
  ctx_.assign(ctx_feature.begin(), ctx_feature.end());
  c_ = c;
  const double face_scale = config_.mode == Mode::weight_face ? c : 1.0;
  const double ctx_scale = config_.mode == Mode::weight_ctx ? c : 1.0;
  nn::Vector joint(2 * d);
  for (std::size_t i = 0; i < d; ++i) {
    joint[i] = ctx_scale * ctx_feature[i];
    joint[d + i] = face_scale * face_feature[i];
  }
  logit_ = head_.forward(joint)[0];
  return nn::sigmoid(logit_);
}

FusionGrad FusionModel::backward(double grad_logit) {
  const double g[1] = {grad_logit};
  const nn::Vector gj = head_.backward(g);
  const std::size_t d = face_.size();
  const double face_scale = config_.mode == Mode::weight_face ? c_ : 1.0;
  const double ctx_scale = config_.mode == Mode::weight_ctx ? c_ : 1.0;
  FusionGrad out;
  out.ctx.resize(d);
  out.face.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    out.ctx[i] = ctx_scale * gj[i];
    out.face[i] = face_scale * gj[d + i];
    out.confidence += config_.mode == Mode::weight_face ? gj[d + i] * face_[i] : gj[i] * ctx_[i];
  }
  return out;
}

double fuse(std::span<const double> face_feature, std::span<const double> ctx_feature, double c, FusionModel& model) {
  return model.forward(face_feature, ctx_feature, c);
}

LossTrace train_fusion(FusionModel& model, ctx::CtxHeads& heads, ParameterStore& store,
                            std::span<const FusionExample> corpus, const StageConfig& config) {
  if (corpus.empty()) throw InvalidArgument("train_fusion: empty corpus");
  if (config.batch < 1 || config.epochs < 0) throw InvalidArgument("train_fusion: batch >= 1 and epochs >= 0 required");
  Sgd opt(store, {"fusion.", "ctx_proj.", "ctx_conf."}, config.learning_rate, config.momentum);
  Rng rng(derive_seed(config.seed, 0, "fusion-train"));
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

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
        const FusionExample& ex = corpus[order[i]];
        const nn::Vector f_ctx = heads.project(ex.context.tokens);
        const double c = heads.confidence(ex.context.sentinel, ex.context.global_visual);
        const double y = model.forward(ex.face_feature, f_ctx, c);
        total += bce_loss(y, ex.label);
        const FusionGrad g = model.backward(y - ex.label);
        heads.backward_project(g.ctx);
        heads.backward_confidence(g.confidence);
      }
      opt.set_learning_rate(scheduled_rate(config, step++, updates));
      opt.step(1.0 / static_cast<double>(end - start));
    }
    const double mean = total / static_cast<double>(order.size());
    if (!std::isfinite(mean)) throw NumericFailure("train_fusion: loss became non-finite at epoch " + std::to_string(epoch));
    trace.epoch_loss.push_back(mean);
  }
  return trace;
}

}  // namespace hufor::fusion
