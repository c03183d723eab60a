#include <cmath>

#include "hufor/adalog.hpp"
#include "hufor/errors.hpp"
#include "hufor/losses.hpp"
#include "hufor/pipeline.hpp"
#include "hufor/rng.hpp"

namespace hufor::pipeline {

namespace {

constexpr double kFdStep = 1e-3;

/// Replaces every value with U(-scale, scale) so zero-initialized output
/// layers also carry gradient signal.
void randomize(ParameterStore& store, Rng& rng, double scale) {
  for (const auto& name : store.names()) {
    for (double& v : store.at(name).value) v = rng.uniform(-scale, scale);
  }
}

FeatureMap random_map(Rng& rng, int c, int h, int w) {
  FeatureMap x(c, h, w);
  for (double& v : x.data()) v = rng.normal();
  return x;
}

nn::Vector random_vector(Rng& rng, int n) {
  nn::Vector v(static_cast<std::size_t>(n));
  for (double& e : v) e = rng.normal();
  return v;
}

void corrupt(ParameterStore& store, const std::string& pattern) {
  if (pattern.empty()) return;
  for (const auto& name : store.names()) {
    if (name.find(pattern) == std::string::npos) continue;
    for (double& g : store.at(name).grad) g = 1.5 * g + 1e-3;
  }
}

GradcheckReport check(ParameterStore& store, const std::function<double()>& loss, const GradcheckOptions& options,
                      const std::string& prefix = {}) {
  FdOptions fd;
  fd.eps = kFdStep;
  fd.seed = options.seed;
  fd.prefix = prefix;
  fd.richardson = true;
  const auto estimates = finite_diff_grad([&](const ParameterStore&) { return loss(); }, store, fd);
  return compare_gradients(store, estimates);
}

GradcheckReport only(const GradcheckReport& report, std::string_view prefix) {
  GradcheckReport out;
  for (const auto& g : report.groups) {
    if (g.name.starts_with(prefix)) out.groups.push_back(g);
  }
  return out;
}

std::vector<GradcheckModule> check_adalog(const GradcheckOptions& options) {
  ParameterStore store;
  adalog::AdaLogBlock block(store, "adalog", 3, adalog::fine_bank(), 16, Padding::reflect);
  Rng rng(derive_seed(options.seed, 0, "gradcheck-adalog"));
  randomize(store, rng, 0.3);
  const FeatureMap x = random_map(rng, 3, 16, 16);
  const FeatureMap w = random_map(rng, 3, 16, 16);
  auto loss = [&] { return dot(block.forward(x), w); };
  store.zero_grad();
  block.forward(x);
  block.backward(w);
  corrupt(store, options.corrupt);
  return {{"adalog", check(store, loss, options)}};
}

std::vector<GradcheckModule> check_moe(const GradcheckOptions& options) {
  ParameterStore store;
  face::MoeLayer moe(store, "moe", 2, face::default_experts(), 8, Padding::reflect);
  Rng rng(derive_seed(options.seed, 0, "gradcheck-moe"));
  randomize(store, rng, 0.3);
  const FeatureMap x = random_map(rng, 2, 12, 12);
  const FeatureMap w = random_map(rng, 2, 12, 12);
  auto loss = [&] { return dot(moe.forward(x), w); };
  store.zero_grad();
  moe.forward(x);
  moe.backward(w);
  corrupt(store, options.corrupt);
  return {{"moe", check(store, loss, options)}};
}

ctx::HeadsConfig small_heads() {
  ctx::HeadsConfig c;
  c.embed_dim = 6;
  c.global_dim = 6;
  c.feature_dim = 8;
  c.hidden = 8;
  return c;
}

ctx::Matrix random_tokens(Rng& rng, int rows, int cols) {
  ctx::Matrix m(rows, cols);
  for (double& v : m.data) v = rng.normal();
  return m;
}

std::vector<GradcheckModule> check_ctx_heads(const GradcheckOptions& options) {
  ParameterStore store;
  ctx::CtxHeads heads(store, small_heads());
  Rng rng(derive_seed(options.seed, 0, "gradcheck-ctx-heads"));
  randomize(store, rng, 0.5);
  const ctx::Matrix tokens = random_tokens(rng, 5, 6);
  const nn::Vector w = random_vector(rng, 8);
  const nn::Vector h_s = random_vector(rng, 6);
  const nn::Vector f_clip = random_vector(rng, 6);

  auto proj_loss = [&] {
    const nn::Vector f = heads.project(tokens);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += w[i] * f[i];
    return s;
  };
  auto conf_loss = [&] { return -std::log(heads.confidence(h_s, f_clip)); };

  store.zero_grad();
  heads.project(tokens);
  heads.backward_project(w);
  const double c = heads.confidence(h_s, f_clip);
  heads.backward_confidence(-1.0 / c);
  corrupt(store, options.corrupt);
  return {{"ctx_proj", check(store, proj_loss, options, "ctx_proj.")},
          {"ctx_conf", check(store, conf_loss, options, "ctx_conf.")}};
}

std::vector<GradcheckModule> check_fusion(const GradcheckOptions& options) {
  ParameterStore store;
  ctx::CtxHeads heads(store, small_heads());
  fusion::FusionModel model(store, {8, 8, options.mode});
  Rng rng(derive_seed(options.seed, 0, "gradcheck-fusion"));
  randomize(store, rng, 0.5);
  const ctx::Matrix tokens = random_tokens(rng, 5, 6);
  const nn::Vector face = random_vector(rng, 8);
  const nn::Vector h_s = random_vector(rng, 6);
  const nn::Vector f_clip = random_vector(rng, 6);
  const int target = 1;

  auto loss = [&] {
    const double c = heads.confidence(h_s, f_clip);
    return bce_loss(model.forward(face, heads.project(tokens), c), target);
  };
  store.zero_grad();
  const double c = heads.confidence(h_s, f_clip);
  const double y = model.forward(face, heads.project(tokens), c);
  const fusion::FusionGrad g = model.backward(y - target);
  heads.backward_project(g.ctx);
  heads.backward_confidence(g.confidence);
  corrupt(store, options.corrupt);
  // Head entries are probed too: their gradients arrive through f_ctx and c.
  const GradcheckReport all = check(store, loss, options);
  return {{"fusion", only(all, "fusion.")}, {"fusion_upstream", only(all, "ctx_")}};
}

}  // namespace

std::vector<std::string> gradcheck_targets() { return {"adalog", "moe", "ctx_heads", "fusion"}; }

std::vector<GradcheckModule> run_gradcheck(std::string_view target, const GradcheckOptions& options) {
  if (target == "adalog") return check_adalog(options);
  if (target == "moe") return check_moe(options);
  if (target == "ctx_heads") return check_ctx_heads(options);
  if (target == "fusion") return check_fusion(options);
  throw InvalidArgument("unknown gradcheck target '" + std::string(target) +
                        "' (expected adalog, moe, ctx_heads or fusion)");
}

}  // namespace hufor::pipeline
