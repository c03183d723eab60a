#include <doctest.h>

#include "hufor/errors.hpp"
#include "hufor/fusion.hpp"
#include "hufor/pipeline.hpp"
#include "support.hpp"

using namespace hufor;
using namespace hufor::fusion;

namespace {

constexpr int kDim = 6;

nn::Vector random_vector(Rng& rng, int n = kDim) {
  nn::Vector v(static_cast<std::size_t>(n));
  for (double& e : v) e = rng.normal();
  return v;
}

FusionConfig config(Mode mode) { return {kDim, 5, mode}; }

ctx::ContextOutput random_context(Rng& rng) {
  ctx::ContextOutput out;
  out.tokens = ctx::Matrix(3, 4);
  for (double& v : out.tokens.data) v = rng.normal();
  out.sentinel = random_vector(rng, 4);
  out.global_visual = random_vector(rng, 3);
  return out;
}

}  // namespace

TEST_CASE("mode names") {
  CHECK(parse_mode("weight_face") == Mode::weight_face);
  CHECK(parse_mode("weight_ctx") == Mode::weight_ctx);
  CHECK(to_string(Mode::weight_ctx) == "weight_ctx");
  CHECK_THROWS_AS(parse_mode("both"), InvalidArgument);
}

TEST_CASE("zero confidence removes the weighted slot exactly") {
  Rng rng(1);
  for (Mode mode : {Mode::weight_face, Mode::weight_ctx}) {
    ParameterStore store;
    FusionModel model(store, config(mode));
    test::randomize(store, rng, 0.8);
    const auto fixed = random_vector(rng);
    for (int trial = 0; trial < 10; ++trial) {
      const auto a = random_vector(rng), b = random_vector(rng);
      if (mode == Mode::weight_face) {
        CHECK(fuse(a, fixed, 0.0, model) == fuse(b, fixed, 0.0, model));
      } else {
        CHECK(fuse(fixed, a, 0.0, model) == fuse(fixed, b, 0.0, model));
      }
    }
  }
}

TEST_CASE("unit confidence equals the plain concatenation head") {
  Rng rng(2);
  for (Mode mode : {Mode::weight_face, Mode::weight_ctx}) {
    ParameterStore store;
    FusionModel model(store, config(mode));
    test::randomize(store, rng, 0.8);
    ParameterStore mirror = store;
    nn::Mlp2 head(mirror, "fusion.mlp", 2 * kDim, 5, 1);
    const auto face = random_vector(rng), ctx = random_vector(rng);
    nn::Vector joint(ctx);
    joint.insert(joint.end(), face.begin(), face.end());
    CHECK(fuse(face, ctx, 1.0, model) == nn::sigmoid(head.forward(joint)[0]));
  }
}

TEST_CASE("zero head scores one half and the output stays in (0, 1)") {
  ParameterStore store;
  FusionModel model(store, config(Mode::weight_face));
  Rng rng(3);
  model.init(rng);
  model.zero();
  for (int trial = 0; trial < 5; ++trial) CHECK(fuse(random_vector(rng), random_vector(rng), rng.uniform(), model) == 0.5);
  test::randomize(store, rng, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const double y = fuse(random_vector(rng), random_vector(rng), rng.uniform(), model);
    CHECK(y > 0.0);
    CHECK(y < 1.0);
  }
}

TEST_CASE("fuse validates dimensions and confidence") {
  ParameterStore store;
  FusionModel model(store, config(Mode::weight_face));
  Rng rng(4);
  const auto v = random_vector(rng);
  CHECK_THROWS_AS(fuse(random_vector(rng, kDim + 1), v, 0.5, model), InvalidArgument);
  CHECK_THROWS_AS(fuse(v, random_vector(rng, kDim - 1), 0.5, model), InvalidArgument);
  CHECK_THROWS_AS(fuse(v, v, -0.01, model), InvalidArgument);
  CHECK_THROWS_AS(fuse(v, v, 1.5, model), InvalidArgument);
  CHECK_THROWS_AS(fuse(v, v, std::nan(""), model), InvalidArgument);
}

TEST_CASE("fusion gradients including the path through c") {
  for (Mode mode : {Mode::weight_face, Mode::weight_ctx}) {
    pipeline::GradcheckOptions opt;
    opt.mode = mode;
    for (const auto& m : pipeline::run_gradcheck("fusion", opt)) {
      INFO(m.name << " " << to_string(mode));
      CHECK(m.report.probes() >= 64);
      CHECK(m.report.passed(pipeline::kGradcheckTolerance));
    }
  }
}

TEST_CASE("stage-three training") {
  ParameterStore store;
  ctx::HeadsConfig hc;
  hc.embed_dim = 4;
  hc.global_dim = 3;
  hc.feature_dim = kDim;
  hc.hidden = 5;
  ctx::CtxHeads heads(store, hc);
  FusionModel model(store, config(Mode::weight_face));
  auto& frozen = store.add("face.block1.conv.weight", {8});
  Rng rng(5);
  for (double& v : frozen.value) v = rng.normal();
  heads.init(rng);
  model.init(rng);

  std::vector<FusionExample> corpus;
  for (int i = 0; i < 12; ++i) corpus.push_back({random_vector(rng), random_context(rng), i % 2});
  StageConfig stage;
  stage.epochs = 2;
  stage.batch = 4;

  SUBCASE("zero learning rate leaves every parameter unchanged") {
    const ParameterStore before = store;
    auto still = stage;
    still.learning_rate = 0.0;
    train_fusion(model, heads, store, corpus, still);
    for (const auto& name : store.names()) CHECK(store.at(name).value == before.at(name).value);
  }
  SUBCASE("frozen branches keep their bytes while the heads move") {
    const auto face_hash = store.fingerprint("face.");
    const auto head_hash = store.fingerprint("fusion.");
    const auto conf_hash = store.fingerprint("ctx_conf.");
    const auto trace = train_fusion(model, heads, store, corpus, stage);
    CHECK(trace.epoch_loss.size() == 2);
    CHECK(store.fingerprint("face.") == face_hash);
    CHECK(store.fingerprint("fusion.") != head_hash);
    CHECK(store.fingerprint("ctx_conf.") != conf_hash);
  }
  SUBCASE("empty corpus is rejected") {
    CHECK_THROWS_AS(train_fusion(model, heads, store, std::span<const FusionExample>{}, stage), InvalidArgument);
  }
}
