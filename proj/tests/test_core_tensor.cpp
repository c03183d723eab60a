#include <doctest.h>

#include <cmath>
#include <numbers>
#include <string>

#include "hufor/checkpoint.hpp"
#include "hufor/datasynth.hpp"
#include "hufor/errors.hpp"
#include "hufor/face_moe.hpp"
#include "hufor/gaussian.hpp"
#include "hufor/gradcheck.hpp"
#include "support.hpp"

using namespace hufor;

namespace {

GaussianSpec circular(double sigma, int radius = 0) { return {sigma, radius, Padding::circular}; }

std::string replace_once(std::string s, const std::string& from, const std::string& to) {
  const auto at = s.find(from);
  REQUIRE(at != std::string::npos);
  return s.replace(at, from.size(), to);
}

std::string error_of(const std::string& bytes) {
  try {
    deserialize_checkpoint(bytes);
  } catch (const CheckpointFormatError& e) {
    return e.what();
  }
  return {};
}

std::uint64_t read_u64(const std::string& bytes) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes[static_cast<std::size_t>(i)]);
  return v;
}

std::string with_header(const std::string& bytes, const std::string& header) {
  const std::uint64_t old_len = read_u64(bytes);
  std::string out(8, '\0');
  std::uint64_t len = header.size();
  for (int i = 0; i < 8; ++i) out[static_cast<std::size_t>(i)] = static_cast<char>((len >> (8 * i)) & 0xff);
  return out + header + bytes.substr(8 + old_len);
}

}  // namespace

TEST_CASE("gaussian kernel is symmetric, positive and normalized") {
  for (double sigma : {0.3, 0.5, 1.0, 2.0, 4.0, 7.0, 15.0}) {
    for (int radius : {0, 1, 5}) {
      const auto k = gaussian_kernel({sigma, radius, Padding::reflect});
      double sum = 0.0;
      for (std::size_t i = 0; i < k.size(); ++i) {
        CHECK(k[i] > 0.0);
        CHECK(k[i] == k[k.size() - 1 - i]);
        sum += k[i];
      }
      CHECK(std::abs(sum - 1.0) <= 1e-12);
    }
  }
  CHECK(GaussianSpec{2.0}.effective_radius() == 6);
  CHECK(GaussianSpec{1.2}.effective_radius() == 4);
}

TEST_CASE("gaussian spec rejects bad sigma and radius") {
  FeatureMap x(1, 4, 4);
  CHECK_THROWS_AS(gaussian_smooth(x, {0.0}), InvalidArgument);
  CHECK_THROWS_AS(gaussian_smooth(x, {-1.0}), InvalidArgument);
  CHECK_THROWS_AS(gaussian_smooth(x, {1.0, -2}), InvalidArgument);
  CHECK_THROWS_AS(parse_padding("mirror"), InvalidArgument);
}

TEST_CASE("constant map is a fixed point") {
  const FeatureMap x(2, 12, 12, 5.0);
  for (double sigma : {0.5, 1.0, 3.0}) {
    const auto y = gaussian_smooth(x, circular(sigma));
    CHECK(test::max_abs_diff(x, y) <= 1e-12);
  }
}

TEST_CASE("impulse response at the center matches the squared 1-D center weight") {
  FeatureMap x(1, 9, 9);
  x(0, 4, 4) = 1.0;
  const auto y = gaussian_smooth(x, {1.0, 3, Padding::reflect});
  // Hand-evaluated kernel: weights 1, .6065, .1353, .0111 on each side.
  const double center = 1.0 / (1.0 + 2.0 * (0.6065 + 0.1353 + 0.0111));
  CHECK(std::abs(y(0, 4, 4) - 0.1592) <= 1e-3);
  CHECK(std::abs(y(0, 4, 4) - center * center) <= 1e-3);
}

TEST_CASE("sinusoid attenuation matches the continuous transfer function") {
  const auto x = test::sinusoid(1, 64, 16.0);
  const auto y = gaussian_smooth(x, circular(2.0));
  const double ratio = test::amplitude_ratio(y, x);
  CHECK(std::abs(ratio / 0.7346 - 1.0) <= 0.02);
}

TEST_CASE("circular smoothing conserves mass per channel") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto x = test::random_map(rng, 3, 17, 23);
    const auto y = gaussian_smooth(x, circular(rng.uniform(0.5, 6.0)));
    for (int c = 0; c < 3; ++c) {
      CHECK(std::abs(channel_sum(y, c) - channel_sum(x, c)) <= 1e-9 * l1_norm(x, c));
    }
  }
}

TEST_CASE("smoothing is linear") {
  Rng rng(12);
  const auto x = test::random_map(rng, 2, 16, 16);
  const auto z = test::random_map(rng, 2, 16, 16);
  for (Padding p : {Padding::reflect, Padding::circular, Padding::replicate}) {
    const GaussianSpec spec{1.7, 0, p};
    const auto lhs = gaussian_smooth(2.5 * x + (-0.75) * z, spec);
    const auto rhs = 2.5 * gaussian_smooth(x, spec) + (-0.75) * gaussian_smooth(z, spec);
    CHECK(test::max_abs_diff(lhs, rhs) <= 1e-9);
  }
}

TEST_CASE("circular smoothing commutes with circular shifts exactly") {
  Rng rng(13);
  const auto x = test::random_map(rng, 2, 16, 20);
  const auto spec = circular(2.0);
  for (auto [dy, dx] : {std::pair{1, 0}, {0, 3}, {-5, 7}, {16, 20}}) {
    CHECK(gaussian_smooth(circular_shift(x, dy, dx), spec) == circular_shift(gaussian_smooth(x, spec), dy, dx));
  }
}

TEST_CASE("padding policies map indices as documented") {
  CHECK(pad_index(-1, 5, Padding::reflect) == 1);
  CHECK(pad_index(5, 5, Padding::reflect) == 3);
  CHECK(pad_index(-1, 5, Padding::circular) == 4);
  CHECK(pad_index(6, 5, Padding::circular) == 1);
  CHECK(pad_index(-3, 5, Padding::replicate) == 0);
  CHECK(pad_index(9, 5, Padding::replicate) == 4);
  CHECK(pad_index(-13, 5, Padding::reflect) >= 0);
  CHECK(pad_index(-13, 5, Padding::reflect) < 5);
}

TEST_CASE("finite differences of an analytic polynomial") {
  ParameterStore store;
  store.add("theta", {1}).value[0] = 3.0;
  const auto est = finite_diff_grad([](const ParameterStore& s) { return s.at("theta").value[0] * s.at("theta").value[0]; },
                                    store);
  REQUIRE(est.size() == 1);
  CHECK(std::abs(est[0].value - 6.0) <= 1e-6);
  CHECK(store.at("theta").value[0] == 3.0);
}

TEST_CASE("richardson extrapolation cancels the eps^2 term") {
  ParameterStore store;
  store.add("theta", {1}).value[0] = 1.0;
  auto loss = [](const ParameterStore& s) { return std::pow(s.at("theta").value[0], 5.0); };
  FdOptions opt;
  opt.eps = 0.1;
  // x^5 at 1: central gives 5 + 10 h^2 + h^4, the extrapolation 5 - 4 h^4.
  CHECK(std::abs(finite_diff_grad(loss, store, opt)[0].value - 5.1001) <= 1e-12);
  opt.richardson = true;
  CHECK(std::abs(finite_diff_grad(loss, store, opt)[0].value - 4.9996) <= 1e-12);
  CHECK(store.at("theta").value[0] == 1.0);
}

TEST_CASE("finite differences of a constant are zero") {
  ParameterStore store;
  store.add("a", {2, 3});
  store.add("b", {4});
  const auto est = finite_diff_grad([](const ParameterStore&) { return 1.25; }, store);
  CHECK(est.size() == 10);
  for (const auto& e : est) CHECK(e.value == 0.0);
}

TEST_CASE("finite differences surface the entry behind a non-finite loss") {
  ParameterStore store;
  store.add("ok", {1});
  store.add("bad", {1});
  auto loss = [](const ParameterStore& s) { return s.at("bad").value[0] != 0.0 ? std::log(-1.0) : 0.0; };
  try {
    finite_diff_grad(loss, store);
    FAIL("expected NumericFailure");
  } catch (const NumericFailure& e) {
    CHECK(std::string(e.what()).find("bad") != std::string::npos);
  }
}

TEST_CASE("sum of squared smoothing output: adjoint matches finite differences") {
  Rng rng(14);
  for (Padding p : {Padding::reflect, Padding::circular, Padding::replicate}) {
    ParameterStore store;
    auto& x = store.add("x", {2, 9, 9});
    for (double& v : x.value) v = rng.normal();
    const GaussianSpec spec{1.3, 0, p};
    auto as_map = [](const ParameterStore& s) { return FeatureMap(2, 9, 9, s.at("x").value); };
    auto loss = [&](const ParameterStore& s) {
      const auto y = gaussian_smooth(as_map(s), spec);
      return dot(y, y);
    };
    const auto y = gaussian_smooth(as_map(store), spec);
    const auto g = gaussian_smooth_adjoint(2.0 * y, spec);
    std::copy(g.data().begin(), g.data().end(), x.grad.begin());
    const auto report = compare_gradients(store, finite_diff_grad(loss, store));
    CHECK(report.probes() == 162);
    CHECK(report.worst() <= 1e-4);
  }
}

TEST_CASE("subsampled probes are seed-controlled") {
  ParameterStore store;
  store.add("w", {500});
  FdOptions opt;
  opt.per_entry = 64;
  opt.seed = 3;
  auto loss = [](const ParameterStore& s) {
    double acc = 0.0;
    for (double v : s.at("w").value) acc += v * v;
    return acc;
  };
  const auto a = finite_diff_grad(loss, store, opt);
  const auto b = finite_diff_grad(loss, store, opt);
  REQUIRE(a.size() == 64);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].index == b[i].index);
}

TEST_CASE("parameter store invariants") {
  ParameterStore store;
  auto& p = store.add("layer.w", {3, 4});
  CHECK(p.value.size() == 12);
  CHECK(p.grad.size() == 12);
  CHECK_THROWS_AS(store.add("layer.w", {1}), InvalidArgument);
  CHECK_THROWS_AS(store.bind("layer.w", {4, 3}), InvalidArgument);
  CHECK(&store.bind("layer.w", {3, 4}) == &p);
  CHECK_THROWS_AS(store.at("missing"), LookupError);
  store.add("other.b", {2});
  CHECK(store.slice("layer.").size() == 1);
  const auto before = store.fingerprint("other.");
  p.value[0] = 1.0;
  CHECK(store.fingerprint("other.") == before);
  CHECK(store.fingerprint("layer.") != store.slice("none").fingerprint());
}

TEST_CASE("checkpoint round trips") {
  SUBCASE("empty store") {
    ParameterStore store;
    const auto back = deserialize_checkpoint(serialize_checkpoint(store));
    CHECK(back.params.size() == 0);
    CHECK(back.params == store);
  }
  SUBCASE("one 2x3 array of zeros") {
    ParameterStore store;
    store.add("zeros", {2, 3});
    const auto bytes = serialize_checkpoint(store);
    const auto back = deserialize_checkpoint(bytes);
    CHECK(back.params == store);
    CHECK(serialize_checkpoint(back.params) == bytes);
  }
  SUBCASE("values needing double precision stay bit-exact") {
    ParameterStore store;
    auto& p = store.add("w", {5});
    p.value = {0.1, -1.0 / 3.0, 1e-300, 0.5, -0.0};
    store.set_step(42);
    const auto back = deserialize_checkpoint(serialize_checkpoint(store, {{"note", "x"}}));
    CHECK(back.params == store);
    CHECK(std::signbit(back.params.at("w").value[4]));
    CHECK(back.meta["note"] == "x");
  }
  SUBCASE("after one training step on synthetic crops") {
    data::CorpusSpec spec;
    spec.seed = 5;
    std::vector<face::FaceExample> corpus;
    const data::Source sources[] = {data::Source::real, data::Source::blend_partial, data::Source::smooth_full,
                                    data::Source::real};
    for (std::size_t i = 0; i < 4; ++i) {
      const auto r = data::render_sample(spec, i, sources[i]);
      data::Sample s;
      s.width = s.height = spec.image_size;
      s.face_box = r.face_box;
      const auto crops = data::crop_faces(r.image, s, data::ManifestBoxProvider{}, 16);
      corpus.push_back({crops.crops.at(0).image, data::label_of(sources[i])});
    }
    ParameterStore store;
    face::FaceConfig cfg;
    cfg.input_size = 16;
    cfg.width = 4;
    cfg.head_width = 4;
    cfg.feature_dim = 8;
    cfg.controller_hidden = 4;
    face::FaceBranch branch(store, cfg);
    Rng rng(1);
    branch.init(rng);
    StageConfig stage;
    stage.epochs = 1;
    stage.batch = 4;
    face::train_face(branch, store, corpus, stage);
    CHECK(store.step() == 1);
    const auto bytes = serialize_checkpoint(store);
    const auto back = deserialize_checkpoint(bytes);
    CHECK(back.params == store);
    CHECK(serialize_checkpoint(back.params) == bytes);
  }
}

TEST_CASE("checkpoint format errors name the field") {
  ParameterStore store;
  store.add("w", {2, 3}).value = {1, 2, 3, 4, 5, 6};
  const auto bytes = serialize_checkpoint(store);
  const std::string header = bytes.substr(8, read_u64(bytes));

  CHECK(error_of(bytes.substr(0, 5)).find("header length") != std::string::npos);
  CHECK(error_of(bytes.substr(0, bytes.size() - 4)).find("truncated") != std::string::npos);
  CHECK(error_of(with_header(bytes, replace_once(header, "hufor-checkpoint", "other"))).find("format") !=
        std::string::npos);
  CHECK(error_of(with_header(bytes, header.substr(0, header.size() / 2))).find("corrupt header") != std::string::npos);
  const std::string bad_shape = replace_once(header, "[2,3]", "[2,4]");
  CHECK(error_of(with_header(bytes, bad_shape)).find("'w'") != std::string::npos);
  const std::string bad_dtype = replace_once(header, "\"f32\"", "\"i8\"");
  CHECK(error_of(with_header(bytes, bad_dtype)).find("dtype") != std::string::npos);
}

TEST_CASE("checkpoint files on disk") {
  const auto dir = std::filesystem::temp_directory_path() / "hufor_test_ckpt";
  std::filesystem::create_directories(dir);
  ParameterStore store;
  store.add("a", {3}).value = {1.5, -2.0, 0.25};
  save_checkpoint(store, dir / "a.ckpt");
  CHECK(load_checkpoint(dir / "a.ckpt").params == store);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), IoError);
  std::filesystem::remove_all(dir);
}
