#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hufor/adalog.hpp"
#include "hufor/datasynth.hpp"
#include "hufor/errors.hpp"

using namespace hufor;
using namespace hufor::data;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Mean over channels and masked pixels of the squared sigma-1 residual.
double seam_energy(const FeatureMap& image, const FeatureMap& mask) {
  const auto y = adalog::log_residual_bank(image, adalog::ScaleBank{{1.0}}).at(0);
  double e = 0.0;
  double n = 0.0;
  for (int c = 0; c < y.channels(); ++c)
    for (int r = 0; r < y.height(); ++r)
      for (int i = 0; i < y.width(); ++i) {
        if (mask(0, r, i) <= 0.0) continue;
        e += y(c, r, i) * y(c, r, i);
        n += 1.0;
      }
  return e / n;
}

/// log mean residual energy inside the face box for a fine and a coarse scale.
std::array<double, 2> band_energies(const Rendered& r) {
  std::array<double, 2> out{};
  const double sigmas[2] = {1.0, 4.0};
  for (int b = 0; b < 2; ++b) {
    const auto y = adalog::log_residual_bank(r.image, adalog::ScaleBank{{sigmas[b]}}).at(0);
    double e = 0.0;
    int n = 0;
    for (int c = 0; c < 3; ++c)
      for (int row = r.face_box.y; row < r.face_box.y + r.face_box.h; ++row)
        for (int col = r.face_box.x; col < r.face_box.x + r.face_box.w; ++col) {
          e += y(c, row, col) * y(c, row, col);
          ++n;
        }
    out[static_cast<std::size_t>(b)] = std::log(e / n);
  }
  return out;
}

Sample make_sample(const std::string& id, Source source) {
  Sample s;
  s.id = id;
  s.path = "images/" + id + ".ppm";
  s.source = source;
  s.label = label_of(source);
  s.width = 96;
  s.height = 96;
  return s;
}

}  // namespace

TEST_CASE("corpus spec validation") {
  CorpusSpec spec;
  CHECK_NOTHROW(spec.validate());
  spec.mix = {0.5, 0.3, 0.1};
  try {
    spec.validate();
    FAIL("expected InvalidArgument");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).starts_with("mix"));
  }
  spec = {};
  spec.mix = {1.2, -0.1, -0.1};
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
  spec = {};
  spec.n = 2;
  CHECK_THROWS_AS(spec.validate(), InvalidArgument);
}

TEST_CASE("source allocation follows the mix") {
  CorpusSpec spec;
  spec.n = 10;
  spec.mix = {0.5, 0.25, 0.25};
  const auto sources = allocate_sources(spec);
  int counts[3] = {};
  for (Source s : sources) ++counts[static_cast<int>(s)];
  CHECK(counts[0] == 5);
  CHECK(counts[1] + counts[2] == 5);
  CHECK(std::abs(counts[1] - counts[2]) == 1);
}

TEST_CASE("generation is byte-identical per seed") {
  TempDir a("hufor_synth_a"), b("hufor_synth_b");
  CorpusSpec spec;
  spec.n = 12;
  spec.seed = 19;
  const auto sa = generate_corpus(spec, a.path);
  const auto sb = generate_corpus(spec, b.path);
  CHECK(sa == sb);
  CHECK(slurp(a.path / "manifest.jsonl") == slurp(b.path / "manifest.jsonl"));
  for (const auto& s : sa) CHECK(slurp(a.path / s.path) == slurp(b.path / s.path));
  CHECK(read_manifest(a.path / "manifest.jsonl") == sa);
}

TEST_CASE("an all-real mix produces only label 0") {
  TempDir dir("hufor_synth_real");
  CorpusSpec spec;
  spec.n = 8;
  spec.mix = {1.0, 0.0, 0.0};
  for (const auto& s : generate_corpus(spec, dir.path)) {
    CHECK(s.label == 0);
    CHECK(s.source == Source::real);
  }
}

TEST_CASE("every generated record is consistent") {
  TempDir dir("hufor_synth_consistent");
  CorpusSpec spec;
  spec.n = 9;
  for (const auto& s : generate_corpus(spec, dir.path)) {
    CHECK_NOTHROW(s.validate());
    CHECK(s.label == label_of(s.source));
    REQUIRE(s.face_box);
    REQUIRE(s.rationale);
    CHECK(s.rationale->back() == 0);
  }
}

TEST_CASE("blending raises fine-scale energy along the seam") {
  CorpusSpec spec;
  int wins = 0;
  const int pairs = 60;
  for (int i = 0; i < pairs; ++i) {
    const auto r = render_sample(spec, static_cast<std::size_t>(i), Source::blend_partial);
    REQUIRE(l1_norm(r.seam) > 0.0);
    if (seam_energy(r.image, r.seam) > seam_energy(r.clean, r.seam)) ++wins;
  }
  CHECK(wins >= static_cast<int>(std::ceil(0.95 * pairs)));
}

TEST_CASE("a fixed linear probe on band energies separates the forgery classes") {
  // Least-squares probe w . [1, fine, coarse] fitted on one seed, scored on another.
  auto features = [](std::uint64_t seed, int n) {
    CorpusSpec spec;
    spec.seed = seed;
    spec.n = n;
    std::vector<std::pair<std::array<double, 3>, double>> rows;
    const auto sources = allocate_sources(spec);
    for (std::size_t i = 0; i < sources.size(); ++i) {
      if (sources[i] == Source::real) continue;
      const auto e = band_energies(render_sample(spec, i, sources[i]));
      rows.push_back({{1.0, e[0], e[1]}, sources[i] == Source::blend_partial ? 1.0 : -1.0});
    }
    return rows;
  };
  const auto train = features(101, 200);
  double a[3][4] = {};
  for (const auto& [x, t] : train)
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) a[i][j] += x[i] * x[j];
      a[i][3] += x[i] * t;
    }
  for (int i = 0; i < 3; ++i) {
    for (int r = i + 1; r < 3; ++r) {
      const double f = a[r][i] / a[i][i];
      for (int c = i; c < 4; ++c) a[r][c] -= f * a[i][c];
    }
  }
  double w[3];
  for (int i = 2; i >= 0; --i) {
    double s = a[i][3];
    for (int j = i + 1; j < 3; ++j) s -= a[i][j] * w[j];
    w[i] = s / a[i][i];
  }
  const auto test_rows = features(7, 200);
  int correct = 0;
  for (const auto& [x, t] : test_rows) {
    const double score = w[0] * x[0] + w[1] * x[1] + w[2] * x[2];
    if ((score >= 0.0) == (t > 0.0)) ++correct;
  }
  const double accuracy = static_cast<double>(correct) / static_cast<double>(test_rows.size());
  INFO("probe accuracy " << accuracy);
  CHECK(accuracy >= 0.9);
}

TEST_CASE("manifest I/O") {
  TempDir dir("hufor_manifest");
  SUBCASE("empty file gives an empty list") {
    write_text(dir.path / "m.jsonl", "");
    CHECK(read_manifest(dir.path / "m.jsonl").empty());
  }
  SUBCASE("three samples round trip") {
    std::vector<Sample> samples{make_sample("a", Source::real), make_sample("b", Source::blend_partial),
                                make_sample("c", Source::smooth_full)};
    samples[1].face_box = Box{10, 12, 40, 44};
    samples[2].rationale = std::vector<int>{5, 6, 0};
    write_manifest(samples, dir.path / "m.jsonl");
    CHECK(read_manifest(dir.path / "m.jsonl") == samples);
  }
  SUBCASE("unknown fields are preserved verbatim") {
    const std::string line =
        R"({"id":"x","path":"x.ppm","label":0,"source":"real","width":96,"height":96,"zeta":[1,2],"alpha":{"k":"v"}})";
    const auto s = parse_record(line, 1);
    CHECK(s.extra.size() == 2);
    CHECK(format_record(s) == line);
  }
  SUBCASE("out-of-bounds face box names the id") {
    auto s = make_sample("s00042", Source::blend_partial);
    s.face_box = Box{60, 60, 40, 40};
    write_text(dir.path / "m.jsonl", format_record(s) + "\n");
    try {
      read_manifest(dir.path / "m.jsonl");
      FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("s00042") != std::string::npos);
    }
  }
  SUBCASE("label and source must agree") {
    auto s = make_sample("bad", Source::smooth_full);
    s.label = 0;
    CHECK_THROWS_AS(s.validate(), ValidationError);
  }
  SUBCASE("malformed lines report their line number") {
    const auto good = format_record(make_sample("a", Source::real));
    write_text(dir.path / "m.jsonl", good + "\n\n" + good + "\n{not json\n");
    try {
      read_manifest(dir.path / "m.jsonl");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 4);
    }
    write_text(dir.path / "m.jsonl", good + "\n" + R"({"id":"q","path":"q","label":1})" + "\n");
    try {
      read_manifest(dir.path / "m.jsonl");
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
}

TEST_CASE("face crops") {
  FeatureMap image(3, 96, 96);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 96; ++y)
      for (int x = 0; x < 96; ++x) image(c, y, x) = (c + 1) * 0.001 * (y * 96 + x) / 96.0;

  SUBCASE("one box gives exactly one crop of that region") {
    auto s = make_sample("a", Source::real);
    s.face_box = Box{8, 16, 64, 64};
    const auto r = crop_faces(image, s, ManifestBoxProvider{}, 64);
    REQUIRE(r.crops.size() == 1);
    CHECK_FALSE(r.fallback);
    CHECK(r.crops[0].box == *s.face_box);
    CHECK(r.crops[0].image == crop(image, *s.face_box));
  }
  SUBCASE("center square on 96x96 is the central 64x64 region") {
    CHECK(center_square(96, 96) == Box{16, 16, 64, 64});
    const auto s = make_sample("b", Source::real);
    const auto r = crop_faces(image, s, ManifestBoxProvider{}, 64);
    REQUIRE(r.crops.size() == 1);
    CHECK(r.fallback);
    CHECK(r.crops[0].image == crop(image, Box{16, 16, 64, 64}));
    const auto direct = crop_faces(image, s, CenterSquareProvider{}, 64);
    CHECK_FALSE(direct.fallback);
    CHECK(direct.crops[0].image == r.crops[0].image);
  }
  SUBCASE("six boxes keep the five largest with a left-first tie break") {
    class Six final : public FaceProvider {
     public:
      std::string_view name() const override { return "external"; }
      std::vector<Box> boxes(const FeatureMap&, const Sample&) const override {
        return {{0, 0, 10, 10}, {50, 5, 20, 20}, {5, 40, 20, 20}, {30, 30, 30, 30}, {70, 70, 8, 8}, {60, 0, 25, 16}};
      }
    };
    const auto r = crop_faces(image, make_sample("c", Source::real), Six{}, 32);
    REQUIRE(r.crops.size() == 5);
    const std::vector<Box> expected{{30, 30, 30, 30}, {5, 40, 20, 20}, {50, 5, 20, 20}, {60, 0, 25, 16}, {0, 0, 10, 10}};
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(r.crops[i].box == expected[i]);
      CHECK(r.crops[i].image.height() == 32);
      CHECK(r.crops[i].image.width() == 32);
    }
  }
  SUBCASE("boxes are clipped to the image") {
    auto s = make_sample("d", Source::real);
    s.face_box = Box{80, 80, 16, 16};
    const auto r = crop_faces(image, s, ManifestBoxProvider{}, 16);
    CHECK(r.crops.at(0).box == Box{80, 80, 16, 16});
  }
  SUBCASE("resize to the same size is the identity") {
    CHECK(resize_bilinear(image, 96, 96) == image);
    const auto small = resize_bilinear(image, 48, 48);
    CHECK(small.height() == 48);
  }
}
