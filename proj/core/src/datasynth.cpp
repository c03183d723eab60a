#include "hufor/datasynth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "hufor/ctx_branch.hpp"
#include "hufor/errors.hpp"
#include "hufor/gaussian.hpp"
#include "hufor/image_io.hpp"
#include "hufor/rng.hpp"

namespace hufor::data {

namespace {

using Rgb = std::array<double, 3>;

/// Bilinear value noise on a lattice with the given cell size, smoothstep-interpolated.
class ValueNoise {
 public:
  ValueNoise(Rng& rng, int size, double cell) : cell_(cell), n_(static_cast<int>(std::ceil(size / cell)) + 2) {
    grid_.resize(static_cast<std::size_t>(n_) * n_);
    for (double& v : grid_) v = rng.uniform(-1.0, 1.0);
  }

  double operator()(double y, double x) const {
    const double gy = y / cell_, gx = x / cell_;
    const int iy = static_cast<int>(gy), ix = static_cast<int>(gx);
    const double ty = smooth(gy - iy), tx = smooth(gx - ix);
    auto at = [&](int r, int c) { return grid_[static_cast<std::size_t>(r) * n_ + c]; };
    const double top = (1 - tx) * at(iy, ix) + tx * at(iy, ix + 1);
    const double bottom = (1 - tx) * at(iy + 1, ix) + tx * at(iy + 1, ix + 1);
    return (1 - ty) * top + ty * bottom;
  }

 private:
  static double smooth(double t) { return t * t * (3.0 - 2.0 * t); }
  double cell_;
  int n_;
  std::vector<double> grid_;
};

/// Approximate signed distance (pixels, negative inside) to an axis-aligned ellipse.
struct Ellipse {
  double cx, cy, ax, ay;

  double distance(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double rho = std::sqrt((dx * dx) / (ax * ax) + (dy * dy) / (ay * ay));
    if (rho < 1e-12) return -std::min(ax, ay);
    return (rho - 1.0) * std::sqrt(dx * dx + dy * dy) / rho;
  }
};

double ramp(double distance, double width) { return std::clamp(0.5 - distance / width, 0.0, 1.0); }

/// Portrait parameters drawn from one stream.
struct Portrait {
  Rgb background;
  Rgb background_tint;
  Rgb hair;
  Rgb skin;
  Rgb eye;
  Rgb lips;
  Ellipse face;
  double edge;        // face contour softness
  double light;       // horizontal shading slope
  double texture = 1.0;
  std::uint64_t texture_seed;
};

Portrait draw_portrait(Rng& rng, int size) {
  Portrait p;
  for (auto& c : p.background) c = rng.uniform(0.2, 0.8);
  for (auto& c : p.background_tint) c = rng.uniform(0.6, 1.0);
  const double hair = rng.uniform(0.08, 0.35);
  p.hair = {hair, hair * rng.uniform(0.7, 0.9), hair * rng.uniform(0.5, 0.8)};
  const double r = rng.uniform(0.55, 0.9);
  const double g = r * rng.uniform(0.7, 0.85);
  p.skin = {r, g, g * rng.uniform(0.75, 0.95)};
  const double eye = rng.uniform(0.05, 0.25);
  p.eye = {eye, eye, eye * rng.uniform(0.9, 1.3)};
  p.lips = {r * rng.uniform(0.8, 0.95), g * rng.uniform(0.45, 0.6), g * rng.uniform(0.45, 0.6)};
  const double s = size;
  p.face = {s / 2 + rng.uniform(-4, 4), s / 2 + rng.uniform(-2, 6), s * rng.uniform(0.2, 0.25), s * rng.uniform(0.27, 0.32)};
  p.edge = rng.uniform(1.5, 2.0);
  p.light = rng.uniform(-0.15, 0.15);
  p.texture_seed = rng.next();
  return p;
}

/// Skin colour of the portrait at a pixel, before compositing with the background.
struct FaceLayer {
  FeatureMap colour;  // 3 x S x S
  FeatureMap alpha;   // 1 x S x S
};

FaceLayer render_face(const Portrait& p, int size) {
  Rng rng(p.texture_seed);
  const ValueNoise mid(rng, size, 4.0), fine(rng, size, 2.0);
  FaceLayer layer{FeatureMap(3, size, size), FeatureMap(1, size, size)};
  const Ellipse& f = p.face;
  const Ellipse eyes[2] = {{f.cx - 0.4 * f.ax, f.cy - 0.15 * f.ay, 0.2 * f.ax, 0.09 * f.ay},
                           {f.cx + 0.4 * f.ax, f.cy - 0.15 * f.ay, 0.2 * f.ax, 0.09 * f.ay}};
  const Ellipse mouth{f.cx, f.cy + 0.5 * f.ay, 0.35 * f.ax, 0.08 * f.ay};
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double shade = 1.0 + p.light * (x - f.cx) / f.ax;
      const double grain = p.texture * (0.05 * mid(y, x) + 0.035 * fine(y, x) + 0.03 * rng.uniform(-1.0, 1.0));
      Rgb c;
      for (int k = 0; k < 3; ++k) c[k] = p.skin[k] * shade + grain;
      const double a_mouth = ramp(mouth.distance(x, y), 1.0);
      for (int k = 0; k < 3; ++k) c[k] = (1 - a_mouth) * c[k] + a_mouth * (p.lips[k] + 0.5 * grain);
      for (const auto& e : eyes) {
        const double a_eye = ramp(e.distance(x, y), 1.0);
        for (int k = 0; k < 3; ++k) c[k] = (1 - a_eye) * c[k] + a_eye * p.eye[k];
      }
      for (int k = 0; k < 3; ++k) layer.colour(k, y, x) = c[k];
      layer.alpha(0, y, x) = ramp(f.distance(x, y), p.edge);
    }
  }
  return layer;
}

FeatureMap render_portrait(const Portrait& p, int size) {
  Rng rng(p.texture_seed ^ 0x9e3779b97f4a7c15ull);
  const ValueNoise coarse(rng, size, 24.0), medium(rng, size, 12.0), small(rng, size, 6.0);
  const Ellipse hair{p.face.cx, p.face.cy - 0.35 * p.face.ay, 1.18 * p.face.ax, 0.85 * p.face.ay};
  FeatureMap img(3, size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double n = p.texture * (0.12 * coarse(y, x) + 0.06 * medium(y, x) + 0.03 * small(y, x)) +
                       p.texture * 0.02 * rng.uniform(-1.0, 1.0);
      const double a_hair = ramp(hair.distance(x, y), 1.5);
      for (int k = 0; k < 3; ++k) {
        const double bg = p.background[k] + p.background_tint[k] * n;
        img(k, y, x) = (1 - a_hair) * bg + a_hair * (p.hair[k] + 0.5 * n);
      }
    }
  }
  const FaceLayer face = render_face(p, size);
  for (int k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < img.plane_size(); ++i) {
      const double a = face.alpha.data()[i];
      img.plane(k)[i] = (1 - a) * img.plane(k)[i] + a * face.colour.plane(k)[i];
    }
  }
  return img;
}

FeatureMap clamp01(FeatureMap x) {
  for (double& v : x.data()) v = std::clamp(v, 0.0, 1.0);
  return x;
}

const std::vector<std::vector<std::string>>& templates() {
  static const std::vector<std::vector<std::string>> t = {
      {"real photo with natural skin texture", "real photo with consistent lighting"},
      {"blending boundary near eyes", "blending boundary near mouth", "blending boundary near cheek",
       "blending boundary near jaw", "visible seam around face"},
      {"unnaturally smooth skin", "overly flat skin texture", "overly flat hair texture",
       "overly flat background texture", "missing face detail"},
  };
  return t;
}

Box face_box_of(const Ellipse& f, int size) {
  const double margin = 4.0;
  const int x0 = std::max(0, static_cast<int>(std::floor(f.cx - f.ax - margin)));
  const int y0 = std::max(0, static_cast<int>(std::floor(f.cy - f.ay - margin)));
  const int x1 = std::min(size, static_cast<int>(std::ceil(f.cx + f.ax + margin)));
  const int y1 = std::min(size, static_cast<int>(std::ceil(f.cy + f.ay + margin)));
  return {x0, y0, x1 - x0, y1 - y0};
}

}  // namespace

void CorpusSpec::validate() const {
  if (n < 3) throw InvalidArgument("corpus: n must be at least 3, got " + std::to_string(n));
  double sum = 0.0;
  for (double m : mix) {
    if (!std::isfinite(m) || m < 0.0) throw InvalidArgument("mix: proportions must be finite and non-negative");
    sum += m;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("mix: proportions must sum to 1, got " + std::to_string(sum));
  if (image_size < 32) throw InvalidArgument("corpus: image_size must be at least 32");
  if (!(blend_softness.lo > 0.0 && blend_softness.lo <= blend_softness.hi)) {
    throw InvalidArgument("corpus: blend softness range must satisfy 0 < lo <= hi");
  }
  if (!(blend_tone.lo >= 0.0 && blend_tone.lo <= blend_tone.hi && blend_tone.hi <= 1.0)) {
    throw InvalidArgument("corpus: blend tone range must satisfy 0 <= lo <= hi <= 1");
  }
  if (!(smooth_sigma.lo > 0.0 && smooth_sigma.lo <= smooth_sigma.hi)) {
    throw InvalidArgument("corpus: smoothing sigma range must satisfy 0 < lo <= hi");
  }
  if (!(texture_flatten >= 0.0 && texture_flatten <= 1.0)) {
    throw InvalidArgument("corpus: texture_flatten must lie in [0, 1]");
  }
}

std::vector<Source> allocate_sources(const CorpusSpec& spec) {
  spec.validate();
  std::array<int, kSourceCount> counts{};
  std::array<double, kSourceCount> remainder{};
  int assigned = 0;
  for (int k = 0; k < kSourceCount; ++k) {
    const double exact = spec.mix[k] * spec.n;
    counts[k] = static_cast<int>(std::floor(exact));
    remainder[k] = exact - counts[k];
    assigned += counts[k];
  }
  std::array<int, kSourceCount> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (int i = 0; assigned < spec.n; ++i, ++assigned) ++counts[order[i % kSourceCount]];

  std::vector<Source> sources;
  for (int k = 0; k < kSourceCount; ++k) sources.insert(sources.end(), counts[k], static_cast<Source>(k));
  Rng rng(derive_seed(spec.seed, 0, "sources"));
  rng.shuffle(sources.begin(), sources.end());
  return sources;
}

Rendered render_sample(const CorpusSpec& spec, std::size_t index, Source source) {
  const int size = spec.image_size;
  Rng rng(derive_seed(spec.seed, index, "render"));
  Portrait host = draw_portrait(rng, size);
  Rendered out;
  out.seam = FeatureMap(1, size, size);
  out.face_box = face_box_of(host.face, size);

  if (source == Source::smooth_full) {
    host.texture = spec.texture_flatten;
    const double sigma = rng.uniform(spec.smooth_sigma.lo, spec.smooth_sigma.hi);
    out.image = quantize8(clamp01(gaussian_smooth(render_portrait(host, size), {sigma, 0, Padding::reflect})));
    out.clean = out.image;
  } else {
    FeatureMap img = render_portrait(host, size);
    if (source == Source::blend_partial) {
      out.clean = quantize8(clamp01(img));
      // Donor face with the host geometry but its own tone and texture.
      Rng donor_rng(derive_seed(spec.seed, index, "donor"));
      Portrait donor = draw_portrait(donor_rng, size);
      donor.face = host.face;
      const double shift = donor_rng.uniform(spec.blend_tone.lo, spec.blend_tone.hi) * (donor_rng.uniform() < 0.5 ? -1.0 : 1.0);
      for (int k = 0; k < 3; ++k) donor.skin[k] = std::clamp(host.skin[k] + shift, 0.05, 0.95);
      const FaceLayer patch = render_face(donor, size);
      const Ellipse region{host.face.cx, host.face.cy + 0.1 * host.face.ay,
                           host.face.ax * rng.uniform(0.6, 0.8), host.face.ay * rng.uniform(0.65, 0.8)};
      const double softness = rng.uniform(spec.blend_softness.lo, spec.blend_softness.hi);
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          const double d = region.distance(x, y);
          const double a = ramp(d, softness);
          for (int k = 0; k < 3; ++k) img(k, y, x) = (1 - a) * img(k, y, x) + a * patch.colour(k, y, x);
          if (std::abs(d) <= kSeamBand) out.seam(0, y, x) = 1.0;
        }
      }
    }
    out.image = quantize8(clamp01(img));
    if (source != Source::blend_partial) out.clean = out.image;
  }

  const auto& options = templates()[static_cast<int>(source)];
  out.rationale = ctx::RationaleSequence::from_text(options[rng.below(options.size())]).tokens;
  return out;
}

std::vector<Sample> generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir) {
  const auto sources = allocate_sources(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "images").string() + ": " + ec.message());

  std::vector<Sample> samples;
  samples.reserve(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const Rendered r = render_sample(spec, i, sources[i]);
    char id[16];
    std::snprintf(id, sizeof id, "s%05zu", i);
    Sample s;
    s.id = id;
    s.path = "images/" + s.id + ".ppm";
    s.source = sources[i];
    s.label = label_of(sources[i]);
    s.width = r.image.width();
    s.height = r.image.height();
    s.face_box = r.face_box;
    s.rationale = r.rationale;
    write_ppm(r.image, out_dir / s.path);
    samples.push_back(std::move(s));
  }
  write_manifest(samples, out_dir / "manifest.jsonl");
  return samples;
}

}  // namespace hufor::data
