#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "hufor/feature_map.hpp"

namespace hufor::data {

enum class Source { real = 0, blend_partial = 1, smooth_full = 2 };
inline constexpr int kSourceCount = 3;

Source parse_source(std::string_view name);
std::string_view to_string(Source source);
inline int label_of(Source s) { return s == Source::real ? 0 : 1; }

struct Box {
  int x = 0, y = 0, w = 0, h = 0;
  long long area() const noexcept { return static_cast<long long>(w) * h; }
  friend bool operator==(const Box&, const Box&) = default;
};

/// One manifest record. Field order on disk: id, path, label, source, width,
/// height, face_box, rationale, then any unknown fields in their original order.
struct Sample {
  std::string id;
  std::string path;  // relative to the manifest directory
  int label = 0;
  Source source = Source::real;
  int width = 0;
  int height = 0;
  std::optional<Box> face_box;
  std::optional<std::vector<int>> rationale;
  nlohmann::ordered_json extra = nlohmann::ordered_json::object();

  /// Throws ValidationError naming the id when the box leaves the image or
  /// label and source disagree.
  void validate() const;
  friend bool operator==(const Sample&, const Sample&) = default;
};

std::string format_record(const Sample& sample);
Sample parse_record(std::string_view line, std::size_t line_number);

/// Blank lines are skipped. Malformed lines throw ParseError with the 1-based
/// line number.
std::vector<Sample> read_manifest(const std::filesystem::path& path);
void write_manifest(std::span<const Sample> samples, const std::filesystem::path& path);

// ---------------------------------------------------------------- generation

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct CorpusSpec {
  int n = 600;
  std::array<double, kSourceCount> mix = {0.5, 0.25, 0.25};  // real, blend_partial, smooth_full
  std::uint64_t seed = 7;
  int image_size = 96;
  Range blend_softness = {0.5, 1.5};  // alpha ramp width in pixels
  Range blend_tone = {0.12, 0.24};    // |skin tone shift| of the donor patch
  Range smooth_sigma = {1.5, 3.0};    // whole-image blur for smooth_full
  double texture_flatten = 0.3;       // texture amplitude multiplier for smooth_full

  /// Throws InvalidArgument; mix problems mention "mix".
  void validate() const;
};

/// Per-source counts by largest remainder, then a seeded shuffle.
std::vector<Source> allocate_sources(const CorpusSpec& spec);

/// Distance in pixels from the composite boundary that counts as the seam.
inline constexpr double kSeamBand = 3.0;

struct Rendered {
  FeatureMap image;  // 3 x S x S in [0, 1], quantized to 8 bits
  Box face_box;
  std::vector<int> rationale;
  /// blend_partial: the host portrait before compositing (quantized).
  /// Otherwise identical to image.
  FeatureMap clean;
  /// 1 x S x S, 1 where a pixel lies within kSeamBand of the composite
  /// boundary. All zero for other sources.
  FeatureMap seam;
};

/// Renders sample `index` of the corpus as `source`; deterministic in
/// (spec.seed, index, source).
Rendered render_sample(const CorpusSpec& spec, std::size_t index, Source source);

/// Writes images/<id>.ppm and manifest.jsonl under out_dir.
std::vector<Sample> generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir);

// ---------------------------------------------------------------- face crops

class FaceProvider {
 public:
  virtual ~FaceProvider() = default;
  virtual std::string_view name() const = 0;
  /// Candidate boxes in image pixels; may be empty.
  virtual std::vector<Box> boxes(const FeatureMap& image, const Sample& sample) const = 0;
};

class ManifestBoxProvider final : public FaceProvider {
 public:
  std::string_view name() const override { return "manifest_box"; }
  std::vector<Box> boxes(const FeatureMap& image, const Sample& sample) const override;
};

class CenterSquareProvider final : public FaceProvider {
 public:
  std::string_view name() const override { return "center_square"; }
  std::vector<Box> boxes(const FeatureMap& image, const Sample& sample) const override;
};

/// Centered square with side round(2/3 * min(w, h)).
Box center_square(int width, int height);

/// "manifest_box" or "center_square".
std::unique_ptr<FaceProvider> make_provider(std::string_view name);

struct FaceCrop {
  Box box;
  FeatureMap image;
};

struct CropResult {
  std::vector<FaceCrop> crops;
  /// True when the provider returned nothing and center_square was used.
  bool fallback = false;
};

inline constexpr std::size_t kMaxFaces = 5;

/// Descending area; equal areas by smaller x, then smaller y. Keeps at most max_faces.
std::vector<Box> order_boxes(std::vector<Box> boxes, std::size_t max_faces = kMaxFaces);

/// Bilinear resampling with pixel-center alignment; same-size resize is the identity.
FeatureMap resize_bilinear(const FeatureMap& x, int height, int width);
FeatureMap crop(const FeatureMap& x, const Box& box);

/// Clips provider boxes to the image, drops empty ones, orders them, and
/// resizes each crop to size x size.
CropResult crop_faces(const FeatureMap& image, const Sample& sample, const FaceProvider& provider, int size = 64,
                      std::size_t max_faces = kMaxFaces);

}  // namespace hufor::data
