#include <algorithm>
#include <cmath>

#include "hufor/datasynth.hpp"
#include "hufor/errors.hpp"

namespace hufor::data {

std::vector<Box> ManifestBoxProvider::boxes(const FeatureMap&, const Sample& sample) const {
  if (!sample.face_box) return {};
  return {*sample.face_box};
}

std::vector<Box> CenterSquareProvider::boxes(const FeatureMap& image, const Sample&) const {
  return {center_square(image.width(), image.height())};
}

Box center_square(int width, int height) {
  const int side = std::max(1, static_cast<int>(std::lround(2.0 * std::min(width, height) / 3.0)));
  return {(width - side) / 2, (height - side) / 2, side, side};
}

std::unique_ptr<FaceProvider> make_provider(std::string_view name) {
  if (name == "manifest_box") return std::make_unique<ManifestBoxProvider>();
  if (name == "center_square") return std::make_unique<CenterSquareProvider>();
  throw InvalidArgument("unknown crop provider '" + std::string(name) + "' (expected manifest_box or center_square)");
}

std::vector<Box> order_boxes(std::vector<Box> boxes, std::size_t max_faces) {
  std::stable_sort(boxes.begin(), boxes.end(), [](const Box& a, const Box& b) {
    if (a.area() != b.area()) return a.area() > b.area();
    if (a.x != b.x) return a.x < b.x;
    return a.y < b.y;
  });
  if (boxes.size() > max_faces) boxes.resize(max_faces);
  return boxes;
}

FeatureMap resize_bilinear(const FeatureMap& x, int height, int width) {
  if (height < 1 || width < 1) throw InvalidArgument("resize_bilinear: target size must be positive");
  if (height == x.height() && width == x.width()) return x;
  FeatureMap out(x.channels(), height, width);
  const double sy = static_cast<double>(x.height()) / height;
  const double sx = static_cast<double>(x.width()) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(x.height() - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, x.height() - 1);
    const double ty = fy - y0;
    for (int xx = 0; xx < width; ++xx) {
      const double fx = std::clamp((xx + 0.5) * sx - 0.5, 0.0, static_cast<double>(x.width() - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, x.width() - 1);
      const double tx = fx - x0;
      for (int c = 0; c < x.channels(); ++c) {
        const double top = (1.0 - tx) * x(c, y0, x0) + tx * x(c, y0, x1);
        const double bottom = (1.0 - tx) * x(c, y1, x0) + tx * x(c, y1, x1);
        out(c, y, xx) = (1.0 - ty) * top + ty * bottom;
      }
    }
  }
  return out;
}

FeatureMap crop(const FeatureMap& x, const Box& box) {
  if (box.x < 0 || box.y < 0 || box.w < 1 || box.h < 1 || box.x + box.w > x.width() || box.y + box.h > x.height()) {
    throw InvalidArgument("crop: box outside image");
  }
  FeatureMap out(x.channels(), box.h, box.w);
  for (int c = 0; c < x.channels(); ++c) {
    for (int y = 0; y < box.h; ++y) {
      for (int xx = 0; xx < box.w; ++xx) out(c, y, xx) = x(c, box.y + y, box.x + xx);
    }
  }
  return out;
}

CropResult crop_faces(const FeatureMap& image, const Sample& sample, const FaceProvider& provider, int size,
                      std::size_t max_faces) {
  if (size < 1) throw InvalidArgument("crop_faces: size must be positive");
  if (max_faces < 1) throw InvalidArgument("crop_faces: max_faces must be at least 1");
  std::vector<Box> clipped;
  for (const Box& b : provider.boxes(image, sample)) {
    const int x0 = std::max(0, b.x);
    const int y0 = std::max(0, b.y);
    const int x1 = std::min(image.width(), b.x + b.w);
    const int y1 = std::min(image.height(), b.y + b.h);
    if (x1 > x0 && y1 > y0) clipped.push_back({x0, y0, x1 - x0, y1 - y0});
  }
  CropResult result;
  if (clipped.empty()) {
    result.fallback = true;
    clipped.push_back(center_square(image.width(), image.height()));
  }
  for (const Box& b : order_boxes(std::move(clipped), max_faces)) {
    result.crops.push_back({b, resize_bilinear(crop(image, b), size, size)});
  }
  return result;
}

}  // namespace hufor::data
