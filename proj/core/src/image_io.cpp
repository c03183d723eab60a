#include "hufor/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "hufor/errors.hpp"

namespace hufor {

namespace {

unsigned char to_byte(double v) {
  return static_cast<unsigned char>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

int read_header_int(std::istream& in, const std::filesystem::path& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) throw IoError(path.string() + ": malformed netpbm header");
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    if (value > (1 << 20)) throw IoError(path.string() + ": netpbm dimension out of range");
    c = in.get();
  }
  return value;
}

void write_bytes(const std::filesystem::path& path, const std::string& magic, int w, int h,
                 const std::string& pixels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << magic << '\n' << w << ' ' << h << "\n255\n";
  out.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

FeatureMap read_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image " + path.string());
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw IoError(path.string() + ": not a binary PGM/PPM file");
  }
  const int channels = magic[1] == '6' ? 3 : 1;
  const int w = read_header_int(in, path);
  const int h = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (w < 1 || h < 1) throw IoError(path.string() + ": empty image");
  if (maxval != 255) throw IoError(path.string() + ": only 8-bit netpbm is supported");
  std::string bytes(static_cast<std::size_t>(w) * h * channels, '\0');
  in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) throw IoError(path.string() + ": truncated pixel data");

  // Grey images are promoted to three identical channels.
  FeatureMap out(3, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const std::size_t src = (static_cast<std::size_t>(y) * w + x) * channels + (channels == 3 ? c : 0);
        out(c, y, x) = static_cast<unsigned char>(bytes[src]) / 255.0;
      }
    }
  }
  return out;
}

void write_ppm(const FeatureMap& rgb, const std::filesystem::path& path) {
  if (rgb.channels() != 3) throw InvalidArgument("write_ppm: expected 3 channels, got " + std::to_string(rgb.channels()));
  std::string pixels;
  pixels.reserve(rgb.size());
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      for (int c = 0; c < 3; ++c) pixels.push_back(static_cast<char>(to_byte(rgb(c, y, x))));
    }
  }
  write_bytes(path, "P6", rgb.width(), rgb.height(), pixels);
}

void write_pgm(const FeatureMap& grey, const std::filesystem::path& path, int channel) {
  if (channel < 0 || channel >= grey.channels()) throw InvalidArgument("write_pgm: channel out of range");
  std::string pixels;
  for (double v : grey.plane(channel)) pixels.push_back(static_cast<char>(to_byte(v)));
  write_bytes(path, "P5", grey.width(), grey.height(), pixels);
}

void write_heatmap(const FeatureMap& map, const std::filesystem::path& path, int channel) {
  if (channel < 0 || channel >= map.channels()) throw InvalidArgument("write_heatmap: channel out of range");
  const auto plane = map.plane(channel);
  const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
  const double span = *hi - *lo;
  FeatureMap scaled(1, map.height(), map.width());
  auto dst = scaled.plane(0);
  for (std::size_t i = 0; i < plane.size(); ++i) dst[i] = span > 0.0 ? (plane[i] - *lo) / span : 0.0;
  write_pgm(scaled, path);
}

FeatureMap quantize8(const FeatureMap& x) {
  FeatureMap out = x;
  for (double& v : out.data()) v = to_byte(v) / 255.0;
  return out;
}

}  // namespace hufor
