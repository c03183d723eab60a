#pragma once

#include <filesystem>

#include "hufor/feature_map.hpp"

namespace hufor {

// Binary netpbm (P6 colour, P5 grey), 8-bit. Values are stored as
// round(255 * clamp(v, 0, 1)) and read back as byte / 255.

FeatureMap read_image(const std::filesystem::path& path);
void write_ppm(const FeatureMap& rgb, const std::filesystem::path& path);
void write_pgm(const FeatureMap& grey, const std::filesystem::path& path, int channel = 0);

/// Min-max normalized single-channel heatmap written as PGM.
void write_heatmap(const FeatureMap& map, const std::filesystem::path& path, int channel = 0);

/// Quantizes to the 8-bit grid without touching disk.
FeatureMap quantize8(const FeatureMap& x);

}  // namespace hufor
