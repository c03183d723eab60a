#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "hufor/parameter_store.hpp"

namespace hufor {

// Container layout (all integers little-endian):
//
//   u64 header_length
//   header_length bytes of UTF-8 JSON:
//     {"format":"hufor-checkpoint","version":1,"step":<u64>,"meta":{...},
//      "entries":[{"name":..,"dtype":"f32"|"f64","shape":[..],"offset":..,"byte_length":..}, ...]}
//   raw blob; entry offsets are relative to the first blob byte
//
// Entries appear in store insertion order and are packed without gaps.

enum class StorePrecision {
  /// f32 for entries whose values are exactly representable in single
  /// precision, f64 otherwise. Round trips are bit-exact.
  automatic,
  /// Always f32 (lossy for values that need double precision).
  single,
};

struct Checkpoint {
  ParameterStore params;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();
};

std::string serialize_checkpoint(const ParameterStore& params, const nlohmann::ordered_json& meta = {},
                                 StorePrecision precision = StorePrecision::automatic);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const ParameterStore& params, const std::filesystem::path& path,
                     const nlohmann::ordered_json& meta = {},
                     StorePrecision precision = StorePrecision::automatic);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hufor
