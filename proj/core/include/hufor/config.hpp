#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hufor/ctx_branch.hpp"
#include "hufor/datasynth.hpp"
#include "hufor/face_moe.hpp"
#include "hufor/fusion.hpp"
#include "hufor/optimizer.hpp"

namespace hufor {

enum class KeyType { integer, real, text, choice, reals };

struct ConfigKey {
  std::string_view name;
  KeyType type;
  std::string_view default_value;
  std::string_view help;
  std::vector<std::string_view> choices;  // choice keys
  double min = -1e300;                    // integer/real keys, inclusive
  double max = 1e300;
  std::size_t arity = 0;                  // reals keys; 0 means any positive count
};

/// Every recognised key in snapshot order.
const std::vector<ConfigKey>& config_schema();

/// HUFOR_LR_FACE <-> lr_face.
std::string env_name(std::string_view key);

/// Flat key = value settings layered as defaults < file < environment < flags.
class RunConfig {
 public:
  RunConfig();

  /// Validates against the schema; unknown keys and bad values throw
  /// ValidationError naming the key.
  void set(std::string_view key, std::string_view value);
  /// "key = value" lines, '#' comments. Syntax errors throw ParseError.
  void load_file(const std::filesystem::path& path);
  void load_text(std::string_view text);
  /// Applies HUFOR_* variables; an unrecognised HUFOR_ name is rejected.
  void apply_environment(const std::vector<std::pair<std::string, std::string>>& vars);
  /// The process environment's HUFOR_* variables.
  static std::vector<std::pair<std::string, std::string>> process_environment();

  const std::string& get(std::string_view key) const;
  long long get_int(std::string_view key) const;
  std::uint64_t get_seed() const;
  double get_real(std::string_view key) const;
  std::vector<double> get_reals(std::string_view key) const;

  /// key = value lines in schema order.
  std::string snapshot() const;
  nlohmann::ordered_json to_json() const;

  data::CorpusSpec corpus_spec() const;
  face::FaceConfig face_config() const;
  ctx::ToyConfig toy_config() const;
  ctx::HeadsConfig heads_config() const;
  fusion::FusionConfig fusion_config() const;
  /// stage is "ctx", "face" or "fusion".
  StageConfig stage_config(std::string_view stage) const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
};

}  // namespace hufor
