#include "hufor/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hufor/errors.hpp"
#include "hufor/rng.hpp"

extern char** environ;

namespace hufor {

namespace {

constexpr std::string_view kEnvPrefix = "HUFOR_";

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

const ConfigKey* find_key(std::string_view name) {
  for (const auto& k : config_schema()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

const ConfigKey& require_key(std::string_view name) {
  const ConfigKey* k = find_key(name);
  if (!k) throw ValidationError("unknown config key '" + std::string(name) + "'");
  return *k;
}

[[noreturn]] void bad_value(const ConfigKey& key, std::string_view value, const std::string& why) {
  throw ValidationError("config key '" + std::string(key.name) + "': " + why + " (got '" + std::string(value) + "')");
}

bool parse_real(std::string_view text, double& out) {
  const std::string s = trim(text);
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

std::vector<double> parse_reals(const ConfigKey& key, std::string_view value) {
  std::vector<double> out;
  std::string_view rest = value;
  while (true) {
    const auto comma = rest.find(',');
    double v = 0.0;
    if (!parse_real(rest.substr(0, comma), v)) bad_value(key, value, "expected a comma-separated list of numbers");
    out.push_back(v);
    if (comma == std::string_view::npos) break;
    rest = rest.substr(comma + 1);
  }
  if (key.arity > 0 && out.size() != key.arity) {
    bad_value(key, value, "expected " + std::to_string(key.arity) + " values");
  }
  for (double v : out) {
    if (v < key.min || v > key.max) bad_value(key, value, "values must lie in [" + std::to_string(key.min) + ", " +
                                                              std::to_string(key.max) + "]");
  }
  return out;
}

void check_value(const ConfigKey& key, std::string_view value) {
  switch (key.type) {
    case KeyType::integer: {
      const std::string s = trim(value);
      long long v = 0;
      const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) bad_value(key, value, "expected an integer");
      if (v < key.min || v > key.max) {
        bad_value(key, value, "must lie in [" + std::to_string(static_cast<long long>(key.min)) + ", " +
                                  std::to_string(static_cast<long long>(key.max)) + "]");
      }
      break;
    }
    case KeyType::real: {
      double v = 0.0;
      if (!parse_real(value, v)) bad_value(key, value, "expected a number");
      if (v < key.min || v > key.max) {
        bad_value(key, value, "must lie in [" + std::to_string(key.min) + ", " + std::to_string(key.max) + "]");
      }
      break;
    }
    case KeyType::choice:
      if (std::find(key.choices.begin(), key.choices.end(), value) == key.choices.end()) {
        std::string options;
        for (auto c : key.choices) options += (options.empty() ? "" : "|") + std::string(c);
        bad_value(key, value, "expected one of " + options);
      }
      break;
    case KeyType::reals: {
      const auto v = parse_reals(key, value);
      if (key.name == "mix") {
        double sum = 0.0;
        for (double m : v) sum += m;
        if (std::abs(sum - 1.0) > 1e-9) {
          bad_value(key, value, "proportions must sum to 1 within 1e-9, sum is " + std::to_string(sum));
        }
      }
      if ((key.name == "blend_softness" || key.name == "blend_tone" || key.name == "smooth_sigma") && v[0] > v[1]) {
        bad_value(key, value, "range must satisfy lo <= hi");
      }
      if (key.name == "fine_bank" || key.name == "coarse_bank") {
        for (std::size_t i = 1; i < v.size(); ++i) {
          if (v[i] <= v[i - 1]) bad_value(key, value, "scales must be strictly increasing");
        }
      }
      break;
    }
    case KeyType::text:
      break;
  }
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  using K = KeyType;
  static const std::vector<ConfigKey> schema = {
      {"seed", K::integer, "7", "master seed for corpus, initialization and batching", {}, 0, 9.0e18},
      {"data", K::text, "", "corpus directory holding manifest.jsonl", {}},
      {"out", K::text, "", "output directory (corpus for synth, run directory otherwise)", {}},
      // corpus
      {"n", K::integer, "600", "corpus size", {}, 3, 1e7},
      {"mix", K::reals, "0.5,0.25,0.25", "proportions of real, blend_partial, smooth_full", {}, 0, 1, 3},
      {"image_size", K::integer, "96", "side of generated images", {}, 32, 4096},
      {"blend_softness", K::reals, "0.5,1.5", "alpha ramp width range in pixels", {}, 1e-3, 64, 2},
      {"blend_tone", K::reals, "0.12,0.24", "donor skin tone shift range for blend_partial", {}, 0, 1, 2},
      {"smooth_sigma", K::reals, "1.5,3", "whole-image blur range for smooth_full", {}, 1e-3, 64, 2},
      {"texture_flatten", K::real, "0.3", "texture amplitude multiplier for smooth_full", {}, 0, 1},
      {"val_fraction", K::real, "0.2", "held-out share of the corpus", {}, 0, 0.9},
      // face branch
      {"face_size", K::integer, "64", "face crop side", {}, 8, 1024},
      {"face_width", K::integer, "8", "channels of conv blocks 1-3 and the MoE layer", {}, 1, 512},
      {"face_head_width", K::integer, "16", "channels of conv block 4", {}, 1, 512},
      {"feature_dim", K::integer, "128", "width d of f_face and f_ctx", {}, 1, 4096},
      {"controller_hidden", K::integer, "16", "adaLoG controller width", {}, 1, 512},
      {"face_calibration", K::integer, "64", "crops for the data-dependent init of stage face (0 disables)", {}, 0, 100000},
      {"moe_layers", K::integer, "1", "number of MoE layers after block 3", {}, 1, 8},
      {"fine_bank", K::reals, "1,4,7", "sigmas of the fine adaLoG expert", {}, 0.1, 64},
      {"coarse_bank", K::reals, "9,12,15", "sigmas of the coarse adaLoG expert", {}, 0.1, 64},
      {"adalog_padding", K::choice, "reflect", "boundary policy of the residual bank", {"reflect", "circular", "replicate"}},
      // context branch
      {"ctx_backend", K::choice, "toy", "context encoder", {"toy", "mock", "recorded"}},
      {"ctx_recorded", K::text, "", "recorded context file for ctx_backend = recorded", {}},
      {"ctx_embed_dim", K::integer, "16", "token embedding width e", {}, 1, 4096},
      {"ctx_global_dim", K::integer, "16", "global visual vector width g", {}, 1, 4096},
      {"ctx_encoder_width", K::integer, "8", "toy encoder channels", {}, 1, 512},
      {"ctx_pooling", K::choice, "max", "token pooling before the projection head", {"max", "mean"}},
      {"head_hidden", K::integer, "64", "hidden width of the projection and confidence heads", {}, 1, 4096},
      // fusion
      {"fusion_mode", K::choice, "weight_face", "branch scaled by the confidence", {"weight_face", "weight_ctx"}},
      {"fusion_hidden", K::integer, "64", "hidden width of the fusion head", {}, 1, 4096},
      // optimisation
      {"batch", K::integer, "16", "minibatch size", {}, 1, 1 << 20},
      {"momentum", K::real, "0.9", "SGD momentum", {}, 0, 0.999999},
      {"lr_schedule", K::choice, "cosine", "per-update rate: cosine decay from lr_<stage>, or constant", {"cosine", "constant"}},
      {"lr_ctx", K::real, "0.01", "stage ctx learning rate", {}, 0, 10},
      {"lr_face", K::real, "0.01", "stage face learning rate", {}, 0, 10},
      {"lr_fusion", K::real, "0.01", "stage fusion learning rate", {}, 0, 10},
      {"epochs_ctx", K::integer, "20", "stage ctx epochs", {}, 0, 100000},
      {"epochs_face", K::integer, "30", "stage face epochs", {}, 0, 100000},
      {"epochs_fusion", K::integer, "20", "stage fusion epochs", {}, 0, 100000},
      // inference
      {"crop_provider", K::choice, "manifest_box", "face region source", {"manifest_box", "center_square"}},
      {"aggregation", K::choice, "max", "multi-face score aggregation", {"max", "mean"}},
      {"max_faces", K::integer, "5", "faces kept per image", {}, 1, 64},
      {"split", K::choice, "val", "manifest subset used by infer, eval and inspect", {"train", "val", "all"}},
      {"inspect_maps", K::integer, "4", "samples per source receiving heatmaps in inspect", {}, 0, 1000},
  };
  return schema;
}

std::string env_name(std::string_view key) {
  std::string out(kEnvPrefix);
  for (char c : key) out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  return out;
}

RunConfig::RunConfig() {
  for (const auto& k : config_schema()) values_.emplace(std::string(k.name), std::string(k.default_value));
}

void RunConfig::set(std::string_view key, std::string_view value) {
  const ConfigKey& k = require_key(key);
  const std::string v = trim(value);
  check_value(k, v);
  values_[std::string(key)] = v;
}

void RunConfig::load_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    const std::string body = trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", number);
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ParseError("missing key before '='", number);
    try {
      set(key, std::string_view(body).substr(eq + 1));
    } catch (const ValidationError& e) {
      throw ValidationError("line " + std::to_string(number) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    load_text(buf.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what(), e.line());
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void RunConfig::apply_environment(const std::vector<std::pair<std::string, std::string>>& vars) {
  for (const auto& [name, value] : vars) {
    if (name.rfind(kEnvPrefix, 0) != 0) continue;
    const ConfigKey* match = nullptr;
    for (const auto& k : config_schema()) {
      if (env_name(k.name) == name) match = &k;
    }
    if (!match) throw ValidationError("environment variable " + name + " does not name a config key");
    set(match->name, value);
  }
}

std::vector<std::pair<std::string, std::string>> RunConfig::process_environment() {
  std::vector<std::pair<std::string, std::string>> out;
  for (char** e = environ; e && *e; ++e) {
    const std::string_view entry(*e);
    if (entry.rfind(kEnvPrefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string_view::npos) continue;
    out.emplace_back(std::string(entry.substr(0, eq)), std::string(entry.substr(eq + 1)));
  }
  std::sort(out.begin(), out.end());
  return out;
}

const std::string& RunConfig::get(std::string_view key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + std::string(key) + "'");
  return it->second;
}

long long RunConfig::get_int(std::string_view key) const { return std::stoll(get(key)); }

std::uint64_t RunConfig::get_seed() const { return std::stoull(get("seed")); }

double RunConfig::get_real(std::string_view key) const { return std::strtod(get(key).c_str(), nullptr); }

std::vector<double> RunConfig::get_reals(std::string_view key) const {
  return parse_reals(require_key(key), get(key));
}

std::string RunConfig::snapshot() const {
  std::string out;
  for (const auto& k : config_schema()) out += std::string(k.name) + " = " + get(k.name) + "\n";
  return out;
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& k : config_schema()) j[std::string(k.name)] = get(k.name);
  return j;
}

data::CorpusSpec RunConfig::corpus_spec() const {
  data::CorpusSpec spec;
  spec.n = static_cast<int>(get_int("n"));
  const auto mix = get_reals("mix");
  std::copy(mix.begin(), mix.end(), spec.mix.begin());
  spec.seed = get_seed();
  spec.image_size = static_cast<int>(get_int("image_size"));
  const auto soft = get_reals("blend_softness");
  spec.blend_softness = {soft[0], soft[1]};
  const auto tone = get_reals("blend_tone");
  spec.blend_tone = {tone[0], tone[1]};
  const auto sigma = get_reals("smooth_sigma");
  spec.smooth_sigma = {sigma[0], sigma[1]};
  spec.texture_flatten = get_real("texture_flatten");
  return spec;
}

face::FaceConfig RunConfig::face_config() const {
  face::FaceConfig c;
  c.input_size = static_cast<int>(get_int("face_size"));
  c.width = static_cast<int>(get_int("face_width"));
  c.head_width = static_cast<int>(get_int("face_head_width"));
  c.feature_dim = static_cast<int>(get_int("feature_dim"));
  c.controller_hidden = static_cast<int>(get_int("controller_hidden"));
  c.moe_layers = static_cast<int>(get_int("moe_layers"));
  c.calibration = static_cast<int>(get_int("face_calibration"));
  c.adalog_padding = parse_padding(get("adalog_padding"));
  c.experts = face::default_experts();
  c.experts[2].bank = {get_reals("fine_bank")};
  c.experts[3].bank = {get_reals("coarse_bank")};
  return c;
}

ctx::ToyConfig RunConfig::toy_config() const {
  ctx::ToyConfig c;
  c.embed_dim = static_cast<int>(get_int("ctx_embed_dim"));
  c.global_dim = static_cast<int>(get_int("ctx_global_dim"));
  c.encoder_width = static_cast<int>(get_int("ctx_encoder_width"));
  return c;
}

ctx::HeadsConfig RunConfig::heads_config() const {
  ctx::HeadsConfig c;
  c.embed_dim = static_cast<int>(get_int("ctx_embed_dim"));
  c.global_dim = static_cast<int>(get_int("ctx_global_dim"));
  c.feature_dim = static_cast<int>(get_int("feature_dim"));
  c.hidden = static_cast<int>(get_int("head_hidden"));
  c.pooling = get("ctx_pooling") == "max" ? ctx::Pooling::max : ctx::Pooling::mean;
  return c;
}

fusion::FusionConfig RunConfig::fusion_config() const {
  fusion::FusionConfig c;
  c.feature_dim = static_cast<int>(get_int("feature_dim"));
  c.hidden = static_cast<int>(get_int("fusion_hidden"));
  c.mode = fusion::parse_mode(get("fusion_mode"));
  return c;
}

StageConfig RunConfig::stage_config(std::string_view stage) const {
  if (stage != "ctx" && stage != "face" && stage != "fusion") {
    throw InvalidArgument("unknown stage '" + std::string(stage) + "' (expected ctx, face or fusion)");
  }
  StageConfig c;
  c.epochs = static_cast<int>(get_int("epochs_" + std::string(stage)));
  c.batch = static_cast<int>(get_int("batch"));
  c.learning_rate = get_real("lr_" + std::string(stage));
  c.momentum = get_real("momentum");
  c.schedule = parse_schedule(get("lr_schedule"));
  c.seed = derive_seed(get_seed(), 0, "stage-" + std::string(stage));
  return c;
}

}  // namespace hufor
