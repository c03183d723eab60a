#include <fstream>
#include <string>

#include "hufor/datasynth.hpp"
#include "hufor/errors.hpp"

namespace hufor::data {

using nlohmann::ordered_json;

namespace {

constexpr std::array<std::string_view, 8> kKnownFields = {"id",     "path",     "label",    "source",
                                                          "width",  "height",   "face_box", "rationale"};

bool is_known(const std::string& key) {
  for (auto k : kKnownFields) {
    if (k == key) return true;
  }
  return false;
}

int get_int(const ordered_json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw ParseError(std::string("missing field \"") + key + "\"", line);
  const auto& v = j.at(key);
  if (!v.is_number_integer()) throw ParseError(std::string("field \"") + key + "\" must be an integer", line);
  return v.get<int>();
}

std::string get_string(const ordered_json& j, const char* key, std::size_t line) {
  if (!j.contains(key)) throw ParseError(std::string("missing field \"") + key + "\"", line);
  const auto& v = j.at(key);
  if (!v.is_string()) throw ParseError(std::string("field \"") + key + "\" must be a string", line);
  return v.get<std::string>();
}

std::vector<int> get_int_array(const ordered_json& v, const char* key, std::size_t line) {
  if (!v.is_array()) throw ParseError(std::string("field \"") + key + "\" must be an array", line);
  std::vector<int> out;
  for (const auto& e : v) {
    if (!e.is_number_integer()) throw ParseError(std::string("field \"") + key + "\" must hold integers", line);
    out.push_back(e.get<int>());
  }
  return out;
}

}  // namespace

Source parse_source(std::string_view name) {
  if (name == "real") return Source::real;
  if (name == "blend_partial") return Source::blend_partial;
  if (name == "smooth_full") return Source::smooth_full;
  throw InvalidArgument("unknown source '" + std::string(name) + "'");
}

std::string_view to_string(Source source) {
  switch (source) {
    case Source::real: return "real";
    case Source::blend_partial: return "blend_partial";
    case Source::smooth_full: return "smooth_full";
  }
  return "?";
}

void Sample::validate() const {
  if (id.empty()) throw ValidationError("sample with empty id");
  if (label != 0 && label != 1) throw ValidationError("sample " + id + ": label must be 0 or 1");
  if ((label == 0) != (source == Source::real)) {
    throw ValidationError("sample " + id + ": label " + std::to_string(label) + " inconsistent with source " +
                          std::string(to_string(source)));
  }
  if (width < 1 || height < 1) throw ValidationError("sample " + id + ": width and height must be positive");
  if (face_box) {
    const Box& b = *face_box;
    if (b.x < 0 || b.y < 0 || b.w < 1 || b.h < 1 || b.x + b.w > width || b.y + b.h > height) {
      throw ValidationError("sample " + id + ": face_box [" + std::to_string(b.x) + ", " + std::to_string(b.y) + ", " +
                            std::to_string(b.w) + ", " + std::to_string(b.h) + "] exceeds image bounds " +
                            std::to_string(width) + "x" + std::to_string(height));
    }
  }
}

std::string format_record(const Sample& s) {
  ordered_json j;
  j["id"] = s.id;
  j["path"] = s.path;
  j["label"] = s.label;
  j["source"] = to_string(s.source);
  j["width"] = s.width;
  j["height"] = s.height;
  if (s.face_box) j["face_box"] = {s.face_box->x, s.face_box->y, s.face_box->w, s.face_box->h};
  if (s.rationale) j["rationale"] = *s.rationale;
  for (const auto& [key, value] : s.extra.items()) j[key] = value;
  return j.dump();
}

Sample parse_record(std::string_view line, std::size_t line_number) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), line_number);
  }
  if (!j.is_object()) throw ParseError("record must be a JSON object", line_number);

  Sample s;
  s.id = get_string(j, "id", line_number);
  s.path = get_string(j, "path", line_number);
  s.label = get_int(j, "label", line_number);
  try {
    s.source = parse_source(get_string(j, "source", line_number));
  } catch (const InvalidArgument& e) {
    throw ParseError(e.what(), line_number);
  }
  s.width = get_int(j, "width", line_number);
  s.height = get_int(j, "height", line_number);
  if (j.contains("face_box") && !j["face_box"].is_null()) {
    const auto v = get_int_array(j["face_box"], "face_box", line_number);
    if (v.size() != 4) throw ParseError("field \"face_box\" must be [x, y, w, h]", line_number);
    s.face_box = Box{v[0], v[1], v[2], v[3]};
  }
  if (j.contains("rationale") && !j["rationale"].is_null()) {
    s.rationale = get_int_array(j["rationale"], "rationale", line_number);
  }
  for (const auto& [key, value] : j.items()) {
    if (!is_known(key)) s.extra[key] = value;
  }
  s.validate();
  return s;
}

std::vector<Sample> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::vector<Sample> out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    out.push_back(parse_record(line, number));
  }
  return out;
}

void write_manifest(std::span<const Sample> samples, const std::filesystem::path& path) {
  for (const auto& s : samples) s.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  for (const auto& s : samples) out << format_record(s) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace hufor::data
