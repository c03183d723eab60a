#include "hufor/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "hufor/errors.hpp"

namespace hufor {

namespace {

constexpr const char* kFormat = "hufor-checkpoint";
constexpr int kVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

std::uint32_t get_u32(const unsigned char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

bool single_is_lossless(const std::vector<double>& values) {
  for (double v : values) {
    const auto f = static_cast<float>(v);
    if (std::bit_cast<std::uint64_t>(static_cast<double>(f)) != std::bit_cast<std::uint64_t>(v)) return false;
  }
  return true;
}

}  // namespace

std::string serialize_checkpoint(const ParameterStore& params, const nlohmann::ordered_json& meta,
                                 StorePrecision precision) {
  nlohmann::ordered_json header;
  header["format"] = kFormat;
  header["version"] = kVersion;
  header["step"] = params.step();
  header["meta"] = meta.is_null() ? nlohmann::ordered_json::object() : meta;
  auto entries = nlohmann::ordered_json::array();

  std::string blob;
  for (const auto& name : params.names()) {
    const Param& p = params.at(name);
    const bool f32 = precision == StorePrecision::single || single_is_lossless(p.value);
    const std::size_t offset = blob.size();
    for (double v : p.value) {
      if (f32) {
        put_u32(blob, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
      } else {
        put_u64(blob, std::bit_cast<std::uint64_t>(v));
      }
    }
    nlohmann::ordered_json e;
    e["name"] = name;
    e["dtype"] = f32 ? "f32" : "f64";
    e["shape"] = p.shape;
    e["offset"] = offset;
    e["byte_length"] = blob.size() - offset;
    entries.push_back(std::move(e));
  }
  header["entries"] = std::move(entries);

  const std::string text = header.dump();
  std::string out;
  out.reserve(8 + text.size() + blob.size());
  put_u64(out, text.size());
  out += text;
  out += blob;
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 8) throw CheckpointFormatError("checkpoint: truncated header length");
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t header_len = get_u64(raw);
  if (header_len > bytes.size() - 8) throw CheckpointFormatError("checkpoint: header_length exceeds file size");

  nlohmann::ordered_json header;
  try {
    header = nlohmann::ordered_json::parse(bytes.substr(8, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointFormatError(std::string("checkpoint: corrupt header (") + e.what() + ")");
  }
  if (!header.is_object() || header.value("format", "") != kFormat) {
    throw CheckpointFormatError("checkpoint: field 'format' missing or not '" + std::string(kFormat) + "'");
  }
  if (!header.contains("version") || header["version"] != kVersion) {
    throw CheckpointFormatError("checkpoint: unsupported 'version'");
  }
  if (!header.contains("entries") || !header["entries"].is_array()) {
    throw CheckpointFormatError("checkpoint: field 'entries' missing");
  }

  const std::size_t blob_begin = 8 + header_len;
  const std::size_t blob_size = bytes.size() - blob_begin;
  Checkpoint ck;
  if (header.contains("step")) ck.params.set_step(header["step"].get<std::uint64_t>());
  if (header.contains("meta")) ck.meta = header["meta"];

  for (const auto& e : header["entries"]) {
    std::string name;
    std::vector<std::size_t> shape;
    std::string dtype;
    std::size_t offset = 0;
    std::size_t length = 0;
    try {
      name = e.at("name").get<std::string>();
      shape = e.at("shape").get<std::vector<std::size_t>>();
      dtype = e.at("dtype").get<std::string>();
      offset = e.at("offset").get<std::size_t>();
      length = e.at("byte_length").get<std::size_t>();
    } catch (const nlohmann::json::exception& ex) {
      throw CheckpointFormatError(std::string("checkpoint: malformed entry (") + ex.what() + ")");
    }
    const std::size_t width = dtype == "f32" ? 4 : dtype == "f64" ? 8 : 0;
    if (width == 0) throw CheckpointFormatError("checkpoint: entry '" + name + "' has unknown dtype '" + dtype + "'");
    const std::size_t n = shape_elements(shape);
    if (length != n * width) {
      throw CheckpointFormatError("checkpoint: entry '" + name + "' byte_length does not match shape " +
                                  shape_to_string(shape));
    }
    if (offset > blob_size || length > blob_size - offset) {
      throw CheckpointFormatError("checkpoint: entry '" + name + "' runs past end of blob (truncated)");
    }
    Param* p = nullptr;
    try {
      p = &ck.params.add(name, shape);
    } catch (const InvalidArgument&) {
      throw CheckpointFormatError("checkpoint: duplicate entry name '" + name + "'");
    }
    const unsigned char* src = raw + blob_begin + offset;
    for (std::size_t i = 0; i < n; ++i) {
      p->value[i] = width == 4 ? static_cast<double>(std::bit_cast<float>(get_u32(src + 4 * i)))
                               : std::bit_cast<double>(get_u64(src + 8 * i));
    }
  }
  return ck;
}

void save_checkpoint(const ParameterStore& params, const std::filesystem::path& path,
                     const nlohmann::ordered_json& meta, StorePrecision precision) {
  const std::string bytes = serialize_checkpoint(params, meta, precision);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace hufor
