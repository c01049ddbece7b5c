#include "dstage/common/json.hpp"

#include <openssl/sha.h>

#include <array>
#include <fstream>
#include <sstream>

#include "dstage/common/errors.hpp"

namespace dstage {

std::string canonical_dump(const Json& doc) {
  // nlohmann::json stores objects in std::map, so keys are already sorted.
  return doc.dump(-1, ' ', false, Json::error_handler_t::strict);
}

std::string pretty_dump(const Json& doc) {
  return doc.dump(2, ' ', false, Json::error_handler_t::strict) + "\n";
}

std::string sha256_hex(std::string_view data) {
  std::array<unsigned char, SHA256_DIGEST_LENGTH> digest{};
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest.data());
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(digest.size() * 2);
  for (unsigned char byte : digest) {
    out.push_back(kHex[byte >> 4]);
    out.push_back(kHex[byte & 0x0f]);
  }
  return out;
}

std::string digest_of(const Json& doc) { return sha256_hex(canonical_dump(doc)); }

Json without_key(const Json& doc, std::string_view key) {
  if (doc.is_object()) {
    Json out = Json::object();
    for (const auto& [k, v] : doc.items()) {
      if (k == key) continue;
      out[k] = without_key(v, key);
    }
    return out;
  }
  if (doc.is_array()) {
    Json out = Json::array();
    for (const auto& v : doc) out.push_back(without_key(v, key));
    return out;
  }
  return doc;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void append_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw Error("cannot append to " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
}

Json read_json_file(const std::filesystem::path& path) {
  try {
    return Json::parse(read_text_file(path));
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string(), e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const Json& doc) {
  write_text_file(path, pretty_dump(doc));
}

}  // namespace dstage
