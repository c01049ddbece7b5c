#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

namespace dstage {

using Json = nlohmann::json;

/// Compact form with sorted keys. Used for digests and line-delimited records.
std::string canonical_dump(const Json& doc);

/// Two-space indented form with sorted keys and a trailing newline. Used for
/// every document written to disk.
std::string pretty_dump(const Json& doc);

std::string sha256_hex(std::string_view data);

/// Digest of the canonical form of `doc`.
std::string digest_of(const Json& doc);

/// Copy of `doc` with every object member named `key` removed, recursively.
Json without_key(const Json& doc, std::string_view key);

std::string read_text_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames, so readers never observe a
/// half-written file.
void write_text_file(const std::filesystem::path& path, std::string_view text);

void append_text_file(const std::filesystem::path& path, std::string_view text);

Json read_json_file(const std::filesystem::path& path);

void write_json_file(const std::filesystem::path& path, const Json& doc);

}  // namespace dstage
