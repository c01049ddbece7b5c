#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace dstage::assets {

struct AssetEntry {
  std::string_view path;
  std::string_view content;
};

namespace detail {
const std::vector<AssetEntry>& table();
}  // namespace detail

/// Returns the embedded asset at `path` (relative to the assets/ directory).
/// Throws std::out_of_range when no such asset was compiled in.
std::string_view get(std::string_view path);

bool contains(std::string_view path);

std::vector<std::string> list(std::string_view prefix = {});

}  // namespace dstage::assets
