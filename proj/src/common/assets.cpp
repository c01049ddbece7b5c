#include "dstage/common/assets.hpp"

#include <stdexcept>

namespace dstage::assets {

std::string_view get(std::string_view path) {
  for (const auto& entry : detail::table()) {
    if (entry.path == path) return entry.content;
  }
  throw std::out_of_range("no embedded asset named '" + std::string(path) + "'");
}

bool contains(std::string_view path) {
  for (const auto& entry : detail::table()) {
    if (entry.path == path) return true;
  }
  return false;
}

std::vector<std::string> list(std::string_view prefix) {
  std::vector<std::string> out;
  for (const auto& entry : detail::table()) {
    if (entry.path.substr(0, prefix.size()) == prefix) out.emplace_back(entry.path);
  }
  return out;
}

}  // namespace dstage::assets
