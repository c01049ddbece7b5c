#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dstage/common/json.hpp"

namespace dstage::llm {

enum class GatewayMode { record, replay, live };

std::string_view to_string(GatewayMode mode);

struct FixtureEntry {
  std::string request_digest;
  std::string response_text;
  /// role_id, the full request document, and the model that answered.
  Json metadata = Json::object();

  friend bool operator==(const FixtureEntry&, const FixtureEntry&) = default;
};

Json to_json(const FixtureEntry& entry);
FixtureEntry fixture_entry_from_json(const Json& doc);

/// Ordered log of recorded provider exchanges. On disk: one canonical JSON
/// object per line (see docs/fixture_format.md).
class Fixture {
 public:
  Fixture() = default;
  explicit Fixture(std::vector<FixtureEntry> entries);

  static Fixture load(const std::filesystem::path& path);
  static Fixture parse(std::string_view text);
  void save(const std::filesystem::path& path) const;
  std::string to_text() const;

  void append(FixtureEntry entry);

  const std::vector<FixtureEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  /// Positions of the entries recorded for `digest`, in recording order.
  const std::vector<std::size_t>* positions(const std::string& digest) const;

 private:
  std::vector<FixtureEntry> entries_;
  std::map<std::string, std::vector<std::size_t>> index_;
};

}  // namespace dstage::llm
