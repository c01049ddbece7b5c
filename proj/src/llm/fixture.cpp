#include "dstage/llm/fixture.hpp"

#include <sstream>

#include "dstage/common/errors.hpp"

namespace dstage::llm {

std::string_view to_string(GatewayMode mode) {
  switch (mode) {
    case GatewayMode::record: return "record";
    case GatewayMode::replay: return "replay";
    case GatewayMode::live: return "live";
  }
  return "live";
}

Json to_json(const FixtureEntry& e) {
  return {{"request_digest", e.request_digest},
          {"response_text", e.response_text},
          {"metadata", e.metadata}};
}

FixtureEntry fixture_entry_from_json(const Json& doc) {
  FixtureEntry e;
  e.request_digest = doc.at("request_digest").get<std::string>();
  e.response_text = doc.at("response_text").get<std::string>();
  e.metadata = doc.value("metadata", Json::object());
  return e;
}

Fixture::Fixture(std::vector<FixtureEntry> entries) {
  for (auto& e : entries) append(std::move(e));
}

Fixture Fixture::load(const std::filesystem::path& path) { return parse(read_text_file(path)); }

Fixture Fixture::parse(std::string_view text) {
  Fixture fixture;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fixture.append(fixture_entry_from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw ParseError("fixture line " + std::to_string(line_no), e.what());
    }
  }
  return fixture;
}

std::string Fixture::to_text() const {
  std::string out;
  for (const auto& e : entries_) {
    out += canonical_dump(to_json(e));
    out += '\n';
  }
  return out;
}

void Fixture::save(const std::filesystem::path& path) const { write_text_file(path, to_text()); }

void Fixture::append(FixtureEntry entry) {
  index_[entry.request_digest].push_back(entries_.size());
  entries_.push_back(std::move(entry));
}

const std::vector<std::size_t>* Fixture::positions(const std::string& digest) const {
  auto it = index_.find(digest);
  return it == index_.end() ? nullptr : &it->second;
}

}  // namespace dstage::llm
