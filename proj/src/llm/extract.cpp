#include "dstage/llm/extract.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace dstage::llm {
namespace {

/// End offset (exclusive) of the bracketed span opening at `start`, honoring
/// JSON string literals, or nullopt when brackets do not balance.
std::optional<std::size_t> balanced_end(std::string_view text, std::size_t start) {
  std::vector<char> closers;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) escaped = false;
      else if (c == '\\') escaped = true;
      else if (c == '"') in_string = false;
      continue;
    }
    switch (c) {
      case '"': in_string = true; break;
      case '{': closers.push_back('}'); break;
      case '[': closers.push_back(']'); break;
      case '}':
      case ']':
        if (closers.empty() || closers.back() != c) return std::nullopt;
        closers.pop_back();
        if (closers.empty()) return i + 1;
        break;
      default: break;
    }
  }
  return std::nullopt;
}

}  // namespace

Json extract_structured(std::string_view text, const Schema& schema) {
  std::string last_violation;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto start = text.find_first_of("{[", pos);
    if (start == std::string_view::npos) break;
    const auto end = balanced_end(text, start);
    if (!end) {
      pos = start + 1;
      continue;
    }
    Json doc = Json::parse(text.substr(start, *end - start), nullptr, false);
    if (doc.is_discarded()) {
      pos = start + 1;
      continue;
    }
    auto report = schema.validate(doc);
    if (report.valid()) return doc;
    last_violation = report.summary();
    pos = *end;
  }
  if (!last_violation.empty())
    throw ExtractionError("no document satisfies schema '" + schema.name() + "': " + last_violation);
  throw ExtractionError("no JSON document found in response");
}

Json extract_structured(std::string_view text, std::string_view schema_name) {
  return extract_structured(text, Schema::named(schema_name));
}

std::optional<double> extract_score(std::string_view text, double lo, double hi) {
  try {
    const auto doc = extract_structured(text, "judge_scalar.v1");
    const double v = doc.at("score").get<double>();
    if (std::isfinite(v)) return std::clamp(v, lo, hi);
  } catch (const ExtractionError&) {
  }
  std::string trimmed(text);
  trimmed.erase(0, trimmed.find_first_not_of(" \t\r\n"));
  trimmed.erase(trimmed.find_last_not_of(" \t\r\n") + 1);
  if (trimmed.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(trimmed, &used);
    if (used == trimmed.size() && std::isfinite(v)) return std::clamp(v, lo, hi);
  } catch (const std::exception&) {
  }
  return std::nullopt;
}

}  // namespace dstage::llm
