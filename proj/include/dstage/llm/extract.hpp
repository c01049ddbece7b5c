#pragma once

#include <optional>

#include <string>
#include <string_view>

#include "dstage/common/errors.hpp"
#include "dstage/common/json.hpp"
#include "dstage/common/schema.hpp"

namespace dstage::llm {

class ExtractionError : public Error {
 public:
  using Error::Error;
};

/// Scans `text` left to right for JSON objects or arrays, skipping prose and
/// code fences. Returns the first one that parses and satisfies `schema`;
/// documents that parse but fail the schema are skipped as a whole.
Json extract_structured(std::string_view text, const Schema& schema);
Json extract_structured(std::string_view text, std::string_view schema_name);

/// A rating given either as {"score": n} or as a bare number, clamped to
/// [lo, hi]. Nothing when neither form is present.
std::optional<double> extract_score(std::string_view text, double lo = 0.0, double hi = 100.0);

}  // namespace dstage::llm
