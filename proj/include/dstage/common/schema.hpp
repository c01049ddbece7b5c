#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dstage/common/json.hpp"
#include "dstage/common/validation.hpp"

namespace dstage {

/// Structural validator for the JSON Schema subset the shipped schemas use:
/// type (single or list), required, properties, additionalProperties (bool),
/// items, minItems, maxItems, enum, minimum, maximum, minLength, and local
/// "$ref" to "#/definitions/<name>" or "<schema>#/definitions/<name>".
class Schema {
 public:
  explicit Schema(Json document);

  /// Loads the embedded asset "schemas/<name>.json".
  static const Schema& named(std::string_view name);

  const std::string& name() const { return name_; }
  const Json& document() const { return doc_; }

  /// Violations carry paths rooted at `root`, e.g. "root.factors[0].levels".
  ValidationReport validate(const Json& value, const std::string& root = "root") const;

  /// Validates against `definitions/<definition>` of this schema.
  ValidationReport validate_definition(std::string_view definition, const Json& value,
                                       const std::string& root) const;

 private:
  void check(const Json& node_schema, const Json& value, const std::string& path,
             ValidationReport& report) const;
  std::pair<const Schema*, const Json*> resolve(const Json& node_schema) const;

  std::string name_;
  Json doc_;
};

}  // namespace dstage
