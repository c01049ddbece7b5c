#pragma once

#include <string>
#include <vector>

#include "dstage/common/errors.hpp"
#include "dstage/common/json.hpp"

namespace dstage {

struct Violation {
  std::string path;
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

/// Outcome of checking a value against its invariants. Empty means valid.
struct ValidationReport {
  std::vector<Violation> violations;

  bool valid() const { return violations.empty(); }
  void add(std::string path, std::string message) {
    violations.push_back({std::move(path), std::move(message)});
  }
  void merge(const ValidationReport& other) {
    violations.insert(violations.end(), other.violations.begin(), other.violations.end());
  }
  std::string summary() const;
  Json to_json() const;

  friend bool operator==(const ValidationReport&, const ValidationReport&) = default;
};

/// Thrown where a caller hands in something that must be valid.
class ValidationError : public Error {
 public:
  explicit ValidationError(ValidationReport report)
      : Error("validation failed: " + report.summary()),
        report_(std::move(report)) {}

  const ValidationReport& report() const noexcept { return report_; }

 private:
  ValidationReport report_;
};

}  // namespace dstage
