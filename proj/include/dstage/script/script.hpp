#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "dstage/common/validation.hpp"

namespace dstage {

/// A factor level is either a label or a number.
using LevelValue = std::variant<std::string, double>;

std::string level_to_string(const LevelValue& level);

/// What the user asks for. The three essential elements are the research
/// goal, at least one core variable, and the target object.
struct UserRequirement {
  std::string research_goal;
  std::vector<std::string> core_variables;
  std::string target_object;
  std::optional<std::string> narrative;
  std::optional<std::string> scenario_tag;

  friend bool operator==(const UserRequirement&, const UserRequirement&) = default;
};

struct ExperimentGoal {
  std::string statement;
  std::vector<std::string> success_criteria;

  friend bool operator==(const ExperimentGoal&, const ExperimentGoal&) = default;
};

struct InfluenceFactor {
  std::string name;
  std::string description;
  std::vector<LevelValue> levels;
  std::optional<std::string> unit;

  friend bool operator==(const InfluenceFactor&, const InfluenceFactor&) = default;
};

enum class ResponseKind { scalar, probability_vector, categorical };

std::string_view to_string(ResponseKind kind);
std::optional<ResponseKind> response_kind_from_string(std::string_view text);

struct ResponseFactor {
  std::string name;
  std::string description;
  ResponseKind kind = ResponseKind::scalar;
  std::vector<std::string> categories;

  friend bool operator==(const ResponseFactor&, const ResponseFactor&) = default;
};

/// One experimental condition: a level for each relevant influence factor.
struct DesignPoint {
  std::string id;
  std::map<std::string, LevelValue> assignments;

  friend bool operator==(const DesignPoint&, const DesignPoint&) = default;
};

struct Provenance {
  std::optional<int> candidate_index;
  /// Drafts + rewrites spent per pipeline stage, keyed by stage name.
  std::map<std::string, int> stage_attempts;
  std::string generator;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// The experiment plan: goal, influence factors, response factors and design
/// points. A Script is always complete; in-flight drafts live in the pipeline.
struct Script {
  ExperimentGoal goal;
  std::vector<InfluenceFactor> factors;
  std::vector<ResponseFactor> responses;
  std::vector<DesignPoint> design_points;
  std::string perspective;
  Provenance provenance;

  const InfluenceFactor* find_factor(std::string_view name) const;
  const ResponseFactor* find_response(std::string_view name) const;
  std::vector<std::string> factor_names() const;

  friend bool operator==(const Script&, const Script&) = default;
};

/// Stable identifier of a pipeline candidate: "script-<index+1>".
std::string script_id_for_candidate(int candidate_index);
std::string script_id(const Script& script);

ValidationReport validate_requirement(const UserRequirement& req);

/// Checks every Script invariant. Paths look like
/// `design_points[3].assignments["weather"]`. Pure and deterministic.
ValidationReport validate_script(const Script& script);

/// Checks the invariants that concern only the factor list.
ValidationReport validate_factors(const std::vector<InfluenceFactor>& factors);

/// Cartesian product of all factor levels, ordered lexicographically by
/// factor name (first name varies slowest) and then by level index.
/// Throws CapExceededError when the product exceeds `cap`.
std::vector<DesignPoint> full_factorial_design(const std::vector<InfluenceFactor>& factors,
                                               std::size_t cap);

class CapExceededError : public Error {
 public:
  CapExceededError(std::size_t product, std::size_t cap);
  std::size_t product() const noexcept { return product_; }

 private:
  std::size_t product_;
};

}  // namespace dstage
