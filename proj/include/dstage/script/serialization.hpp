#pragma once

#include <string>
#include <string_view>

#include "dstage/common/json.hpp"
#include "dstage/script/script.hpp"

namespace dstage {

inline constexpr std::string_view kScriptSchemaVersion = "1";

Json level_to_json(const LevelValue& level);
LevelValue level_from_json(const Json& doc);

Json to_json(const UserRequirement& req);
/// Throws ParseError. Does not check the essential-element invariants; use
/// validate_requirement for that.
UserRequirement parse_requirement(const Json& doc);

Json to_json(const ExperimentGoal& goal);
Json to_json(const InfluenceFactor& factor);
Json to_json(const ResponseFactor& response);
Json to_json(const DesignPoint& point);
Json to_json(const Provenance& provenance);

/// Script document with a schema_version field. Throws ValidationError when
/// the script is not structurally valid.
Json serialize_script(const Script& script);
std::string serialize_script_text(const Script& script);

/// Validates against the shipped script schema and the Script invariants.
/// Throws ParseError carrying the first offending path.
Script parse_script(const Json& doc);
Script parse_script_text(std::string_view text);

/// Section decoders shared with the composition pipeline. They check the
/// section schema only; cross-section invariants are validate_script's job.
ExperimentGoal parse_goal_section(const Json& doc, const std::string& root = "root");
std::vector<InfluenceFactor> parse_factors(const Json& list, const std::string& root);
std::vector<ResponseFactor> parse_responses(const Json& list, const std::string& root);
std::vector<DesignPoint> parse_design_points(const Json& list, const std::string& root);

}  // namespace dstage
