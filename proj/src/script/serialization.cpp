#include "dstage/script/serialization.hpp"

#include "dstage/common/errors.hpp"
#include "dstage/common/schema.hpp"

namespace dstage {
namespace {

const Schema& script_schema() { return Schema::named("script.v1"); }

void throw_first(const ValidationReport& report) {
  const auto& v = report.violations.front();
  throw ParseError(v.path, v.message);
}

void require_definition(std::string_view definition, const Json& doc, const std::string& root) {
  auto report = script_schema().validate_definition(definition, doc, root);
  if (!report.valid()) throw_first(report);
}

std::vector<std::string> strings(const Json& list) {
  std::vector<std::string> out;
  for (const auto& s : list) out.push_back(s.get<std::string>());
  return out;
}

std::optional<std::string> optional_string(const Json& doc, const char* key) {
  if (auto it = doc.find(key); it != doc.end() && it->is_string()) return it->get<std::string>();
  return std::nullopt;
}

ExperimentGoal goal_from(const Json& doc) {
  return {doc.at("statement").get<std::string>(), strings(doc.at("success_criteria"))};
}

InfluenceFactor factor_from(const Json& doc) {
  InfluenceFactor f;
  f.name = doc.at("name").get<std::string>();
  f.description = doc.at("description").get<std::string>();
  for (const auto& level : doc.at("levels")) f.levels.push_back(level_from_json(level));
  f.unit = optional_string(doc, "unit");
  return f;
}

ResponseFactor response_from(const Json& doc) {
  ResponseFactor r;
  r.name = doc.at("name").get<std::string>();
  r.description = doc.at("description").get<std::string>();
  r.kind = *response_kind_from_string(doc.at("kind").get<std::string>());
  if (doc.contains("categories")) r.categories = strings(doc.at("categories"));
  return r;
}

DesignPoint design_point_from(const Json& doc) {
  DesignPoint dp;
  dp.id = doc.at("id").get<std::string>();
  for (const auto& [name, level] : doc.at("assignments").items())
    dp.assignments.emplace(name, level_from_json(level));
  return dp;
}

Provenance provenance_from(const Json& doc) {
  Provenance p;
  if (auto it = doc.find("candidate_index"); it != doc.end() && it->is_number())
    p.candidate_index = it->get<int>();
  if (auto it = doc.find("stage_attempts"); it != doc.end())
    for (const auto& [k, v] : it->items()) p.stage_attempts[k] = v.get<int>();
  p.generator = doc.value("generator", std::string{});
  return p;
}

}  // namespace

Json level_to_json(const LevelValue& level) {
  if (const auto* s = std::get_if<std::string>(&level)) return *s;
  return std::get<double>(level);
}

LevelValue level_from_json(const Json& doc) {
  if (doc.is_string()) return doc.get<std::string>();
  if (doc.is_number()) return doc.get<double>();
  throw ParseError("level", "expected string or number");
}

Json to_json(const UserRequirement& req) {
  Json doc = {{"research_goal", req.research_goal},
              {"core_variables", req.core_variables},
              {"target_object", req.target_object}};
  if (req.narrative) doc["narrative"] = *req.narrative;
  if (req.scenario_tag) doc["scenario_tag"] = *req.scenario_tag;
  return doc;
}

UserRequirement parse_requirement(const Json& doc) {
  auto report = Schema::named("requirement.v1").validate(doc);
  if (!report.valid()) throw_first(report);
  UserRequirement req;
  req.research_goal = doc.at("research_goal").get<std::string>();
  req.core_variables = strings(doc.at("core_variables"));
  req.target_object = doc.at("target_object").get<std::string>();
  req.narrative = optional_string(doc, "narrative");
  req.scenario_tag = optional_string(doc, "scenario_tag");
  return req;
}

Json to_json(const ExperimentGoal& goal) {
  return {{"statement", goal.statement}, {"success_criteria", goal.success_criteria}};
}

Json to_json(const InfluenceFactor& f) {
  Json levels = Json::array();
  for (const auto& level : f.levels) levels.push_back(level_to_json(level));
  Json doc = {{"name", f.name}, {"description", f.description}, {"levels", std::move(levels)}};
  if (f.unit) doc["unit"] = *f.unit;
  return doc;
}

Json to_json(const ResponseFactor& r) {
  Json doc = {{"name", r.name}, {"description", r.description}, {"kind", to_string(r.kind)}};
  if (r.kind != ResponseKind::scalar || !r.categories.empty()) doc["categories"] = r.categories;
  return doc;
}

Json to_json(const DesignPoint& dp) {
  Json assignments = Json::object();
  for (const auto& [name, level] : dp.assignments) assignments[name] = level_to_json(level);
  return {{"id", dp.id}, {"assignments", std::move(assignments)}};
}

Json to_json(const Provenance& p) {
  Json doc = Json::object();
  doc["candidate_index"] = p.candidate_index ? Json(*p.candidate_index) : Json(nullptr);
  doc["stage_attempts"] = Json::object();
  for (const auto& [k, v] : p.stage_attempts) doc["stage_attempts"][k] = v;
  doc["generator"] = p.generator;
  return doc;
}

Json serialize_script(const Script& s) {
  if (auto report = validate_script(s); !report.valid()) throw ValidationError(report);
  Json factors = Json::array(), responses = Json::array(), points = Json::array();
  for (const auto& f : s.factors) factors.push_back(to_json(f));
  for (const auto& r : s.responses) responses.push_back(to_json(r));
  for (const auto& dp : s.design_points) points.push_back(to_json(dp));
  return {{"schema_version", std::string(kScriptSchemaVersion)},
          {"goal", to_json(s.goal)},
          {"factors", std::move(factors)},
          {"responses", std::move(responses)},
          {"design_points", std::move(points)},
          {"perspective", s.perspective},
          {"provenance", to_json(s.provenance)}};
}

std::string serialize_script_text(const Script& s) { return pretty_dump(serialize_script(s)); }

Script parse_script(const Json& doc) {
  if (auto report = script_schema().validate(doc); !report.valid()) throw_first(report);
  Script s;
  s.goal = goal_from(doc.at("goal"));
  for (const auto& f : doc.at("factors")) s.factors.push_back(factor_from(f));
  for (const auto& r : doc.at("responses")) s.responses.push_back(response_from(r));
  for (const auto& dp : doc.at("design_points")) s.design_points.push_back(design_point_from(dp));
  s.perspective = doc.at("perspective").get<std::string>();
  s.provenance = provenance_from(doc.at("provenance"));
  if (auto report = validate_script(s); !report.valid()) {
    const auto& v = report.violations.front();
    throw ParseError("root." + v.path, v.message);
  }
  return s;
}

Script parse_script_text(std::string_view text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ParseError("root", std::string("malformed document: ") + e.what());
  }
  return parse_script(doc);
}

ExperimentGoal parse_goal_section(const Json& doc, const std::string& root) {
  require_definition("goal", doc, root);
  return goal_from(doc);
}

std::vector<InfluenceFactor> parse_factors(const Json& list, const std::string& root) {
  if (!list.is_array()) throw ParseError(root, "expected array");
  std::vector<InfluenceFactor> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    require_definition("factor", list[i], root + "[" + std::to_string(i) + "]");
    out.push_back(factor_from(list[i]));
  }
  return out;
}

std::vector<ResponseFactor> parse_responses(const Json& list, const std::string& root) {
  if (!list.is_array()) throw ParseError(root, "expected array");
  std::vector<ResponseFactor> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    require_definition("response", list[i], root + "[" + std::to_string(i) + "]");
    out.push_back(response_from(list[i]));
  }
  return out;
}

std::vector<DesignPoint> parse_design_points(const Json& list, const std::string& root) {
  if (!list.is_array()) throw ParseError(root, "expected array");
  std::vector<DesignPoint> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    require_definition("design_point", list[i], root + "[" + std::to_string(i) + "]");
    out.push_back(design_point_from(list[i]));
  }
  return out;
}

}  // namespace dstage
