#include "dstage/script/script.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>

#include "dstage/common/json.hpp"

namespace dstage {
namespace {

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

std::string json_quote(std::string_view s) { return Json(std::string(s)).dump(); }

}  // namespace

std::string level_to_string(const LevelValue& level) {
  if (const auto* s = std::get_if<std::string>(&level)) return *s;
  const double d = std::get<double>(level);
  if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 1e15)
    return std::to_string(static_cast<long long>(d));
  return Json(d).dump();
}

std::string_view to_string(ResponseKind kind) {
  switch (kind) {
    case ResponseKind::scalar: return "scalar";
    case ResponseKind::probability_vector: return "probability_vector";
    case ResponseKind::categorical: return "categorical";
  }
  return "scalar";
}

std::optional<ResponseKind> response_kind_from_string(std::string_view text) {
  if (text == "scalar") return ResponseKind::scalar;
  if (text == "probability_vector") return ResponseKind::probability_vector;
  if (text == "categorical") return ResponseKind::categorical;
  return std::nullopt;
}

const InfluenceFactor* Script::find_factor(std::string_view name) const {
  for (const auto& f : factors)
    if (f.name == name) return &f;
  return nullptr;
}

const ResponseFactor* Script::find_response(std::string_view name) const {
  for (const auto& r : responses)
    if (r.name == name) return &r;
  return nullptr;
}

std::vector<std::string> Script::factor_names() const {
  std::vector<std::string> names;
  names.reserve(factors.size());
  for (const auto& f : factors) names.push_back(f.name);
  return names;
}

std::string script_id_for_candidate(int candidate_index) {
  return "script-" + std::to_string(candidate_index + 1);
}

std::string script_id(const Script& script) {
  return script_id_for_candidate(script.provenance.candidate_index.value_or(0));
}

ValidationReport validate_requirement(const UserRequirement& req) {
  ValidationReport report;
  if (blank(req.research_goal)) report.add("research_goal", "research goal is missing");
  const bool any_variable = std::any_of(req.core_variables.begin(), req.core_variables.end(),
                                        [](const std::string& v) { return !blank(v); });
  if (!any_variable) report.add("core_variables", "at least one core variable is required");
  if (blank(req.target_object)) report.add("target_object", "target object is missing");
  return report;
}

ValidationReport validate_factors(const std::vector<InfluenceFactor>& factors) {
  ValidationReport report;
  if (factors.empty()) report.add("factors", "at least one influence factor is required");
  std::map<std::string, std::size_t> seen;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const auto& f = factors[i];
    const std::string at = "factors[" + std::to_string(i) + "]";
    if (blank(f.name)) {
      report.add(at + ".name", "factor name is empty");
    } else if (auto [it, inserted] = seen.emplace(f.name, i); !inserted) {
      report.add(at + ".name", "duplicate factor name " + json_quote(f.name) + " (first declared at factors[" +
                                   std::to_string(it->second) + "])");
    }
    std::set<LevelValue> distinct(f.levels.begin(), f.levels.end());
    if (distinct.size() < 2)
      report.add(at + ".levels", "needs at least 2 distinct levels, has " +
                                     std::to_string(distinct.size()));
  }
  return report;
}

ValidationReport validate_script(const Script& s) {
  ValidationReport report;
  if (blank(s.goal.statement)) report.add("goal.statement", "goal statement is empty");

  report.merge(validate_factors(s.factors));

  if (s.responses.empty()) report.add("responses", "at least one response factor is required");
  std::map<std::string, std::size_t> seen_responses;
  for (std::size_t i = 0; i < s.responses.size(); ++i) {
    const auto& r = s.responses[i];
    const std::string at = "responses[" + std::to_string(i) + "]";
    if (blank(r.name)) {
      report.add(at + ".name", "response name is empty");
    } else if (auto [it, inserted] = seen_responses.emplace(r.name, i); !inserted) {
      report.add(at + ".name", "duplicate response name " + json_quote(r.name));
    }
    std::set<std::string> distinct(r.categories.begin(), r.categories.end());
    if (r.kind == ResponseKind::scalar) {
      if (!r.categories.empty()) report.add(at + ".categories", "scalar responses take no categories");
    } else {
      if (r.categories.size() < 2)
        report.add(at + ".categories", std::string(to_string(r.kind)) + " needs at least 2 categories");
      else if (distinct.size() != r.categories.size())
        report.add(at + ".categories", "categories must be distinct");
    }
  }

  if (s.design_points.empty()) report.add("design_points", "at least one design point is required");
  std::set<std::string> seen_points;
  for (std::size_t i = 0; i < s.design_points.size(); ++i) {
    const auto& dp = s.design_points[i];
    const std::string at = "design_points[" + std::to_string(i) + "]";
    if (blank(dp.id)) {
      report.add(at + ".id", "design point id is empty");
    } else if (!seen_points.insert(dp.id).second) {
      report.add(at + ".id", "duplicate design point id " + json_quote(dp.id));
    }
    if (dp.assignments.empty()) report.add(at + ".assignments", "design point assigns no factor");
    for (const auto& [name, level] : dp.assignments) {
      const std::string key_at = at + ".assignments[" + json_quote(name) + "]";
      const auto* factor = s.find_factor(name);
      if (factor == nullptr) {
        report.add(key_at, "names no declared influence factor");
        continue;
      }
      if (std::find(factor->levels.begin(), factor->levels.end(), level) == factor->levels.end())
        report.add(key_at, "level " + json_quote(level_to_string(level)) + " is not a level of factor " +
                               json_quote(name));
    }
  }
  return report;
}

CapExceededError::CapExceededError(std::size_t product, std::size_t cap)
    : Error("full factorial design needs " + std::to_string(product) +
            " design points, which exceeds the cap of " + std::to_string(cap)),
      product_(product) {}

std::vector<DesignPoint> full_factorial_design(const std::vector<InfluenceFactor>& factors,
                                               std::size_t cap) {
  if (factors.empty()) throw Error("full factorial design needs at least one factor");
  std::vector<const InfluenceFactor*> order;
  for (const auto& f : factors) order.push_back(&f);
  std::sort(order.begin(), order.end(),
            [](const auto* a, const auto* b) { return a->name < b->name; });

  std::size_t product = 1;
  bool overflow = false;
  for (const auto* f : order) {
    if (f->levels.empty()) throw Error("factor '" + f->name + "' has no levels");
    if (product > std::numeric_limits<std::size_t>::max() / f->levels.size()) overflow = true;
    product = overflow ? std::numeric_limits<std::size_t>::max() : product * f->levels.size();
  }
  if (product > cap) throw CapExceededError(product, cap);

  std::vector<DesignPoint> points;
  points.reserve(product);
  std::vector<std::size_t> index(order.size(), 0);
  const int width = static_cast<int>(std::to_string(product).size());
  for (std::size_t n = 0; n < product; ++n) {
    DesignPoint dp;
    std::string num = std::to_string(n + 1);
    dp.id = "dp-" + std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(num.size()))), '0') + num;
    for (std::size_t k = 0; k < order.size(); ++k) dp.assignments[order[k]->name] = order[k]->levels[index[k]];
    points.push_back(std::move(dp));
    // Odometer increment: the last factor varies fastest.
    for (std::size_t k = order.size(); k-- > 0;) {
      if (++index[k] < order[k]->levels.size()) break;
      index[k] = 0;
    }
  }
  return points;
}

}  // namespace dstage
