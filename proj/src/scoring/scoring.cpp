#include "dstage/scoring/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dstage/llm/extract.hpp"
#include "dstage/pipeline/composition.hpp"
#include "dstage/script/serialization.hpp"

namespace dstage::scoring {
namespace {

constexpr std::array<std::string_view, kCriterionCount> kNames = {
    "scientific_soundness", "implementation_difficulty", "conditions_controllability",
    "risk_robustness",      "requirement_alignment",     "ethics_compliance"};

constexpr std::array<std::string_view, kCriterionCount> kLabels = {
    "Core scientific soundness",
    "Experimental implementation difficulty",
    "Experimental conditions and controllability",
    "Risk and robustness",
    "Requirement alignment",
    "Ethics and compliance"};

constexpr double kPassMark = 50.0;

bool totals_tied(double a, double b) {
  const double scale = std::max(std::fabs(a), std::fabs(b));
  return std::fabs(a - b) <= 1e-12 * scale;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string_view to_string(CriterionId id) { return kNames[index_of(id)]; }

std::optional<CriterionId> criterion_from_string(std::string_view text) {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == text) return kCriteria[i];
  return std::nullopt;
}

std::size_t index_of(CriterionId id) { return static_cast<std::size_t>(id); }

WeightVector::WeightVector() : weights_{0.15, 0.05, 0.10, 0.05, 0.15, 0.50} {}

WeightVector::WeightVector(std::array<double, kCriterionCount> weights) : weights_(weights) {
  ValidationReport report;
  double sum = 0.0;
  for (std::size_t i = 0; i < kCriterionCount; ++i) {
    if (!(weights_[i] >= 0.0 && weights_[i] <= 1.0))
      report.add("weights." + std::string(kNames[i]), "weight must lie in [0,1]");
    sum += weights_[i];
  }
  if (std::fabs(sum - 1.0) > 1e-9) report.add("weights", "weights sum to " + std::to_string(sum) + ", not 1");
  if (!report.valid()) throw ValidationError(report);
}

WeightVector WeightVector::from_json(const Json& doc) {
  std::array<double, kCriterionCount> w{};
  for (std::size_t i = 0; i < kCriterionCount; ++i) {
    const std::string key(kNames[i]);
    if (!doc.contains(key) || !doc.at(key).is_number()) {
      ValidationReport report;
      report.add("weights." + key, "missing numeric weight");
      throw ValidationError(report);
    }
    w[i] = doc.at(key).get<double>();
  }
  return WeightVector(w);
}

Json WeightVector::to_json() const {
  Json doc = Json::object();
  for (std::size_t i = 0; i < kCriterionCount; ++i) doc[std::string(kNames[i])] = weights_[i];
  return doc;
}

ValidationReport CriterionScores::check(std::span<const double, kCriterionCount> scores) {
  ValidationReport report;
  for (std::size_t i = 0; i < kCriterionCount; ++i)
    if (!(scores[i] >= 0.0 && scores[i] <= 100.0))
      report.add("scores." + std::string(kNames[i]), "score must lie in [0,100]");
  const double ethics = scores[index_of(CriterionId::ethics_compliance)];
  if (ethics != 0.0 && ethics != 100.0)
    report.add("scores.ethics_compliance", "ethics score must be 0 or 100");
  return report;
}

CriterionScores::CriterionScores(std::array<double, kCriterionCount> scores,
                                 std::map<CriterionId, std::string> rationale)
    : scores_(scores), rationale_(std::move(rationale)) {
  if (auto report = check(scores_); !report.valid()) throw ValidationError(report);
}

double weighted_sum(std::span<const double, kCriterionCount> scores, const WeightVector& weights) {
  double total = 0.0;
  for (std::size_t i = 0; i < kCriterionCount; ++i) total += weights.values()[i] * scores[i];
  return total;
}

double score_total(const CriterionScores& scores, const WeightVector& weights) {
  return weighted_sum(scores.values(), weights);
}

ScriptEvaluation make_evaluation(std::string script_id, int candidate_index,
                                 CriterionScores scores, const WeightVector& weights) {
  ScriptEvaluation eval;
  eval.script_id = std::move(script_id);
  eval.candidate_index = candidate_index;
  eval.total = std::clamp(score_total(scores, weights), 0.0, 100.0);
  const bool ethics_failed = scores[CriterionId::ethics_compliance] == 0.0;
  // Both rules are reported when both fire.
  std::vector<std::string> reasons;
  if (ethics_failed) reasons.push_back("ethics and compliance criterion failed (score 0)");
  if (eval.total < kPassMark) reasons.push_back("weighted total " + format_number(eval.total) + " falls below 50");
  if (!reasons.empty()) {
    eval.eliminated = true;
    eval.elimination_reason = reasons.size() == 1 ? reasons[0] : reasons[0] + "; " + reasons[1];
  }
  eval.criterion_scores = std::move(scores);
  return eval;
}

Json to_json(const ScriptEvaluation& eval) {
  Json scores = Json::object();
  Json rationale = Json::object();
  for (auto id : kCriteria) {
    scores[std::string(to_string(id))] = eval.criterion_scores[id];
    if (auto it = eval.criterion_scores.rationale().find(id); it != eval.criterion_scores.rationale().end())
      rationale[std::string(to_string(id))] = it->second;
  }
  return {{"script_id", eval.script_id},
          {"candidate_index", eval.candidate_index},
          {"scores", std::move(scores)},
          {"rationale", std::move(rationale)},
          {"total", eval.total},
          {"eliminated", eval.eliminated},
          {"elimination_reason",
           eval.elimination_reason ? Json(*eval.elimination_reason) : Json(nullptr)}};
}

ScriptEvaluation evaluation_from_json(const Json& doc) {
  std::array<double, kCriterionCount> values{};
  std::map<CriterionId, std::string> rationale;
  for (auto id : kCriteria) {
    const std::string key(to_string(id));
    values[index_of(id)] = doc.at("scores").at(key).get<double>();
    if (doc.contains("rationale") && doc.at("rationale").contains(key))
      rationale[id] = doc.at("rationale").at(key).get<std::string>();
  }
  ScriptEvaluation eval;
  eval.script_id = doc.at("script_id").get<std::string>();
  eval.candidate_index = doc.at("candidate_index").get<int>();
  eval.criterion_scores = CriterionScores(values, std::move(rationale));
  eval.total = doc.at("total").get<double>();
  eval.eliminated = doc.at("eliminated").get<bool>();
  if (const auto& r = doc.at("elimination_reason"); r.is_string()) eval.elimination_reason = r.get<std::string>();
  return eval;
}

std::size_t select_final_index(std::span<const ScriptEvaluation> evals) {
  if (evals.empty()) throw Error("select_final needs at least one evaluation");
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < evals.size(); ++i) {
    const auto& e = evals[i];
    if (e.eliminated) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = evals[*best];
    if (totals_tied(e.total, b.total)) {
      if (e.candidate_index < b.candidate_index) best = i;
    } else if (e.total > b.total) {
      best = i;
    }
  }
  if (!best) throw NoAdmissibleScript();
  return *best;
}

std::string select_final(std::span<const ScriptEvaluation> evals) {
  return evals[select_final_index(evals)].script_id;
}

ScriptEvaluation ChiefDirector::evaluate_script(const Script& script, const UserRequirement& req,
                                                const WeightVector& weights) {
  if (auto report = validate_script(script); !report.valid()) throw ValidationError(report);
  const auto id = script_id(script);
  const auto prompt = prompts_.render("chief_director.v1",
                                      {{"requirement", pipeline::describe_requirement(req)},
                                       {"script_id", id},
                                       {"perspective", script.perspective},
                                       {"script", pretty_dump(serialize_script(script))}});
  const auto request =
      gateway_.request(llm::roles::kChiefDirector, prompt.system, prompt.user, "chief_evaluation.v1");
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const auto raw = gateway_.complete(request);
    try {
      const auto doc = llm::extract_structured(raw, "chief_evaluation.v1");
      std::array<double, kCriterionCount> values{};
      std::map<CriterionId, std::string> rationale;
      for (auto c : kCriteria) {
        const auto& entry = doc.at("scores").at(std::string(to_string(c)));
        values[index_of(c)] = entry.at("score").get<double>();
        rationale[c] = entry.value("rationale", std::string{});
      }
      return make_evaluation(id, script.provenance.candidate_index.value_or(0),
                             CriterionScores(values, std::move(rationale)), weights);
    } catch (const llm::ExtractionError& e) {
      last_error = e.what();
    }
  }
  throw EvaluationError("chief director output for " + id + " unusable after retry: " + last_error);
}

Json evaluation_report(std::span<const ScriptEvaluation> evals, const WeightVector& weights,
                       std::span<const Script> scripts) {
  Json candidates = Json::array();
  for (const auto& e : evals) {
    Json rows = Json::array();
    for (auto c : kCriteria) {
      auto it = e.criterion_scores.rationale().find(c);
      rows.push_back({{"criterion", to_string(c)},
                      {"label", kLabels[index_of(c)]},
                      {"weight", weights[c]},
                      {"score", e.criterion_scores[c]},
                      {"rationale", it == e.criterion_scores.rationale().end() ? "" : it->second}});
    }
    Json entry = {{"script_id", e.script_id},
                  {"candidate_index", e.candidate_index},
                  {"criteria", std::move(rows)},
                  {"total", e.total},
                  {"eliminated", e.eliminated},
                  {"elimination_reason",
                   e.elimination_reason ? Json(*e.elimination_reason) : Json(nullptr)}};
    for (const auto& s : scripts)
      if (s.provenance.candidate_index == e.candidate_index) entry["perspective"] = s.perspective;
    candidates.push_back(std::move(entry));
  }
  Json report = {{"weights", weights.to_json()}, {"candidates", std::move(candidates)}};
  try {
    report["selected"] = evals.empty() ? Json(nullptr) : Json(select_final(evals));
    report["no_admissible_script"] = false;
  } catch (const NoAdmissibleScript&) {
    report["selected"] = nullptr;
    report["no_admissible_script"] = true;
  }
  return report;
}

std::string evaluation_report_text(std::span<const ScriptEvaluation> evals,
                                   const WeightVector& weights) {
  std::string out;
  for (const auto& e : evals) {
    out += e.script_id + "\n";
    for (auto c : kCriteria) {
      char line[160];
      std::snprintf(line, sizeof line, "  %-45s w=%.2f  score=%6.2f\n",
                    std::string(kLabels[index_of(c)]).c_str(), weights[c], e.criterion_scores[c]);
      out += line;
    }
    out += "  total " + format_number(e.total);
    if (e.eliminated) out += "  ELIMINATED: " + e.elimination_reason.value_or("");
    out += "\n";
  }
  try {
    if (!evals.empty()) out += "selected: " + select_final(evals) + "\n";
  } catch (const NoAdmissibleScript& err) {
    out += std::string(err.what()) + "\n";
  }
  return out;
}

}  // namespace dstage::scoring
