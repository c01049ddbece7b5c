#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dstage/common/errors.hpp"
#include "dstage/common/json.hpp"
#include "dstage/llm/gateway.hpp"
#include "dstage/llm/prompts.hpp"
#include "dstage/script/script.hpp"

namespace dstage::scoring {

/// The six chief-director criteria, in weight order (j = 1..6).
enum class CriterionId {
  scientific_soundness,
  implementation_difficulty,
  conditions_controllability,
  risk_robustness,
  requirement_alignment,
  ethics_compliance,
};

inline constexpr std::size_t kCriterionCount = 6;
inline constexpr std::array<CriterionId, kCriterionCount> kCriteria = {
    CriterionId::scientific_soundness,   CriterionId::implementation_difficulty,
    CriterionId::conditions_controllability, CriterionId::risk_robustness,
    CriterionId::requirement_alignment,  CriterionId::ethics_compliance};

std::string_view to_string(CriterionId id);
std::optional<CriterionId> criterion_from_string(std::string_view text);
std::size_t index_of(CriterionId id);

/// Criterion weights. Each in [0,1], summing to 1 within 1e-9.
class WeightVector {
 public:
  /// 0.15, 0.05, 0.10, 0.05, 0.15, 0.50.
  WeightVector();
  /// Throws ValidationError when the weights are out of range or do not sum to 1.
  explicit WeightVector(std::array<double, kCriterionCount> weights);

  static WeightVector from_json(const Json& doc);
  Json to_json() const;

  double operator[](CriterionId id) const { return weights_[index_of(id)]; }
  const std::array<double, kCriterionCount>& values() const { return weights_; }

  friend bool operator==(const WeightVector&, const WeightVector&) = default;

 private:
  std::array<double, kCriterionCount> weights_;
};

/// Per-criterion scores in [0,100]; the ethics entry is either 0 or 100.
class CriterionScores {
 public:
  /// All zeros.
  CriterionScores() : scores_{} {}
  /// Throws ValidationError when a score is out of range or ethics is not binary.
  explicit CriterionScores(std::array<double, kCriterionCount> scores,
                           std::map<CriterionId, std::string> rationale = {});

  double operator[](CriterionId id) const { return scores_[index_of(id)]; }
  const std::array<double, kCriterionCount>& values() const { return scores_; }
  const std::map<CriterionId, std::string>& rationale() const { return rationale_; }

  static ValidationReport check(std::span<const double, kCriterionCount> scores);

  friend bool operator==(const CriterionScores&, const CriterionScores&) = default;

 private:
  std::array<double, kCriterionCount> scores_;
  std::map<CriterionId, std::string> rationale_;
};

/// Sum over j of w_j * a_j, with no range checks on `scores`.
double weighted_sum(std::span<const double, kCriterionCount> scores, const WeightVector& weights);

double score_total(const CriterionScores& scores, const WeightVector& weights);

struct ScriptEvaluation {
  std::string script_id;
  int candidate_index = 0;
  CriterionScores criterion_scores;
  double total = 0.0;
  bool eliminated = false;
  std::optional<std::string> elimination_reason;
};

Json to_json(const ScriptEvaluation& eval);
ScriptEvaluation evaluation_from_json(const Json& doc);

/// Totals and elimination from the criterion scores. Elimination fires when
/// ethics is 0 or the total is below 50.
ScriptEvaluation make_evaluation(std::string script_id, int candidate_index,
                                 CriterionScores scores, const WeightVector& weights);

class NoAdmissibleScript : public Error {
 public:
  NoAdmissibleScript()
      : Error("no admissible script: every candidate was eliminated; revise the requirement") {}
};

/// Highest-total evaluation that is not eliminated. Totals whose relative
/// difference is below 1e-12 are ties and go to the lowest candidate index.
/// Throws NoAdmissibleScript when every evaluation is eliminated.
std::string select_final(std::span<const ScriptEvaluation> evals);

/// Index into `evals` of the selected evaluation.
std::size_t select_final_index(std::span<const ScriptEvaluation> evals);

class ChiefDirector {
 public:
  ChiefDirector(llm::Gateway& gateway, const llm::PromptLibrary& prompts)
      : gateway_(gateway), prompts_(prompts) {}

  /// Criterion scores come from one structured chief-director response; the
  /// total is always computed here. Unusable output is retried once.
  ScriptEvaluation evaluate_script(const Script& script, const UserRequirement& req,
                                   const WeightVector& weights);

 private:
  llm::Gateway& gateway_;
  const llm::PromptLibrary& prompts_;
};

class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// Per-candidate six-row table, totals, flags and the selection.
Json evaluation_report(std::span<const ScriptEvaluation> evals, const WeightVector& weights,
                       std::span<const Script> scripts = {});
std::string evaluation_report_text(std::span<const ScriptEvaluation> evals,
                                   const WeightVector& weights);

}  // namespace dstage::scoring
