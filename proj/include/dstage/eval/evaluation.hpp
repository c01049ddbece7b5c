#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dstage/common/date.hpp"
#include "dstage/common/errors.hpp"
#include "dstage/common/json.hpp"
#include "dstage/llm/gateway.hpp"
#include "dstage/llm/prompts.hpp"
#include "dstage/sim/simulation.hpp"

namespace dstage::eval {

struct TimelineRow {
  CalendarDate date;
  std::string event;
  std::string actions;

  friend bool operator==(const TimelineRow&, const TimelineRow&) = default;
};

/// Reference history a run is compared against. Rows are in strictly
/// increasing date order.
struct HistoricalTimeline {
  std::string scenario;
  std::string expected_category;
  std::vector<TimelineRow> rows;

  static HistoricalTimeline from_json(const Json& doc);
  static HistoricalTimeline load(const std::filesystem::path& path);
};

Json to_json(const HistoricalTimeline& timeline);

struct AlignedRow {
  TimelineRow row;
  /// "<name>: <decision>" lines for the row's date in channel order; empty
  /// when the run has no decisions on that date.
  std::string simulated;
};

std::vector<AlignedRow> align(const sim::RunLog& run, const HistoricalTimeline& timeline);

class DegenerateEmbeddingError : public Error {
 public:
  DegenerateEmbeddingError() : Error("degenerate embedding") {}
};

/// Cosine of two equal-length vectors. Throws DegenerateEmbeddingError for a
/// zero vector and Error for mismatched lengths.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// 100 x cosine, clamped to [0, 100].
double embedding_similarity(std::span<const double> a, std::span<const double> b);
double embedding_similarity(std::string_view a, std::string_view b, llm::Gateway& embedder);

/// Judge rating in [0, 100]. Unparseable output is retried once, then
/// raises EvaluationError.
double judge_similarity(std::string_view a, std::string_view b, llm::Gateway& gateway,
                        const llm::PromptLibrary& prompts = llm::PromptLibrary::builtin());

class EvaluationError : public Error {
 public:
  using Error::Error;
};

struct RowScore {
  CalendarDate date;
  std::string historical_actions;
  std::string simulated_decisions;
  std::optional<double> embedding_score;
  std::optional<double> judge_score;
  std::vector<std::string> errors;
};

struct OutcomeMatch {
  std::string expected_category;
  std::string actual_category;
  bool matched = false;
};

struct SimilarityReport {
  std::vector<RowScore> per_row;
  /// Means over rows with a simulated counterpart; absent when there is none.
  std::optional<double> mean_embedding;
  std::optional<double> mean_judge;
  /// All historical actions against all aligned decisions, as one text each.
  std::optional<double> transcript_embedding;
  std::optional<double> transcript_judge;
  OutcomeMatch outcome_match;
};

struct EvaluateOptions {
  bool use_judge = true;
  bool whole_transcript = true;
};

/// Requires a sealed run. Component failures are recorded per row and the
/// affected score is left absent.
SimilarityReport evaluate_run(const sim::RunLog& run, const HistoricalTimeline& timeline,
                              llm::Gateway& embedder, llm::Gateway& judge, EvaluateOptions options = {},
                              const llm::PromptLibrary& prompts = llm::PromptLibrary::builtin());

Json to_json(const SimilarityReport& report);
std::string report_text(const SimilarityReport& report);

}  // namespace dstage::eval
