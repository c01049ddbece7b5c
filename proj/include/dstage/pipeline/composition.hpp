#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dstage/common/errors.hpp"
#include "dstage/common/json.hpp"
#include "dstage/llm/gateway.hpp"
#include "dstage/llm/prompts.hpp"
#include "dstage/script/script.hpp"

namespace dstage::pipeline {

/// Assembly-line stages, in order. Each reviewed stage has one director.
enum class Stage { goal, factors, design_points, format_check, complete };

inline constexpr std::array<Stage, 4> kReviewedStages = {Stage::goal, Stage::factors,
                                                         Stage::design_points, Stage::format_check};

std::string_view to_string(Stage stage);
std::optional<Stage> stage_from_string(std::string_view text);
std::string_view director_role(Stage stage);
std::size_t stage_index(Stage stage);

/// The four angles candidates are drafted from, assigned cyclically.
const std::vector<std::string>& default_perspectives();

struct ReviewVerdict {
  bool passed = false;
  std::string feedback;
  std::string reviewer;
  Stage stage = Stage::goal;
};

enum class EventAction { drafted, reviewed_pass, reviewed_fail, rewritten, aborted };

std::string_view to_string(EventAction action);

struct CompositionEvent {
  std::int64_t timestamp_ms = 0;
  int candidate = 0;
  Stage stage = Stage::goal;
  EventAction action = EventAction::drafted;
  int attempt = 0;
  std::string detail;
};

Json to_json(const CompositionEvent& event);
CompositionEvent composition_event_from_json(const Json& doc);

/// One JSON object per line.
std::string event_log_jsonl(const std::vector<CompositionEvent>& events);
std::vector<CompositionEvent> parse_event_log_jsonl(std::string_view text);

/// A candidate script under construction. Stage k may hold content only once
/// every stage before k has passed review.
class ScriptDraft {
 public:
  ScriptDraft(int candidate_index, std::string perspective);

  int candidate_index() const { return candidate_index_; }
  const std::string& perspective() const { return perspective_; }

  /// First stage that has not passed review (Stage::complete when all have).
  Stage current_stage() const;
  bool passed(Stage stage) const;
  int attempts(Stage stage) const;
  bool aborted() const { return aborted_; }

  bool has_content(Stage stage) const;
  /// Decoded section document; null while the stage is empty or when the
  /// last screenwriter output could not be decoded.
  const Json& content(Stage stage) const;
  /// Why the last screenwriter output for `stage` was unusable, if it was.
  const std::string& defect(Stage stage) const;

  /// Sections of every stage before `stage`, as one document.
  Json approved_before(Stage stage) const;

  /// Assembles goal, factors and design sections into a script document.
  Json assembled() const;

  /// The finished Script. Requires every stage passed.
  Script finish() const;

  // Mutators used by the composer. They enforce the assembly-line order and
  // the attempt counter.
  void put(Stage stage, Json content, std::string defect = {});
  void mark_passed(Stage stage);
  void mark_aborted() { aborted_ = true; }

 private:
  struct Slot {
    Json content;
    std::string defect;
    int attempts = 0;
    bool passed = false;
    bool filled = false;
  };

  const Slot& slot(Stage stage) const;
  Slot& slot(Stage stage);

  int candidate_index_;
  std::string perspective_;
  std::array<Slot, 4> slots_;
  bool aborted_ = false;
};

struct CompositionRun {
  UserRequirement requirement;
  std::vector<ScriptDraft> candidates;
  int max_attempts_per_stage = 3;
  std::vector<CompositionEvent> event_log;
};

/// Carries whatever the run produced before it failed.
class CompositionError : public Error {
 public:
  CompositionError(const std::string& message, CompositionRun run)
      : Error(message), run_(std::move(run)) {}
  const CompositionRun& run() const noexcept { return run_; }

 private:
  CompositionRun run_;
};

/// Thrown by rewrite_section once a stage has used all its attempts.
class AttemptCapReached : public Error {
 public:
  AttemptCapReached(int candidate, Stage stage, int cap);
  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

struct ComposeOptions {
  int max_attempts_per_stage = 3;
  std::vector<std::string> perspectives = default_perspectives();
  /// Compose candidates on separate threads. Results and the event log are
  /// identical to the sequential order either way.
  bool parallel = false;
  std::function<std::int64_t()> clock;
  /// Called for every event as it is appended.
  std::function<void(const CompositionEvent&)> on_event;
};

struct CompositionResult {
  std::vector<Script> scripts;
  CompositionRun run;
};

/// Screenwriter plus the four section directors.
class Composer {
 public:
  Composer(llm::Gateway& gateway, const llm::PromptLibrary& prompts, ComposeOptions options = {});

  /// Drafts n candidates and gates each stage. Candidates that exhaust the
  /// attempt cap are aborted and left out. Throws ValidationError for an
  /// invalid requirement, CompositionError on provider failure or when no
  /// candidate survives.
  CompositionResult compose_candidates(const UserRequirement& req, int n);

  /// Screenwriter's first draft of `stage`.
  void draft_section(ScriptDraft& draft, Stage stage, const UserRequirement& req);

  /// Runs the stage's director. At FormatCheck the assembled script must also
  /// pass validate_script, whatever the director says.
  ReviewVerdict review_section(const ScriptDraft& draft, Stage stage, const UserRequirement& req);

  /// Replaces the content of `stage` only. Throws AttemptCapReached when the
  /// stage has no attempts left.
  void rewrite_section(ScriptDraft& draft, Stage stage, const std::string& feedback,
                       const UserRequirement& req);

  const ComposeOptions& options() const { return options_; }

 private:
  void compose_one(ScriptDraft& draft, const UserRequirement& req,
                   std::vector<CompositionEvent>& log);
  void emit(std::vector<CompositionEvent>& log, const ScriptDraft& draft, Stage stage,
            EventAction action, std::string detail);
  void store_screenwriter_output(ScriptDraft& draft, Stage stage, const std::string& raw);

  llm::Gateway& gateway_;
  const llm::PromptLibrary& prompts_;
  ComposeOptions options_;
  std::mutex emit_mu_;
};

/// Plain-text rendering of a requirement used inside prompts.
std::string describe_requirement(const UserRequirement& req);

}  // namespace dstage::pipeline
