#include "dstage/pipeline/composition.hpp"

#include <chrono>
#include <future>

#include "dstage/llm/extract.hpp"
#include "dstage/script/serialization.hpp"

namespace dstage::pipeline {
namespace {

constexpr std::array<std::string_view, 5> kStageNames = {
    "Goal", "InfluenceAndResponse_Factors", "DesignPoints", "FormatCheck", "Complete"};

std::string_view section_schema(Stage stage) {
  switch (stage) {
    case Stage::goal: return "section_goal.v1";
    case Stage::factors: return "section_factors.v1";
    case Stage::design_points: return "section_design.v1";
    default: return "section_script.v1";
  }
}

std::string_view draft_template(Stage stage) {
  switch (stage) {
    case Stage::goal: return "screenwriter_goal.v1";
    case Stage::factors: return "screenwriter_factors.v1";
    default: return "screenwriter_design.v1";
  }
}

std::string_view section_format(Stage stage) {
  switch (stage) {
    case Stage::goal: return R"({"statement": "...", "success_criteria": ["..."]})";
    case Stage::factors:
      return R"({"factors": [{"name": "...", "description": "...", "levels": [...]}], "responses": [{"name": "...", "description": "...", "kind": "...", "categories": [...]}]})";
    case Stage::design_points: return R"({"design_points": [{"id": "...", "assignments": {"<factor>": <level>}}]})";
    default:
      return R"({"goal": {...}, "factors": [...], "responses": [...], "design_points": [...]})";
  }
}

std::int64_t wall_clock_ms() {
  using namespace std::chrono;
  return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

Script script_from_body(const Json& body, const std::string& perspective, Provenance provenance) {
  Script s;
  s.goal = parse_goal_section(body.at("goal"), "goal");
  s.factors = parse_factors(body.at("factors"), "factors");
  s.responses = parse_responses(body.at("responses"), "responses");
  s.design_points = parse_design_points(body.at("design_points"), "design_points");
  s.perspective = perspective;
  s.provenance = std::move(provenance);
  return s;
}

}  // namespace

std::string_view to_string(Stage stage) { return kStageNames[static_cast<std::size_t>(stage)]; }

std::optional<Stage> stage_from_string(std::string_view text) {
  for (std::size_t i = 0; i < kStageNames.size(); ++i)
    if (kStageNames[i] == text) return static_cast<Stage>(i);
  return std::nullopt;
}

std::size_t stage_index(Stage stage) { return static_cast<std::size_t>(stage); }

std::string_view director_role(Stage stage) {
  switch (stage) {
    case Stage::goal: return llm::roles::kDirectorGoal;
    case Stage::factors: return llm::roles::kDirectorFactors;
    case Stage::design_points: return llm::roles::kDirectorDesign;
    default: return llm::roles::kDirectorFormat;
  }
}

const std::vector<std::string>& default_perspectives() {
  static const std::vector<std::string> perspectives = {
      "research objectives", "variable design", "operational process", "expected outcomes"};
  return perspectives;
}

std::string_view to_string(EventAction action) {
  switch (action) {
    case EventAction::drafted: return "drafted";
    case EventAction::reviewed_pass: return "reviewed_pass";
    case EventAction::reviewed_fail: return "reviewed_fail";
    case EventAction::rewritten: return "rewritten";
    case EventAction::aborted: return "aborted";
  }
  return "drafted";
}

Json to_json(const CompositionEvent& e) {
  return {{"timestamp", e.timestamp_ms},   {"candidate", e.candidate},
          {"stage", to_string(e.stage)},   {"action", to_string(e.action)},
          {"attempt", e.attempt},          {"detail", e.detail}};
}

CompositionEvent composition_event_from_json(const Json& doc) {
  CompositionEvent e;
  e.timestamp_ms = doc.at("timestamp").get<std::int64_t>();
  e.candidate = doc.at("candidate").get<int>();
  const auto stage = stage_from_string(doc.at("stage").get<std::string>());
  if (!stage) throw ParseError("stage", "unknown stage");
  e.stage = *stage;
  const auto action = doc.at("action").get<std::string>();
  bool found = false;
  for (auto a : {EventAction::drafted, EventAction::reviewed_pass, EventAction::reviewed_fail,
                 EventAction::rewritten, EventAction::aborted}) {
    if (to_string(a) == action) {
      e.action = a;
      found = true;
    }
  }
  if (!found) throw ParseError("action", "unknown action '" + action + "'");
  e.attempt = doc.value("attempt", 0);
  e.detail = doc.value("detail", std::string{});
  return e;
}

std::string event_log_jsonl(const std::vector<CompositionEvent>& events) {
  std::string out;
  for (const auto& e : events) out += canonical_dump(to_json(e)) + "\n";
  return out;
}

std::vector<CompositionEvent> parse_event_log_jsonl(std::string_view text) {
  std::vector<CompositionEvent> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (line.find_first_not_of(" \r\t") != std::string_view::npos)
      out.push_back(composition_event_from_json(Json::parse(line)));
    pos = end + 1;
  }
  return out;
}

std::string describe_requirement(const UserRequirement& req) {
  std::string out = "Research goal: " + req.research_goal + "\nCore variables: ";
  for (std::size_t i = 0; i < req.core_variables.size(); ++i)
    out += (i ? "; " : "") + req.core_variables[i];
  out += "\nTarget object: " + req.target_object;
  if (req.narrative) out += "\nDetails: " + *req.narrative;
  return out;
}

// ---------------------------------------------------------------------------
// ScriptDraft

ScriptDraft::ScriptDraft(int candidate_index, std::string perspective)
    : candidate_index_(candidate_index), perspective_(std::move(perspective)) {}

const ScriptDraft::Slot& ScriptDraft::slot(Stage stage) const {
  if (stage == Stage::complete) throw Error("Complete stage holds no content");
  return slots_[stage_index(stage)];
}

ScriptDraft::Slot& ScriptDraft::slot(Stage stage) {
  if (stage == Stage::complete) throw Error("Complete stage holds no content");
  return slots_[stage_index(stage)];
}

Stage ScriptDraft::current_stage() const {
  for (auto stage : kReviewedStages)
    if (!slot(stage).passed) return stage;
  return Stage::complete;
}

bool ScriptDraft::passed(Stage stage) const { return slot(stage).passed; }
int ScriptDraft::attempts(Stage stage) const { return slot(stage).attempts; }
bool ScriptDraft::has_content(Stage stage) const { return slot(stage).filled; }
const Json& ScriptDraft::content(Stage stage) const { return slot(stage).content; }
const std::string& ScriptDraft::defect(Stage stage) const { return slot(stage).defect; }

Json ScriptDraft::approved_before(Stage stage) const {
  Json doc = Json::object();
  for (auto s : kReviewedStages) {
    if (stage_index(s) >= stage_index(stage) || s == Stage::format_check) break;
    if (!slot(s).passed) break;
    const auto& c = slot(s).content;
    if (s == Stage::goal) doc["goal"] = c;
    else
      for (const auto& [k, v] : c.items()) doc[k] = v;
  }
  return doc;
}

Json ScriptDraft::assembled() const {
  Json doc = approved_before(Stage::format_check);
  if (!doc.contains("goal") || !doc.contains("factors") || !doc.contains("design_points"))
    throw Error("cannot assemble a script before its first three sections pass review");
  return doc;
}

void ScriptDraft::put(Stage stage, Json content, std::string defect) {
  for (auto s : kReviewedStages) {
    if (s == stage) break;
    if (!slot(s).passed)
      throw Error(std::string("cannot fill ") + std::string(to_string(stage)) + " before " +
                  std::string(to_string(s)) + " passes review");
  }
  auto& sl = slot(stage);
  if (sl.passed) throw Error(std::string(to_string(stage)) + " already passed review");
  sl.content = std::move(content);
  sl.defect = std::move(defect);
  sl.filled = true;
  ++sl.attempts;
}

void ScriptDraft::mark_passed(Stage stage) {
  auto& sl = slot(stage);
  if (!sl.filled || !sl.defect.empty()) throw Error("cannot pass a stage without usable content");
  sl.passed = true;
}

Script ScriptDraft::finish() const {
  if (current_stage() != Stage::complete) throw Error("draft has not passed every stage");
  Provenance p;
  p.candidate_index = candidate_index_;
  for (auto s : kReviewedStages) p.stage_attempts[std::string(to_string(s))] = slot(s).attempts;
  p.generator = "dstage composition pipeline";
  return script_from_body(content(Stage::format_check), perspective_, std::move(p));
}

AttemptCapReached::AttemptCapReached(int candidate, Stage stage, int cap)
    : Error("candidate " + std::to_string(candidate) + " used all " + std::to_string(cap) +
            " attempts at " + std::string(to_string(stage))),
      stage_(stage) {}

// ---------------------------------------------------------------------------
// Composer

Composer::Composer(llm::Gateway& gateway, const llm::PromptLibrary& prompts, ComposeOptions options)
    : gateway_(gateway), prompts_(prompts), options_(std::move(options)) {
  if (options_.max_attempts_per_stage < 1) throw Error("max_attempts_per_stage must be >= 1");
  if (options_.perspectives.empty()) throw Error("at least one perspective is required");
  if (!options_.clock) options_.clock = wall_clock_ms;
}

void Composer::emit(std::vector<CompositionEvent>& log, const ScriptDraft& draft, Stage stage,
                    EventAction action, std::string detail) {
  CompositionEvent e{options_.clock(), draft.candidate_index(), stage, action,
                     stage == Stage::complete ? 0 : draft.attempts(stage), std::move(detail)};
  log.push_back(e);
  if (options_.on_event) {
    std::lock_guard lock(emit_mu_);
    options_.on_event(e);
  }
}

void Composer::store_screenwriter_output(ScriptDraft& draft, Stage stage, const std::string& raw) {
  try {
    draft.put(stage, llm::extract_structured(raw, section_schema(stage)));
  } catch (const llm::ExtractionError& e) {
    draft.put(stage, Json(nullptr), e.what());
  }
}

void Composer::draft_section(ScriptDraft& draft, Stage stage, const UserRequirement& req) {
  if (stage == Stage::format_check) {
    draft.put(stage, draft.assembled());
    return;
  }
  const auto prompt = prompts_.render(
      draft_template(stage),
      {{"requirement", describe_requirement(req)},
       {"perspective", draft.perspective()},
       {"script_so_far", pretty_dump(draft.approved_before(stage))}});
  const auto raw = gateway_.complete(gateway_.request(llm::roles::kScreenwriter, prompt.system,
                                                      prompt.user, std::string(section_schema(stage))));
  store_screenwriter_output(draft, stage, raw);
}

ReviewVerdict Composer::review_section(const ScriptDraft& draft, Stage stage,
                                       const UserRequirement& req) {
  ReviewVerdict verdict;
  verdict.stage = stage;
  verdict.reviewer = std::string(director_role(stage));
  if (!draft.has_content(stage)) throw Error("nothing drafted to review");
  if (!draft.defect(stage).empty()) {
    verdict.passed = false;
    verdict.reviewer = "local";
    verdict.feedback = "screenwriter output unusable: " + draft.defect(stage);
    return verdict;
  }

  const auto prompt = prompts_.render(
      std::string(director_role(stage)) + ".v1",
      {{"requirement", describe_requirement(req)},
       {"script_so_far", pretty_dump(draft.approved_before(stage))},
       {"section", pretty_dump(draft.content(stage))}});
  const auto raw = gateway_.complete(
      gateway_.request(director_role(stage), prompt.system, prompt.user, "verdict.v1"));
  try {
    const auto doc = llm::extract_structured(raw, "verdict.v1");
    verdict.passed = doc.at("passed").get<bool>();
    verdict.feedback = doc.value("feedback", std::string{});
    if (!verdict.passed && verdict.feedback.empty())
      verdict.feedback = "reviewer rejected the section without feedback";
  } catch (const llm::ExtractionError&) {
    verdict.passed = false;
    verdict.feedback = "reviewer output unparseable";
  }

  if (stage == Stage::format_check) {
    std::string local;
    try {
      const auto script = script_from_body(draft.content(stage), draft.perspective(), {});
      if (auto report = validate_script(script); !report.valid()) local = report.summary();
    } catch (const ParseError& e) {
      local = e.what();
    } catch (const Json::exception& e) {
      local = e.what();
    }
    if (!local.empty()) {
      const std::string prior = verdict.passed ? std::string{} : verdict.feedback + "\n";
      verdict.passed = false;
      verdict.reviewer += "+local";
      verdict.feedback = prior + "structural check failed: " + local;
    }
  }
  return verdict;
}

void Composer::rewrite_section(ScriptDraft& draft, Stage stage, const std::string& feedback,
                               const UserRequirement& req) {
  if (draft.attempts(stage) >= options_.max_attempts_per_stage)
    throw AttemptCapReached(draft.candidate_index(), stage, options_.max_attempts_per_stage);
  const auto& previous = draft.content(stage);
  const auto prompt = prompts_.render(
      "screenwriter_rewrite.v1",
      {{"requirement", describe_requirement(req)},
       {"perspective", draft.perspective()},
       {"script_so_far", pretty_dump(draft.approved_before(stage))},
       {"stage", std::string(to_string(stage))},
       {"previous_section", previous.is_null() ? std::string("(unusable output)") : pretty_dump(previous)},
       {"feedback", feedback},
       {"section_format", std::string(section_format(stage))}});
  const auto raw = gateway_.complete(gateway_.request(llm::roles::kScreenwriter, prompt.system,
                                                      prompt.user, std::string(section_schema(stage))));
  store_screenwriter_output(draft, stage, raw);
}

void Composer::compose_one(ScriptDraft& draft, const UserRequirement& req,
                           std::vector<CompositionEvent>& log) {
  for (auto stage : kReviewedStages) {
    draft_section(draft, stage, req);
    emit(log, draft, stage, EventAction::drafted,
         stage == Stage::format_check ? "assembled locally" : draft.defect(stage));
    for (;;) {
      const auto verdict = review_section(draft, stage, req);
      if (verdict.passed) {
        draft.mark_passed(stage);
        emit(log, draft, stage, EventAction::reviewed_pass, verdict.feedback);
        break;
      }
      emit(log, draft, stage, EventAction::reviewed_fail, verdict.feedback);
      try {
        rewrite_section(draft, stage, verdict.feedback, req);
      } catch (const AttemptCapReached& e) {
        draft.mark_aborted();
        emit(log, draft, stage, EventAction::aborted, e.what());
        return;
      }
      emit(log, draft, stage, EventAction::rewritten, draft.defect(stage));
    }
  }
}

CompositionResult Composer::compose_candidates(const UserRequirement& req, int n) {
  if (auto report = validate_requirement(req); !report.valid()) throw ValidationError(report);
  if (n < 1) throw Error("candidate count must be at least 1");

  CompositionRun run;
  run.requirement = req;
  run.max_attempts_per_stage = options_.max_attempts_per_stage;
  for (int i = 0; i < n; ++i)
    run.candidates.emplace_back(i, options_.perspectives[static_cast<std::size_t>(i) %
                                                         options_.perspectives.size()]);

  std::vector<std::vector<CompositionEvent>> logs(run.candidates.size());
  std::string failure;
  if (options_.parallel && n > 1) {
    std::vector<std::future<void>> jobs;
    for (std::size_t i = 0; i < run.candidates.size(); ++i)
      jobs.push_back(std::async(std::launch::async, [&, i] {
        compose_one(run.candidates[i], req, logs[i]);
      }));
    for (auto& job : jobs) {
      try {
        job.get();
      } catch (const llm::GatewayError& e) {
        if (failure.empty()) failure = e.what();
      }
    }
  } else {
    for (std::size_t i = 0; i < run.candidates.size() && failure.empty(); ++i) {
      try {
        compose_one(run.candidates[i], req, logs[i]);
      } catch (const llm::GatewayError& e) {
        failure = e.what();
      }
    }
  }
  for (auto& log : logs) run.event_log.insert(run.event_log.end(), log.begin(), log.end());

  if (!failure.empty()) throw CompositionError("provider failure during composition: " + failure, std::move(run));

  CompositionResult result;
  for (const auto& draft : run.candidates)
    if (!draft.aborted()) result.scripts.push_back(draft.finish());
  if (result.scripts.empty()) throw CompositionError("all candidates aborted", std::move(run));
  result.run = std::move(run);
  return result;
}

}  // namespace dstage::pipeline
