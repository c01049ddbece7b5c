#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dstage/cast/cast.hpp"
#include "dstage/eval/evaluation.hpp"
#include "dstage/pipeline/composition.hpp"
#include "dstage/scoring/scoring.hpp"
#include "dstage/sim/simulation.hpp"

namespace dstage::service {

/// Where bundled scenario datasets live: $DSTAGE_DATASETS, else the data
/// directory of the source tree.
std::filesystem::path dataset_root();

/// User-injected event fixed at run creation. Either a day index or a
/// calendar date may be given.
struct ScheduledEvent {
  std::optional<int> day_index;
  std::optional<CalendarDate> date;
  std::string description;
};

/// Everything a run needs beyond the requirement.
struct RunSettings {
  int candidates = 4;
  int max_attempts = 3;
  scoring::WeightVector weights;
  bool supervisor = true;
  cast::CastLimits limits;

  int days = 13;
  /// Defaults to the first timeline row, or to the creation date.
  std::optional<CalendarDate> start_date;
  std::vector<sim::PersonaConstraint> constraints;
  std::optional<std::string> design_point_id;
  std::optional<std::string> tension_factor;
  std::optional<std::size_t> channel_window;
  std::vector<ScheduledEvent> events;
  std::vector<sim::DecisionOverride> overrides;

  /// "auto" runs every day back to back; "manual" waits for advance commands.
  std::string pacing = "auto";
  int tick_delay_ms = 0;

  /// Bundled dataset name or a path to a timeline file. When unset the
  /// requirement's scenario_tag is tried.
  std::optional<std::string> timeline;
};

/// Throws ParseError naming the offending field.
RunSettings settings_from_json(const Json& doc);
Json to_json(const RunSettings& settings);

std::optional<eval::HistoricalTimeline> resolve_timeline(const RunSettings& settings,
                                                         const UserRequirement& req);

struct Selection {
  std::vector<scoring::ScriptEvaluation> evaluations;
  std::size_t selected = 0;
};

pipeline::CompositionResult design(const UserRequirement& req, const RunSettings& settings, llm::Gateway& gateway,
                                   const llm::PromptLibrary& prompts,
                                   std::function<void(const pipeline::CompositionEvent&)> on_event = {});

/// Chief-director scoring of every candidate, then selection. Throws
/// scoring::NoAdmissibleScript when every candidate is eliminated.
Selection finalize(const std::vector<Script>& scripts, const UserRequirement& req, const RunSettings& settings,
                   llm::Gateway& gateway, const llm::PromptLibrary& prompts);

cast::SupervisedCast make_cast(const Script& script, const UserRequirement& req, const RunSettings& settings,
                               llm::Gateway& gateway, const llm::PromptLibrary& prompts);

/// Simulation config for `script`; scheduled events are resolved to day
/// indices against the start date.
sim::RunConfig run_config(const RunSettings& settings, const Script& script,
                          const std::optional<eval::HistoricalTimeline>& timeline);

/// Initialized run with the scheduled events and overrides queued.
std::unique_ptr<sim::Simulation> start_simulation(const Script& script, const cast::Cast& cast, const RunSettings& settings,
                                 const std::optional<eval::HistoricalTimeline>& timeline, std::string run_id,
                                 const llm::PromptLibrary& prompts);

/// Output of a complete offline run.
struct Artifacts {
  UserRequirement requirement;
  RunSettings settings;
  pipeline::CompositionResult composition;
  Selection selection;
  cast::SupervisedCast cast;
  std::vector<std::string> cast_warnings;
  sim::RunLog run;
  std::optional<eval::SimilarityReport> similarity;
};

/// Requirement to sealed run and report, all through one gateway.
Artifacts run_end_to_end(const UserRequirement& req, const RunSettings& settings, llm::Gateway& gateway,
                         const llm::PromptLibrary& prompts, std::string run_id = "run");

/// Canonical files under `dir`: requirement, candidates, composition log,
/// evaluations, final script, cast, run directory and report.
void write_artifacts(const Artifacts& artifacts, const std::filesystem::path& dir);

}  // namespace dstage::service
