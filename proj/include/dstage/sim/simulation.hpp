#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dstage/cast/cast.hpp"
#include "dstage/common/date.hpp"
#include "dstage/common/errors.hpp"
#include "dstage/common/json.hpp"
#include "dstage/llm/gateway.hpp"
#include "dstage/llm/prompts.hpp"
#include "dstage/script/script.hpp"

namespace dstage::sim {

inline constexpr std::string_view kSystemSender = "system";

enum class MessageKind { statement, action, emergent_event, override_notice };
std::string_view to_string(MessageKind kind);
MessageKind message_kind_from_string(std::string_view text);

struct WorldMessage {
  int day_index = 0;
  std::string sender;
  std::string text;
  MessageKind kind = MessageKind::statement;

  friend bool operator==(const WorldMessage&, const WorldMessage&) = default;
};

struct EmergentEvent {
  int day_index = 0;
  std::string description;
  std::string injected_by = "user";

  friend bool operator==(const EmergentEvent&, const EmergentEvent&) = default;
};

struct DecisionOverride {
  int day_index = 0;
  std::string agent_id;
  std::string decision;

  friend bool operator==(const DecisionOverride&, const DecisionOverride&) = default;
};

/// Counterfactual directive added to every decision prompt of one agent.
struct PersonaConstraint {
  std::string agent_id;
  std::string directive;

  friend bool operator==(const PersonaConstraint&, const PersonaConstraint&) = default;
};

/// One day's value of a response factor. Only the member matching `kind` is
/// meaningful.
struct ResponseSample {
  ResponseKind kind = ResponseKind::scalar;
  double value = 0.0;
  std::vector<double> probabilities;
  std::string category;
  bool carried_forward = false;

  friend bool operator==(const ResponseSample&, const ResponseSample&) = default;
};

using AttributeMap = std::map<std::string, std::string>;

struct WorldState {
  /// Completed days; also the index of the next day to run.
  int day_index = 0;
  CalendarDate calendar_date;
  std::vector<WorldMessage> channel;
  std::map<std::string, AttributeMap> agent_states;
  std::vector<double> tension_series;
  std::map<std::string, std::vector<ResponseSample>> response_series;

  friend bool operator==(const WorldState&, const WorldState&) = default;
};

struct Decision {
  int day_index = 0;
  std::string agent_id;
  /// Digest of the decision request; empty when overridden before any call.
  std::string prompt_digest;
  std::string text;
  bool overridden = false;

  friend bool operator==(const Decision&, const Decision&) = default;
};

struct DaySummary {
  int day_index = 0;
  CalendarDate calendar_date;
  std::vector<WorldMessage> messages;
  std::vector<Decision> decisions;
  std::map<std::string, ResponseSample> samples;
  double tension = 0.0;
  std::map<std::string, AttributeMap> agent_states;
  std::vector<std::string> warnings;

  friend bool operator==(const DaySummary&, const DaySummary&) = default;
};

inline constexpr std::string_view kOutcomeCategories[] = {"peace", "limited_conflict",
                                                         "conventional_war", "nuclear_war"};
inline constexpr std::string_view kUndetermined = "undetermined";

struct FinalOutcome {
  std::string label;
  std::string category;
  /// Judge text, kept when it could not be parsed.
  std::string raw;

  friend bool operator==(const FinalOutcome&, const FinalOutcome&) = default;
};

struct RunConfig {
  int days = 1;
  CalendarDate start_date;
  std::vector<PersonaConstraint> constraints;
  std::optional<DesignPoint> design_point;
  /// Scalar response mirrored into tension_series. When unset, a scalar whose
  /// name mentions tension is used, or a dedicated judge call otherwise.
  std::optional<std::string> tension_factor;
  /// Agents see only the last N channel messages when set.
  std::optional<std::size_t> channel_window;
  std::uint64_t seed = 0;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Everything needed to replay or audit a run. Day records are append-only.
struct RunLog {
  std::string run_id;
  std::string script_id;
  Script script;
  cast::Cast cast;
  RunConfig config;
  WorldState state;
  std::vector<DaySummary> days;
  std::vector<EmergentEvent> pending_events;
  std::vector<DecisionOverride> pending_overrides;
  std::optional<FinalOutcome> outcome;
  bool sealed = false;

  const Decision* decision(int day_index, std::string_view agent_id) const;
  bool finished() const { return state.day_index >= config.days; }

  friend bool operator==(const RunLog&, const RunLog&) = default;
};

class SimulationError : public Error {
 public:
  using Error::Error;
};

/// Command rejected: bad target day, unknown agent, sealed run.
class CommandError : public Error {
 public:
  using Error::Error;
};

/// Clamps negative weights to zero and rescales to sum 1. Returns nothing
/// when the weights are not finite or sum to zero.
std::optional<std::vector<double>> normalize_probability_vector(const std::vector<double>& weights);

/// Sample used before the first judged day: 50, uniform, first category.
ResponseSample default_sample(const ResponseFactor& factor);

/// Response factor used as the tension source, if any.
std::optional<std::string> tension_source(const Script& script, const RunConfig& config);

Json to_json(const WorldMessage& m);
Json to_json(const EmergentEvent& e);
Json to_json(const DecisionOverride& o);
Json to_json(const PersonaConstraint& c);
Json to_json(const ResponseSample& s);
Json to_json(const WorldState& s);
Json to_json(const Decision& d);
Json to_json(const DaySummary& d);
Json to_json(const FinalOutcome& o);
Json to_json(const RunConfig& c);

WorldMessage message_from_json(const Json& doc);
EmergentEvent event_from_json(const Json& doc);
DecisionOverride override_from_json(const Json& doc);
PersonaConstraint constraint_from_json(const Json& doc);
ResponseSample sample_from_json(const Json& doc);
WorldState state_from_json(const Json& doc);
Decision decision_from_json(const Json& doc);
DaySummary day_from_json(const Json& doc);
FinalOutcome outcome_from_json(const Json& doc);
RunConfig run_config_from_json(const Json& doc);

/// Digest of the replayable part of a run: state, day records and outcome.
std::string state_digest(const RunLog& log);

/// Directory layout: config.json, script.json, cast.json, days/day-NNN.json,
/// series.json, state.json, and outcome.json once finalized.
void save_run(const RunLog& log, const std::filesystem::path& dir);
RunLog load_run(const std::filesystem::path& dir);

/// Drives one run. step_day and finalize_run belong to one thread; the
/// command methods may be called from any thread and take effect at the next
/// tick boundary.
class Simulation {
 public:
  /// Validates inputs, writes design-point levels into agent states and posts
  /// the opening system message.
  static RunLog init_run(const Script& script, const cast::Cast& cast, const RunConfig& config,
                         std::string run_id = "run");

  explicit Simulation(RunLog log, const llm::PromptLibrary& prompts = llm::PromptLibrary::builtin());

  /// Runs one day. On any error the run is left exactly as before the call.
  DaySummary step_day(llm::Gateway& gateway);

  /// Judges every response factor for the day currently held by `working`.
  /// Exposed for tests; step_day calls it after the decisions.
  std::map<std::string, ResponseSample> compute_responses(const RunLog& working, llm::Gateway& gateway,
                                                          std::vector<std::string>& warnings,
                                                          double& tension) const;

  void inject_event(EmergentEvent event);
  void override_decision(DecisionOverride override_);

  /// Labels and categorizes the outcome, then seals the run.
  FinalOutcome finalize_run(llm::Gateway& gateway);

  /// Snapshot taken under the command lock.
  RunLog snapshot() const;
  const RunLog& log() const { return log_; }

  int current_day() const { return current_day_.load(); }
  bool sealed() const { return sealed_.load(); }

 private:
  void drain_commands();
  void check_command_day(int day_index) const;

  RunLog log_;
  const llm::PromptLibrary& prompts_;
  mutable std::mutex mu_;
  std::vector<EmergentEvent> incoming_events_;
  std::vector<DecisionOverride> incoming_overrides_;
  std::atomic<int> current_day_{0};
  std::atomic<bool> sealed_{false};
};

}  // namespace dstage::sim
