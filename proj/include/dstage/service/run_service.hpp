#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "dstage/service/workflow.hpp"

namespace dstage::service {

enum class Phase { composing, finalizing, casting, simulating, sealed, failed };

std::string_view to_string(Phase phase);
/// Throws ParseError for an unknown name.
Phase phase_from_string(std::string_view name);
bool is_terminal(Phase phase);
/// Forward along composing, finalizing, casting, simulating, sealed, or to
/// failed from any non-terminal phase.
bool legal_transition(Phase from, Phase to);

struct RunRecord {
  std::string id;
  Phase phase = Phase::composing;
  std::string created_at;
  std::string updated_at;
  UserRequirement requirement;
  RunSettings settings;
  std::optional<std::string> revised_from;
  std::optional<std::string> selected;
  std::optional<std::string> error;
};

Json to_json(const RunRecord& record);
RunRecord record_from_json(const Json& doc);

/// One entry of a run's event stream. Sequence numbers start at 1.
struct StreamEvent {
  std::uint64_t seq = 0;
  std::string type;
  Json data;
  std::string timestamp;
};

Json to_json(const StreamEvent& event);
StreamEvent stream_event_from_json(const Json& doc);

/// One directory per run under <root>/runs, canonical JSON files only.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root);

  std::filesystem::path dir(const std::string& id) const;
  std::string new_id() const;
  bool exists(const std::string& id) const;
  void save(const RunRecord& record) const;
  /// Throws NotFoundError.
  RunRecord load(const std::string& id) const;
  std::vector<std::string> list() const;

  void append_event(const std::string& id, const StreamEvent& event) const;
  std::vector<StreamEvent> load_events(const std::string& id) const;

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

using GatewayFactory = std::function<std::shared_ptr<llm::Gateway>(const RunRecord&)>;

/// DSTAGE_FIXTURE set: replay of that file for every run. Otherwise a live
/// HTTP provider from DSTAGE_LLM_BASE_URL / DSTAGE_LLM_API_KEY, created when
/// a run first needs it.
GatewayFactory gateway_factory_from_environment();

struct ServiceOptions {
  std::filesystem::path data_dir;
  GatewayFactory gateways;
  const llm::PromptLibrary* prompts = &llm::PromptLibrary::builtin();
  /// Restart workers for runs left unfinished by a previous process.
  bool resume = true;
};

/// Request body rejected before it reached the runtime.
class BadRequestError : public Error {
 public:
  using Error::Error;
};

/// Owns every run: persistence, one worker thread per active run, the event
/// streams and the steering commands.
class RunService {
 public:
  explicit RunService(ServiceOptions options);
  ~RunService();

  RunService(const RunService&) = delete;
  RunService& operator=(const RunService&) = delete;

  /// Throws ValidationError when the requirement is invalid.
  RunRecord create_run(const UserRequirement& req, const RunSettings& settings,
                       std::optional<std::string> revised_from = {});

  RunRecord record(const std::string& id) const;
  /// Latest published snapshot; never blocks on a running tick.
  Json get_state(const std::string& id) const;
  std::vector<std::string> list() const;

  std::vector<StreamEvent> events_after(const std::string& id, std::uint64_t seq) const;
  /// Waits until events newer than `seq` exist, the run reaches a terminal
  /// phase, or `timeout` passes. `terminal` reports the phase at return.
  std::vector<StreamEvent> wait_events(const std::string& id, std::uint64_t seq, std::chrono::milliseconds timeout,
                                       bool& terminal) const;

  /// Steering commands. Conflict outside the simulating phase; a repeated
  /// idempotency key returns the first acknowledgment without reapplying.
  Json post_event(const std::string& id, const Json& body, const std::optional<std::string>& idempotency_key = {});
  Json post_override(const std::string& id, const Json& body,
                     const std::optional<std::string>& idempotency_key = {});
  /// Manual pacing: lets the worker run `days` more days.
  Json advance(const std::string& id, int days);

  /// New run pre-filled from `id`; `body` may hold "requirement" and
  /// "config" objects merged over the old values.
  RunRecord revise(const std::string& id, const Json& body);

  /// Evaluations, selection, outcome and similarity. Conflict until the
  /// candidates are scored.
  Json report(const std::string& id) const;

  /// Blocks until the run is terminal or `timeout` passes.
  bool wait_terminal(const std::string& id, std::chrono::milliseconds timeout) const;

  /// Stops every worker at its next day boundary. Runs keep their phase and
  /// resume when a new service opens the same data directory.
  void shutdown();

  const RunStore& store() const { return store_; }

 private:
  struct Run;

  std::shared_ptr<Run> find(const std::string& id) const;
  std::shared_ptr<Run> open(RunRecord record);
  void start_worker(const std::shared_ptr<Run>& run);
  void work(const std::shared_ptr<Run>& run);
  void emit(Run& run, std::string type, Json data);
  void set_phase(Run& run, Phase phase, std::optional<std::string> error = {});
  void publish(Run& run);
  Json command(const std::string& id, const std::string& kind, const Json& body,
               const std::optional<std::string>& idempotency_key);

  ServiceOptions options_;
  RunStore store_;
  mutable std::mutex mu_;
  std::map<std::string, std::shared_ptr<Run>> runs_;
  bool stopping_ = false;
};

}  // namespace dstage::service
