#include "dstage/service/run_service.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <random>

#include "dstage/llm/http_provider.hpp"
#include "dstage/script/serialization.hpp"

namespace dstage::service {
namespace fs = std::filesystem;

namespace {

constexpr Phase kPhases[] = {Phase::composing, Phase::finalizing, Phase::casting,
                             Phase::simulating, Phase::sealed,     Phase::failed};

std::string now_iso() {
  const auto now = std::chrono::system_clock::now();
  const auto t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

template <typename T>
Json optional_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

std::optional<std::string> optional_string(const Json& doc, const char* key) {
  if (auto it = doc.find(key); it != doc.end() && it->is_string()) return it->get<std::string>();
  return std::nullopt;
}

// Field checks for command bodies; violations are reported together.
struct BodyReader {
  const Json& body;
  ValidationReport report;

  std::optional<int> integer(const char* key, bool required) {
    auto it = body.find(key);
    if (it == body.end() || it->is_null()) {
      if (required) report.add(key, "is required");
      return std::nullopt;
    }
    if (!it->is_number_integer()) {
      report.add(key, "must be an integer");
      return std::nullopt;
    }
    return it->get<int>();
  }

  std::optional<std::string> text(const char* key, bool required) {
    auto it = body.find(key);
    if (it == body.end() || it->is_null()) {
      if (required) report.add(key, "is required");
      return std::nullopt;
    }
    if (!it->is_string() || it->get<std::string>().empty()) {
      report.add(key, "must be a non-empty string");
      return std::nullopt;
    }
    return it->get<std::string>();
  }
};

}  // namespace

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::composing: return "composing";
    case Phase::finalizing: return "finalizing";
    case Phase::casting: return "casting";
    case Phase::simulating: return "simulating";
    case Phase::sealed: return "sealed";
    case Phase::failed: return "failed";
  }
  return "failed";
}

Phase phase_from_string(std::string_view name) {
  for (auto p : kPhases)
    if (to_string(p) == name) return p;
  throw ParseError("phase", "unknown phase '" + std::string(name) + "'");
}

bool is_terminal(Phase phase) { return phase == Phase::sealed || phase == Phase::failed; }

bool legal_transition(Phase from, Phase to) {
  if (is_terminal(from)) return false;
  if (to == Phase::failed) return true;
  return static_cast<int>(to) == static_cast<int>(from) + 1;
}

Json to_json(const RunRecord& r) {
  return {{"id", r.id},
          {"phase", to_string(r.phase)},
          {"created_at", r.created_at},
          {"updated_at", r.updated_at},
          {"requirement", to_json(r.requirement)},
          {"config", to_json(r.settings)},
          {"revised_from", optional_json(r.revised_from)},
          {"selected", optional_json(r.selected)},
          {"error", optional_json(r.error)}};
}

RunRecord record_from_json(const Json& doc) {
  RunRecord r;
  try {
    r.id = doc.at("id").get<std::string>();
    r.phase = phase_from_string(doc.at("phase").get<std::string>());
    r.created_at = doc.value("created_at", std::string{});
    r.updated_at = doc.value("updated_at", std::string{});
    r.requirement = parse_requirement(doc.at("requirement"));
    r.settings = settings_from_json(doc.at("config"));
    r.revised_from = optional_string(doc, "revised_from");
    r.selected = optional_string(doc, "selected");
    r.error = optional_string(doc, "error");
  } catch (const Json::exception& e) {
    throw ParseError("record", e.what());
  }
  return r;
}

Json to_json(const StreamEvent& e) {
  return {{"seq", e.seq}, {"type", e.type}, {"data", e.data}, {"timestamp", e.timestamp}};
}

StreamEvent stream_event_from_json(const Json& doc) {
  try {
    return {doc.at("seq").get<std::uint64_t>(), doc.at("type").get<std::string>(), doc.at("data"),
            doc.value("timestamp", std::string{})};
  } catch (const Json::exception& e) {
    throw ParseError("event", e.what());
  }
}

// ---------------------------------------------------------------------------

RunStore::RunStore(fs::path root) : root_(std::move(root)) { fs::create_directories(root_ / "runs"); }

fs::path RunStore::dir(const std::string& id) const { return root_ / "runs" / id; }

std::string RunStore::new_id() const {
  static std::mt19937_64 rng{std::random_device{}()};
  static std::mutex mu;
  std::lock_guard lock(mu);
  for (;;) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "run-%012llx", static_cast<unsigned long long>(rng() & 0xffffffffffffULL));
    if (!exists(buf)) return buf;
  }
}

bool RunStore::exists(const std::string& id) const { return fs::exists(dir(id) / "record.json"); }

void RunStore::save(const RunRecord& record) const {
  fs::create_directories(dir(record.id));
  write_json_file(dir(record.id) / "record.json", to_json(record));
}

RunRecord RunStore::load(const std::string& id) const {
  if (id.empty() || id.find('/') != std::string::npos || !exists(id)) throw NotFoundError("run '" + id + "' not found");
  return record_from_json(read_json_file(dir(id) / "record.json"));
}

std::vector<std::string> RunStore::list() const {
  std::vector<std::string> ids;
  for (const auto& entry : fs::directory_iterator(root_ / "runs"))
    if (entry.is_directory() && fs::exists(entry.path() / "record.json")) ids.push_back(entry.path().filename());
  std::sort(ids.begin(), ids.end());
  return ids;
}

void RunStore::append_event(const std::string& id, const StreamEvent& event) const {
  append_text_file(dir(id) / "events.jsonl", canonical_dump(to_json(event)) + "\n");
}

std::vector<StreamEvent> RunStore::load_events(const std::string& id) const {
  std::vector<StreamEvent> out;
  const auto path = dir(id) / "events.jsonl";
  if (!fs::exists(path)) return out;
  const auto text = read_text_file(path);
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    // A torn last line from a crash is dropped.
    auto doc = Json::parse(text.substr(start, end - start), nullptr, false);
    if (!doc.is_discarded() && doc.is_object()) out.push_back(stream_event_from_json(doc));
    start = end + 1;
  }
  return out;
}

GatewayFactory gateway_factory_from_environment() {
  if (const char* fixture = std::getenv("DSTAGE_FIXTURE"); fixture && *fixture) {
    auto recorded = std::make_shared<llm::Fixture>(llm::Fixture::load(fixture));
    return [recorded](const RunRecord&) { return llm::Gateway::replay(*recorded); };
  }
  return [](const RunRecord&) {
    return llm::Gateway::live(std::make_shared<llm::HttpChatProvider>(llm::HttpChatProvider::from_environment()));
  };
}

// ---------------------------------------------------------------------------

struct RunService::Run {
  mutable std::mutex mu;
  mutable std::condition_variable cv;
  RunRecord record;
  fs::path dir;
  std::vector<StreamEvent> events;
  std::shared_ptr<const Json> snapshot;

  std::vector<Script> scripts;
  std::vector<scoring::ScriptEvaluation> evaluations;
  std::optional<cast::Cast> cast;
  Json cast_audit;
  std::unique_ptr<sim::Simulation> simulation;
  Json similarity;
  std::map<std::string, Json> idempotency;

  int credits = 0;
  bool stop = false;
  std::thread worker;
};

RunService::RunService(ServiceOptions options) : options_(std::move(options)), store_(options_.data_dir) {
  if (!options_.gateways) options_.gateways = gateway_factory_from_environment();
  for (const auto& id : store_.list()) {
    std::shared_ptr<Run> run;
    try {
      run = open(store_.load(id));
    } catch (const Error&) {
      continue;  // unreadable record: left on disk untouched
    }
    if (options_.resume && !is_terminal(run->record.phase)) {
      {
        std::lock_guard lock(run->mu);
        emit(*run, "resumed", {{"phase", to_string(run->record.phase)}});
        publish(*run);
      }
      start_worker(run);
    }
  }
}

RunService::~RunService() { shutdown(); }

void RunService::shutdown() {
  std::vector<std::shared_ptr<Run>> runs;
  {
    std::lock_guard lock(mu_);
    stopping_ = true;
    for (auto& [id, run] : runs_) runs.push_back(run);
  }
  for (auto& run : runs) {
    {
      std::lock_guard lock(run->mu);
      run->stop = true;
    }
    run->cv.notify_all();
  }
  for (auto& run : runs)
    if (run->worker.joinable()) run->worker.join();
}

std::shared_ptr<RunService::Run> RunService::open(RunRecord record) {
  auto run = std::make_shared<Run>();
  run->dir = store_.dir(record.id);
  run->events = store_.load_events(record.id);
  if (fs::exists(run->dir / "candidates")) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(run->dir / "candidates")) files.push_back(e.path());
    std::sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
      return std::stoi(a.stem().string().substr(7)) < std::stoi(b.stem().string().substr(7));
    });
    for (const auto& f : files) run->scripts.push_back(parse_script(read_json_file(f)));
  }
  if (fs::exists(run->dir / "scores.json"))
    for (const auto& e : read_json_file(run->dir / "scores.json")) run->evaluations.push_back(scoring::evaluation_from_json(e));
  if (fs::exists(run->dir / "cast.json")) run->cast = cast::cast_from_json(read_json_file(run->dir / "cast.json"));
  if (fs::exists(run->dir / "cast_audit.json")) run->cast_audit = read_json_file(run->dir / "cast_audit.json");
  if (fs::exists(run->dir / "sim" / "state.json"))
    run->simulation = std::make_unique<sim::Simulation>(sim::load_run(run->dir / "sim"), *options_.prompts);
  if (fs::exists(run->dir / "similarity.json")) run->similarity = read_json_file(run->dir / "similarity.json");
  if (fs::exists(run->dir / "idempotency.json"))
    run->idempotency = read_json_file(run->dir / "idempotency.json").get<std::map<std::string, Json>>();
  run->record = std::move(record);
  {
    std::lock_guard lock(run->mu);
    publish(*run);
  }
  std::lock_guard lock(mu_);
  runs_[run->record.id] = run;
  return run;
}

std::shared_ptr<RunService::Run> RunService::find(const std::string& id) const {
  std::lock_guard lock(mu_);
  auto it = runs_.find(id);
  if (it == runs_.end()) throw NotFoundError("run '" + id + "' not found");
  return it->second;
}

RunRecord RunService::create_run(const UserRequirement& req, const RunSettings& settings,
                                 std::optional<std::string> revised_from) {
  if (auto report = validate_requirement(req); !report.valid()) throw ValidationError(report);
  RunRecord record;
  record.id = store_.new_id();
  record.created_at = record.updated_at = now_iso();
  record.requirement = req;
  record.settings = settings;
  record.revised_from = std::move(revised_from);
  store_.save(record);
  write_json_file(store_.dir(record.id) / "requirement.json", to_json(req));
  write_json_file(store_.dir(record.id) / "settings.json", to_json(settings));
  auto run = open(record);
  {
    std::lock_guard lock(run->mu);
    emit(*run, "phase", {{"phase", "composing"}});
    publish(*run);
  }
  {
    std::lock_guard lock(mu_);
    if (stopping_) return record;
  }
  start_worker(run);
  return record;
}

RunRecord RunService::record(const std::string& id) const {
  auto run = find(id);
  std::lock_guard lock(run->mu);
  return run->record;
}

Json RunService::get_state(const std::string& id) const {
  auto run = find(id);
  std::shared_ptr<const Json> snap;
  {
    std::lock_guard lock(run->mu);
    snap = run->snapshot;
  }
  return *snap;
}

std::vector<std::string> RunService::list() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> ids;
  for (const auto& [id, run] : runs_) ids.push_back(id);
  return ids;
}

std::vector<StreamEvent> RunService::events_after(const std::string& id, std::uint64_t seq) const {
  auto run = find(id);
  std::lock_guard lock(run->mu);
  std::vector<StreamEvent> out;
  for (const auto& e : run->events)
    if (e.seq > seq) out.push_back(e);
  return out;
}

std::vector<StreamEvent> RunService::wait_events(const std::string& id, std::uint64_t seq,
                                                 std::chrono::milliseconds timeout, bool& terminal) const {
  auto run = find(id);
  std::unique_lock lock(run->mu);
  run->cv.wait_for(lock, timeout, [&] {
    return run->events.size() > seq || is_terminal(run->record.phase) || run->stop;
  });
  terminal = is_terminal(run->record.phase);
  std::vector<StreamEvent> out;
  for (const auto& e : run->events)
    if (e.seq > seq) out.push_back(e);
  return out;
}

bool RunService::wait_terminal(const std::string& id, std::chrono::milliseconds timeout) const {
  auto run = find(id);
  std::unique_lock lock(run->mu);
  return run->cv.wait_for(lock, timeout, [&] { return is_terminal(run->record.phase); });
}

void RunService::emit(Run& run, std::string type, Json data) {
  StreamEvent event{run.events.size() + 1, std::move(type), std::move(data), now_iso()};
  store_.append_event(run.record.id, event);
  run.events.push_back(std::move(event));
  run.cv.notify_all();
}

void RunService::set_phase(Run& run, Phase phase, std::optional<std::string> error) {
  if (!legal_transition(run.record.phase, phase))
    throw ConflictError("illegal phase transition " + std::string(to_string(run.record.phase)) + " -> " +
                        std::string(to_string(phase)));
  run.record.phase = phase;
  run.record.error = std::move(error);
  run.record.updated_at = now_iso();
  store_.save(run.record);
  Json data = {{"phase", to_string(phase)}};
  if (run.record.error) data["error"] = *run.record.error;
  emit(run, "phase", std::move(data));
}

void RunService::publish(Run& run) {
  Json snap = to_json(run.record);
  snap["run_id"] = run.record.id;
  snap["last_event_seq"] = run.events.size();

  Json candidates = Json::array();
  for (const auto& s : run.scripts)
    candidates.push_back({{"script_id", script_id(s)}, {"perspective", s.perspective}, {"script", serialize_script(s)}});
  snap["candidates"] = std::move(candidates);
  snap["evaluations"] = run.evaluations.empty()
                            ? Json(nullptr)
                            : scoring::evaluation_report(run.evaluations, run.record.settings.weights, run.scripts);
  snap["cast"] = run.cast ? cast::to_json(*run.cast) : Json(nullptr);
  snap["cast_audit"] = run.cast_audit;

  Json simulation = nullptr;
  if (run.simulation) {
    const auto log = run.simulation->snapshot();
    Json days = Json::array();
    for (const auto& d : log.days) days.push_back(sim::to_json(d));
    Json events = Json::array();
    for (const auto& e : log.pending_events) events.push_back(sim::to_json(e));
    Json overrides = Json::array();
    for (const auto& o : log.pending_overrides) overrides.push_back(sim::to_json(o));
    Json latest = {{"tension", log.state.tension_series.empty() ? Json(nullptr) : Json(log.state.tension_series.back())},
                   {"responses", Json::object()}};
    for (const auto& [name, series] : log.state.response_series)
      if (!series.empty()) latest["responses"][name] = sim::to_json(series.back());
    simulation = {{"current_day", log.state.day_index},
                  {"days_total", log.config.days},
                  {"calendar_date", log.state.calendar_date.to_string()},
                  {"state", sim::to_json(log.state)},
                  {"days", std::move(days)},
                  {"pending_events", std::move(events)},
                  {"pending_overrides", std::move(overrides)},
                  {"latest", std::move(latest)},
                  {"outcome", log.outcome ? sim::to_json(*log.outcome) : Json(nullptr)},
                  {"sealed", log.sealed}};
  }
  snap["simulation"] = std::move(simulation);
  snap["similarity"] = run.similarity;
  run.snapshot = std::make_shared<const Json>(std::move(snap));
}

void RunService::start_worker(const std::shared_ptr<Run>& run) {
  run->worker = std::thread([this, run] { work(run); });
}

void RunService::work(const std::shared_ptr<Run>& run) {
  const auto& prompts = *options_.prompts;
  auto stopped = [&] {
    std::lock_guard lock(run->mu);
    return run->stop;
  };
  RunRecord record;
  {
    std::lock_guard lock(run->mu);
    record = run->record;
  }
  const auto& req = record.requirement;
  const auto& settings = record.settings;
  try {
    auto gateway = options_.gateways(record);

    if (record.phase == Phase::composing) {
      auto result = design(req, settings, *gateway, prompts, [&](const pipeline::CompositionEvent& e) {
        std::lock_guard lock(run->mu);
        emit(*run, "composition", pipeline::to_json(e));
      });
      fs::create_directories(run->dir / "candidates");
      for (const auto& s : result.scripts)
        write_json_file(run->dir / "candidates" / (script_id(s) + ".json"), serialize_script(s));
      write_text_file(run->dir / "composition_log.jsonl", pipeline::event_log_jsonl(result.run.event_log));
      std::lock_guard lock(run->mu);
      run->scripts = std::move(result.scripts);
      set_phase(*run, Phase::finalizing);
      publish(*run);
      record.phase = Phase::finalizing;
    }
    if (stopped()) return;

    if (record.phase == Phase::finalizing) {
      auto selection = finalize(run->scripts, req, settings, *gateway, prompts);
      Json scores = Json::array();
      for (const auto& e : selection.evaluations) scores.push_back(scoring::to_json(e));
      write_json_file(run->dir / "scores.json", scores);
      const auto report = scoring::evaluation_report(selection.evaluations, settings.weights, run->scripts);
      write_json_file(run->dir / "evaluations.json", report);
      const auto& chosen = run->scripts.at(selection.selected);
      write_json_file(run->dir / "final_script.json", serialize_script(chosen));
      std::lock_guard lock(run->mu);
      run->evaluations = std::move(selection.evaluations);
      run->record.selected = script_id(chosen);
      emit(*run, "evaluations", report);
      set_phase(*run, Phase::casting);
      publish(*run);
      record = run->record;
    }
    if (stopped()) return;

    const auto final_script = [&] {
      for (const auto& s : run->scripts)
        if (script_id(s) == record.selected) return s;
      throw NotFoundError("selected script '" + record.selected.value_or("") + "' is missing");
    }();

    if (record.phase == Phase::casting) {
      auto supervised = make_cast(final_script, req, settings, *gateway, prompts);
      write_json_file(run->dir / "cast.json", cast::to_json(supervised.cast));
      write_json_file(run->dir / "cast_audit.json", cast::to_json(supervised.audit));
      std::lock_guard lock(run->mu);
      run->cast = supervised.cast;
      run->cast_audit = cast::to_json(supervised.audit);
      emit(*run, "cast", {{"cast", cast::to_json(supervised.cast)}, {"audit", run->cast_audit}});
      set_phase(*run, Phase::simulating);
      publish(*run);
      record.phase = Phase::simulating;
    }

    const auto timeline = resolve_timeline(settings, req);
    if (record.phase == Phase::simulating) {
      {
        std::lock_guard lock(run->mu);
        if (!run->simulation) {
          run->simulation = start_simulation(final_script, *run->cast, settings, timeline, record.id, prompts);
          sim::save_run(run->simulation->snapshot(), run->dir / "sim");
          const auto log = run->simulation->snapshot();
          emit(*run, "simulation_started",
               {{"days_total", log.config.days}, {"start_date", log.config.start_date.to_string()}});
          publish(*run);
        }
      }
      auto& simulation = *run->simulation;
      while (!simulation.log().finished()) {
        {
          std::unique_lock lock(run->mu);
          if (settings.pacing == "manual") {
            run->cv.wait(lock, [&] { return run->stop || run->credits > 0; });
            if (run->stop) return;
            --run->credits;
          } else if (settings.tick_delay_ms > 0) {
            run->cv.wait_for(lock, std::chrono::milliseconds(settings.tick_delay_ms), [&] { return run->stop; });
          }
          if (run->stop) return;
        }
        const auto summary = simulation.step_day(*gateway);
        std::lock_guard lock(run->mu);
        sim::save_run(simulation.snapshot(), run->dir / "sim");
        emit(*run, "day", sim::to_json(summary));
        publish(*run);
      }
      if (!simulation.sealed()) {
        const auto outcome = simulation.finalize_run(*gateway);
        std::lock_guard lock(run->mu);
        sim::save_run(simulation.snapshot(), run->dir / "sim");
        emit(*run, "outcome", sim::to_json(outcome));
        publish(*run);
      }
      Json similarity = nullptr;
      if (timeline) {
        try {
          const auto report = eval::evaluate_run(simulation.snapshot(), *timeline, *gateway, *gateway, {}, prompts);
          similarity = eval::to_json(report);
          write_json_file(run->dir / "similarity.json", similarity);
          write_text_file(run->dir / "similarity.txt", eval::report_text(report));
        } catch (const Error& e) {
          std::lock_guard lock(run->mu);
          emit(*run, "evaluation_failed", {{"error", e.what()}});
        }
      }
      std::lock_guard lock(run->mu);
      run->similarity = similarity;
      if (!similarity.is_null()) emit(*run, "similarity", similarity);
      set_phase(*run, Phase::sealed);
      publish(*run);
    }
  } catch (const std::exception& e) {
    std::lock_guard lock(run->mu);
    if (!is_terminal(run->record.phase)) {
      set_phase(*run, Phase::failed, std::string(e.what()));
      publish(*run);
    }
  }
}

Json RunService::command(const std::string& id, const std::string& kind, const Json& body,
                         const std::optional<std::string>& idempotency_key) {
  if (!body.is_object()) throw BadRequestError("request body must be a JSON object");
  auto run = find(id);
  std::lock_guard lock(run->mu);
  const std::string digest = digest_of(body);
  if (idempotency_key) {
    if (auto it = run->idempotency.find(*idempotency_key); it != run->idempotency.end()) {
      if (it->second.at("kind") != kind || it->second.at("body_digest") != digest)
        throw ConflictError("idempotency key '" + *idempotency_key + "' was used for a different request");
      Json replayed = it->second.at("response");
      replayed["replayed"] = true;
      return replayed;
    }
  }
  if (run->record.phase != Phase::simulating || !run->simulation || run->simulation->sealed())
    throw ConflictError("run '" + id + "' is " + std::string(to_string(run->record.phase)) +
                        "; steering is only possible while simulating");

  auto& simulation = *run->simulation;
  BodyReader reader{body, {}};
  auto day = reader.integer("day_index", false);
  if (auto date = reader.text("date", false)) {
    try {
      day = CalendarDate::parse(*date).days_since(simulation.snapshot().config.start_date);
    } catch (const Error& e) {
      reader.report.add("date", e.what());
    }
  }
  const int target = day.value_or(simulation.current_day());

  Json ack;
  if (kind == "emergent_event") {
    auto description = reader.text("description", true);
    auto by = reader.text("injected_by", false);
    if (!reader.report.valid()) throw ValidationError(reader.report);
    sim::EmergentEvent event{target, *description, by.value_or("user")};
    simulation.inject_event(event);
    ack = {{"accepted", true}, {"kind", kind}, {"event", sim::to_json(event)}};
  } else {
    auto agent = reader.text("agent_id", true);
    auto decision = reader.text("decision", true);
    if (!reader.report.valid()) throw ValidationError(reader.report);
    sim::DecisionOverride override_{target, *agent, *decision};
    simulation.override_decision(override_);
    ack = {{"accepted", true}, {"kind", kind}, {"override", sim::to_json(override_)}};
  }
  sim::save_run(simulation.snapshot(), run->dir / "sim");
  emit(*run, kind, ack);
  ack["seq"] = run->events.size();
  if (idempotency_key) {
    run->idempotency[*idempotency_key] = {{"kind", kind}, {"body_digest", digest}, {"response", ack}};
    write_json_file(run->dir / "idempotency.json", Json(run->idempotency));
  }
  publish(*run);
  return ack;
}

Json RunService::post_event(const std::string& id, const Json& body,
                            const std::optional<std::string>& idempotency_key) {
  return command(id, "emergent_event", body, idempotency_key);
}

Json RunService::post_override(const std::string& id, const Json& body,
                               const std::optional<std::string>& idempotency_key) {
  return command(id, "override", body, idempotency_key);
}

Json RunService::advance(const std::string& id, int days) {
  auto run = find(id);
  if (days < 1) {
    ValidationReport report;
    report.add("days", "must be at least 1");
    throw ValidationError(report);
  }
  std::lock_guard lock(run->mu);
  if (is_terminal(run->record.phase)) throw ConflictError("run '" + id + "' is finished");
  if (run->record.settings.pacing != "manual") throw ConflictError("run '" + id + "' advances on its own");
  run->credits += days;
  emit(*run, "advance", {{"days", days}, {"credits", run->credits}});
  publish(*run);
  return {{"accepted", true}, {"credits", run->credits}};
}

RunRecord RunService::revise(const std::string& id, const Json& body) {
  if (!body.is_object()) throw BadRequestError("request body must be a JSON object");
  const auto old = record(id);
  Json req_doc = to_json(old.requirement);
  Json config_doc = to_json(old.settings);
  if (auto it = body.find("requirement"); it != body.end()) req_doc.merge_patch(*it);
  if (auto it = body.find("config"); it != body.end()) config_doc.merge_patch(*it);
  UserRequirement req;
  RunSettings settings;
  try {
    req = parse_requirement(req_doc);
    settings = settings_from_json(config_doc);
  } catch (const ParseError& e) {
    ValidationReport report;
    report.add(e.path(), e.what());
    throw ValidationError(report);
  }
  return create_run(req, settings, old.id);
}

Json RunService::report(const std::string& id) const {
  auto run = find(id);
  std::lock_guard lock(run->mu);
  if (run->evaluations.empty()) throw ConflictError("run '" + id + "' has no scored candidates yet");
  Json doc = {{"run_id", id},
              {"phase", to_string(run->record.phase)},
              {"evaluations", scoring::evaluation_report(run->evaluations, run->record.settings.weights, run->scripts)},
              {"selected", optional_json(run->record.selected)},
              {"outcome", nullptr},
              {"similarity", run->similarity},
              {"similarity_text", nullptr},
              {"revise", "/runs/" + id + "/revise"}};
  if (run->simulation) {
    const auto log = run->simulation->snapshot();
    if (log.outcome) doc["outcome"] = sim::to_json(*log.outcome);
  }
  if (fs::exists(run->dir / "similarity.txt")) doc["similarity_text"] = read_text_file(run->dir / "similarity.txt");
  return doc;
}

}  // namespace dstage::service
