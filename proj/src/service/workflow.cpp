#include "dstage/service/workflow.hpp"

#include <chrono>
#include <cstdlib>

#include "dstage/script/serialization.hpp"

#ifndef DSTAGE_DATA_ROOT
#define DSTAGE_DATA_ROOT "data"
#endif

namespace dstage::service {
namespace fs = std::filesystem;

namespace {

CalendarDate today_utc() {
  const std::chrono::year_month_day ymd{std::chrono::floor<std::chrono::days>(std::chrono::system_clock::now())};
  return CalendarDate(static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                      static_cast<unsigned>(ymd.day()));
}

template <typename T>
void read_optional(const Json& doc, const char* key, std::optional<T>& out) {
  if (auto it = doc.find(key); it != doc.end() && !it->is_null()) out = it->get<T>();
}

}  // namespace

fs::path dataset_root() {
  if (const char* env = std::getenv("DSTAGE_DATASETS"); env && *env) return env;
  return DSTAGE_DATA_ROOT;
}

RunSettings settings_from_json(const Json& doc) {
  if (!doc.is_object()) throw ParseError("config", "expected an object");
  RunSettings s;
  std::string field = "config";
  try {
    field = "config.candidates";
    s.candidates = doc.value("candidates", s.candidates);
    if (s.candidates < 1) throw ParseError(field, "at least one candidate is required");
    field = "config.max_attempts";
    s.max_attempts = doc.value("max_attempts", s.max_attempts);
    if (s.max_attempts < 1) throw ParseError(field, "at least one attempt is required");
    field = "config.weights";
    if (auto it = doc.find("weights"); it != doc.end()) s.weights = scoring::WeightVector::from_json(*it);
    field = "config.supervisor";
    s.supervisor = doc.value("supervisor", s.supervisor);
    field = "config.max_actors";
    s.limits.max_actors = doc.value("max_actors", s.limits.max_actors);
    if (s.limits.max_actors < 2) throw ParseError(field, "a cast needs room for at least 2 actors");
    field = "config.days";
    s.days = doc.value("days", s.days);
    if (s.days < 1) throw ParseError(field, "days must be at least 1");
    field = "config.start_date";
    if (auto it = doc.find("start_date"); it != doc.end() && !it->is_null())
      s.start_date = CalendarDate::parse(it->get<std::string>());
    field = "config.constraints";
    if (auto it = doc.find("constraints"); it != doc.end())
      for (const auto& c : *it) s.constraints.push_back(sim::constraint_from_json(c));
    field = "config.design_point_id";
    read_optional(doc, "design_point_id", s.design_point_id);
    field = "config.tension_factor";
    read_optional(doc, "tension_factor", s.tension_factor);
    field = "config.channel_window";
    read_optional(doc, "channel_window", s.channel_window);
    field = "config.events";
    if (auto it = doc.find("events"); it != doc.end()) {
      for (const auto& e : *it) {
        ScheduledEvent ev;
        read_optional(e, "day_index", ev.day_index);
        if (auto d = e.find("date"); d != e.end() && !d->is_null()) ev.date = CalendarDate::parse(d->get<std::string>());
        ev.description = e.at("description").get<std::string>();
        if (!ev.day_index && !ev.date) throw ParseError(field, "event needs a day_index or a date");
        s.events.push_back(std::move(ev));
      }
    }
    field = "config.overrides";
    if (auto it = doc.find("overrides"); it != doc.end())
      for (const auto& o : *it) s.overrides.push_back(sim::override_from_json(o));
    field = "config.pacing";
    s.pacing = doc.value("pacing", s.pacing);
    if (s.pacing != "auto" && s.pacing != "manual") throw ParseError(field, "pacing is 'auto' or 'manual'");
    field = "config.tick_delay_ms";
    s.tick_delay_ms = doc.value("tick_delay_ms", s.tick_delay_ms);
    field = "config.timeline";
    read_optional(doc, "timeline", s.timeline);
  } catch (const ParseError& e) {
    if (e.path().rfind("config", 0) == 0) throw;
    throw ParseError(field, e.what());
  } catch (const Json::exception& e) {
    throw ParseError(field, e.what());
  } catch (const ValidationError& e) {
    throw ParseError(field, e.what());
  }
  return s;
}

Json to_json(const RunSettings& s) {
  Json constraints = Json::array();
  for (const auto& c : s.constraints) constraints.push_back(sim::to_json(c));
  Json events = Json::array();
  for (const auto& e : s.events) {
    Json doc = {{"description", e.description}};
    if (e.day_index) doc["day_index"] = *e.day_index;
    if (e.date) doc["date"] = e.date->to_string();
    events.push_back(std::move(doc));
  }
  Json overrides = Json::array();
  for (const auto& o : s.overrides) overrides.push_back(sim::to_json(o));
  auto opt = [](const auto& v) { return v ? Json(*v) : Json(nullptr); };
  return {{"candidates", s.candidates},
          {"max_attempts", s.max_attempts},
          {"weights", s.weights.to_json()},
          {"supervisor", s.supervisor},
          {"max_actors", s.limits.max_actors},
          {"days", s.days},
          {"start_date", s.start_date ? Json(s.start_date->to_string()) : Json(nullptr)},
          {"constraints", std::move(constraints)},
          {"design_point_id", opt(s.design_point_id)},
          {"tension_factor", opt(s.tension_factor)},
          {"channel_window", opt(s.channel_window)},
          {"events", std::move(events)},
          {"overrides", std::move(overrides)},
          {"pacing", s.pacing},
          {"tick_delay_ms", s.tick_delay_ms},
          {"timeline", opt(s.timeline)}};
}

std::optional<eval::HistoricalTimeline> resolve_timeline(const RunSettings& settings, const UserRequirement& req) {
  std::optional<std::string> name = settings.timeline;
  if (!name && req.scenario_tag) {
    if (!fs::exists(dataset_root() / *req.scenario_tag / "timeline.json")) return std::nullopt;
    name = req.scenario_tag;
  }
  if (!name) return std::nullopt;
  if (fs::exists(dataset_root() / *name / "timeline.json"))
    return eval::HistoricalTimeline::load(dataset_root() / *name / "timeline.json");
  if (fs::is_regular_file(*name)) return eval::HistoricalTimeline::load(*name);
  throw NotFoundError("timeline '" + *name + "' not found");
}

pipeline::CompositionResult design(const UserRequirement& req, const RunSettings& settings, llm::Gateway& gateway,
                                   const llm::PromptLibrary& prompts,
                                   std::function<void(const pipeline::CompositionEvent&)> on_event) {
  pipeline::ComposeOptions options;
  options.max_attempts_per_stage = settings.max_attempts;
  options.on_event = std::move(on_event);
  pipeline::Composer composer(gateway, prompts, options);
  return composer.compose_candidates(req, settings.candidates);
}

Selection finalize(const std::vector<Script>& scripts, const UserRequirement& req, const RunSettings& settings,
                   llm::Gateway& gateway, const llm::PromptLibrary& prompts) {
  scoring::ChiefDirector chief(gateway, prompts);
  Selection selection;
  for (const auto& script : scripts) selection.evaluations.push_back(chief.evaluate_script(script, req, settings.weights));
  selection.selected = scoring::select_final_index(selection.evaluations);
  return selection;
}

cast::SupervisedCast make_cast(const Script& script, const UserRequirement& req, const RunSettings& settings,
                               llm::Gateway& gateway, const llm::PromptLibrary& prompts) {
  cast::ActorFactory factory(gateway, prompts, settings.limits);
  std::vector<std::string> warnings;
  auto generated = factory.generate_cast(script, req, &warnings);
  cast::SupervisedCast out{generated, {}};
  if (settings.supervisor) out = factory.supervisor_review(generated, script, req);
  out.audit.warnings.insert(out.audit.warnings.begin(), warnings.begin(), warnings.end());
  return out;
}

sim::RunConfig run_config(const RunSettings& settings, const Script& script,
                          const std::optional<eval::HistoricalTimeline>& timeline) {
  sim::RunConfig config;
  config.days = settings.days;
  if (settings.start_date) config.start_date = *settings.start_date;
  else if (timeline && !timeline->rows.empty()) config.start_date = timeline->rows.front().date;
  else config.start_date = today_utc();
  config.constraints = settings.constraints;
  if (settings.design_point_id) {
    auto it = std::find_if(script.design_points.begin(), script.design_points.end(),
                           [&](const DesignPoint& p) { return p.id == *settings.design_point_id; });
    if (it == script.design_points.end())
      throw sim::SimulationError("design point '" + *settings.design_point_id + "' does not belong to the script");
    config.design_point = *it;
  }
  config.tension_factor = settings.tension_factor;
  config.channel_window = settings.channel_window;
  return config;
}

std::unique_ptr<sim::Simulation> start_simulation(const Script& script, const cast::Cast& cast,
                                                  const RunSettings& settings,
                                                  const std::optional<eval::HistoricalTimeline>& timeline,
                                                  std::string run_id, const llm::PromptLibrary& prompts) {
  const auto config = run_config(settings, script, timeline);
  auto simulation =
      std::make_unique<sim::Simulation>(sim::Simulation::init_run(script, cast, config, std::move(run_id)), prompts);
  for (const auto& e : settings.events) {
    const int day = e.day_index ? *e.day_index : e.date->days_since(config.start_date);
    simulation->inject_event({day, e.description, "user"});
  }
  for (const auto& o : settings.overrides) simulation->override_decision(o);
  return simulation;
}

Artifacts run_end_to_end(const UserRequirement& req, const RunSettings& settings, llm::Gateway& gateway,
                         const llm::PromptLibrary& prompts, std::string run_id) {
  Artifacts a;
  a.requirement = req;
  a.settings = settings;
  a.composition = design(req, settings, gateway, prompts);
  a.selection = finalize(a.composition.scripts, req, settings, gateway, prompts);
  const auto& script = a.composition.scripts.at(a.selection.selected);
  a.cast = make_cast(script, req, settings, gateway, prompts);
  const auto timeline = resolve_timeline(settings, req);
  auto simulation = start_simulation(script, a.cast.cast, settings, timeline, std::move(run_id), prompts);
  while (!simulation->log().finished()) simulation->step_day(gateway);
  simulation->finalize_run(gateway);
  a.run = simulation->snapshot();
  if (timeline) a.similarity = eval::evaluate_run(a.run, *timeline, gateway, gateway, {}, prompts);
  return a;
}

void write_artifacts(const Artifacts& a, const fs::path& dir) {
  fs::create_directories(dir / "candidates");
  write_json_file(dir / "requirement.json", to_json(a.requirement));
  write_json_file(dir / "settings.json", to_json(a.settings));
  for (const auto& script : a.composition.scripts)
    write_json_file(dir / "candidates" / (script_id(script) + ".json"), serialize_script(script));
  write_text_file(dir / "composition_log.jsonl", pipeline::event_log_jsonl(a.composition.run.event_log));
  write_json_file(dir / "evaluations.json",
                  scoring::evaluation_report(a.selection.evaluations, a.settings.weights, a.composition.scripts));
  write_json_file(dir / "final_script.json", serialize_script(a.composition.scripts.at(a.selection.selected)));
  write_json_file(dir / "cast.json", cast::to_json(a.cast.cast));
  write_json_file(dir / "cast_audit.json", cast::to_json(a.cast.audit));
  sim::save_run(a.run, dir / "run");
  if (a.similarity) {
    write_json_file(dir / "similarity.json", eval::to_json(*a.similarity));
    write_text_file(dir / "similarity.txt", eval::report_text(*a.similarity));
  }
}

}  // namespace dstage::service
