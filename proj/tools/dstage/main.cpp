// dstage: command-line front end for composing, casting, simulating and
// evaluating experiment scripts, and for serving the HTTP API.

#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "dstage/llm/http_provider.hpp"
#include "dstage/script/serialization.hpp"
#include "dstage/service/http_server.hpp"
#include "dstage/service/run_service.hpp"
#include "dstage/service/workflow.hpp"

namespace fs = std::filesystem;
using namespace dstage;

namespace {

struct Common {
  std::string fixture;
  std::string record;
  std::string config;
};

std::shared_ptr<llm::Gateway> make_gateway(const Common& c) {
  std::string fixture = c.fixture;
  if (fixture.empty())
    if (const char* env = std::getenv("DSTAGE_FIXTURE"); env && *env) fixture = env;
  if (!fixture.empty()) return llm::Gateway::replay(llm::Fixture::load(fixture));
  auto provider = std::make_shared<llm::HttpChatProvider>(llm::HttpChatProvider::from_environment());
  if (!c.record.empty()) return llm::Gateway::recording(provider, llm::GatewayConfig::defaults(), fs::path(c.record));
  return llm::Gateway::live(provider);
}

service::RunSettings load_settings(const std::string& path) {
  return path.empty() ? service::RunSettings{} : service::settings_from_json(read_json_file(path));
}

UserRequirement load_requirement(const std::string& path) {
  auto req = parse_requirement(read_json_file(path));
  if (auto report = validate_requirement(req); !report.valid()) throw ValidationError(report);
  return req;
}

void add_common(CLI::App* cmd, Common& c, bool with_config = true) {
  cmd->add_option("--fixture", c.fixture, "replay provider traffic from this fixture file");
  cmd->add_option("--record", c.record, "with a live provider, append every exchange to this fixture file");
  if (with_config) cmd->add_option("--config", c.config, "run settings JSON");
}

std::vector<Script> load_candidates(const fs::path& dir) {
  std::map<int, Script> by_index;
  for (const auto& e : fs::directory_iterator(dir / "candidates")) {
    auto script = parse_script(read_json_file(e.path()));
    by_index.emplace(script.provenance.candidate_index.value_or(static_cast<int>(by_index.size())), std::move(script));
  }
  std::vector<Script> out;
  for (auto& [i, s] : by_index) out.push_back(std::move(s));
  return out;
}

// "kennedy:always maintain a tough attitude"
sim::PersonaConstraint parse_constraint(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == text.size())
    throw ParseError("--constraint", "expected AGENT:DIRECTIVE");
  return {text.substr(0, colon), text.substr(colon + 1)};
}

// "3:description" or "1962-10-19:description"
service::ScheduledEvent parse_event(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos || colon + 1 == text.size()) throw ParseError("--event", "expected DAY:DESCRIPTION");
  service::ScheduledEvent ev;
  const auto when = text.substr(0, colon);
  if (when.find('-') != std::string::npos) ev.date = CalendarDate::parse(when);
  else ev.day_index = std::stoi(when);
  ev.description = text.substr(colon + 1);
  return ev;
}

service::HttpServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Experiment-script design, casting and day-tick simulation"};
  app.require_subcommand(1);
  const auto& prompts = llm::PromptLibrary::builtin();

  // design
  Common design_c;
  std::string design_req, design_out = "design-out";
  auto* design_cmd = app.add_subcommand("design", "compose candidate scripts and score them");
  design_cmd->add_option("--requirement", design_req, "requirement JSON")->required();
  design_cmd->add_option("--out", design_out, "output directory");
  add_common(design_cmd, design_c);

  // finalize
  std::string finalize_dir;
  std::string finalize_config;
  auto* finalize_cmd = app.add_subcommand("finalize", "select the final script from a design directory");
  finalize_cmd->add_option("--dir", finalize_dir, "output directory of `design`")->required();
  finalize_cmd->add_option("--config", finalize_config, "run settings JSON; its weights re-total the scores");

  // cast
  Common cast_c;
  std::string cast_script, cast_req, cast_out = "cast-out";
  auto* cast_cmd = app.add_subcommand("cast", "generate and audit the cast for a script");
  cast_cmd->add_option("--script", cast_script, "script JSON")->required();
  cast_cmd->add_option("--requirement", cast_req, "requirement JSON")->required();
  cast_cmd->add_option("--out", cast_out, "output directory");
  add_common(cast_cmd, cast_c);

  // simulate
  Common sim_c;
  std::string sim_script, sim_cast, sim_out = "run", sim_timeline;
  int sim_days = 0;
  std::vector<std::string> sim_constraints, sim_events;
  auto* sim_cmd = app.add_subcommand("simulate", "run the day-tick simulation");
  sim_cmd->add_option("--script", sim_script, "script JSON")->required();
  sim_cmd->add_option("--cast", sim_cast, "cast JSON")->required();
  sim_cmd->add_option("--days", sim_days, "number of days (default from config, else 13)");
  sim_cmd->add_option("--constraint", sim_constraints, "persona directive AGENT:TEXT (repeatable)");
  sim_cmd->add_option("--event", sim_events, "emergent event DAY:TEXT, DAY an index or a date (repeatable)");
  sim_cmd->add_option("--timeline", sim_timeline, "timeline used for the start date");
  sim_cmd->add_option("--out", sim_out, "run directory");
  add_common(sim_cmd, sim_c);

  // eval
  Common eval_c;
  std::string eval_run, eval_timeline, eval_out;
  bool eval_no_judge = false;
  auto* eval_cmd = app.add_subcommand("eval", "compare a sealed run with a historical timeline");
  eval_cmd->add_option("--run", eval_run, "run directory")->required();
  eval_cmd->add_option("--timeline", eval_timeline, "dataset name or timeline file")->required();
  eval_cmd->add_option("--out", eval_out, "directory for similarity.json and similarity.txt (default: the run)");
  eval_cmd->add_flag("--no-judge", eval_no_judge, "embedding similarity only");
  add_common(eval_cmd, eval_c, false);

  // run
  Common run_c;
  std::string run_req, run_out = "artifacts";
  auto* run_cmd = app.add_subcommand("run", "requirement to sealed run and report in one go");
  run_cmd->add_option("--requirement", run_req, "requirement JSON")->required();
  run_cmd->add_option("--out", run_out, "artifact directory");
  add_common(run_cmd, run_c);

  // serve
  std::string serve_host = "127.0.0.1";
  int serve_port = 8080;
  std::string serve_data;
  auto* serve_cmd = app.add_subcommand("serve", "serve the HTTP API");
  serve_cmd->add_option("--host", serve_host, "bind address");
  serve_cmd->add_option("--port", serve_port, "port, 0 for any");
  serve_cmd->add_option("--data-dir", serve_data, "run store (default $DSTAGE_DATA_DIR or ./dstage-data)");

  // fixture record / replay / inspect
  auto* fixture_cmd = app.add_subcommand("fixture", "record, replay or inspect provider fixtures");
  fixture_cmd->require_subcommand(1);
  std::string fx_req, fx_config, fx_file, fx_out = "artifacts";
  auto* fx_record = fixture_cmd->add_subcommand("record", "run end to end against the live provider and record");
  fx_record->add_option("--requirement", fx_req, "requirement JSON")->required();
  fx_record->add_option("--config", fx_config, "run settings JSON");
  fx_record->add_option("--out", fx_file, "fixture file to write")->required();
  auto* fx_replay = fixture_cmd->add_subcommand("replay", "run end to end from a fixture");
  fx_replay->add_option("--requirement", fx_req, "requirement JSON")->required();
  fx_replay->add_option("--config", fx_config, "run settings JSON");
  fx_replay->add_option("--fixture", fx_file, "fixture file")->required();
  fx_replay->add_option("--out", fx_out, "artifact directory");
  std::string fx_inspect_file;
  auto* fx_inspect = fixture_cmd->add_subcommand("inspect", "entry count per role");
  fx_inspect->add_option("file", fx_inspect_file, "fixture file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*design_cmd) {
      const auto req = load_requirement(design_req);
      const auto settings = load_settings(design_c.config);
      auto gw = make_gateway(design_c);
      const auto result = service::design(req, settings, *gw, prompts);
      const auto selection = service::finalize(result.scripts, req, settings, *gw, prompts);
      const fs::path out = design_out;
      fs::create_directories(out / "candidates");
      for (const auto& s : result.scripts)
        write_json_file(out / "candidates" / (script_id(s) + ".json"), serialize_script(s));
      write_text_file(out / "composition_log.jsonl", pipeline::event_log_jsonl(result.run.event_log));
      Json scores = Json::array();
      for (const auto& e : selection.evaluations) scores.push_back(scoring::to_json(e));
      write_json_file(out / "scores.json", scores);
      write_json_file(out / "evaluations.json",
                      scoring::evaluation_report(selection.evaluations, settings.weights, result.scripts));
      std::cout << scoring::evaluation_report_text(selection.evaluations, settings.weights);
      return 0;
    }
    if (*finalize_cmd) {
      const fs::path dir = finalize_dir;
      const auto settings = load_settings(finalize_config);
      const auto scripts = load_candidates(dir);
      std::vector<scoring::ScriptEvaluation> evals;
      for (const auto& e : read_json_file(dir / "scores.json")) {
        auto stored = scoring::evaluation_from_json(e);
        evals.push_back(scoring::make_evaluation(stored.script_id, stored.candidate_index, stored.criterion_scores,
                                                 settings.weights));
      }
      const auto selected = scoring::select_final_index(evals);
      const auto& id = evals[selected].script_id;
      for (const auto& s : scripts)
        if (script_id(s) == id) write_json_file(dir / "final_script.json", serialize_script(s));
      write_json_file(dir / "evaluations.json", scoring::evaluation_report(evals, settings.weights, scripts));
      std::cout << scoring::evaluation_report_text(evals, settings.weights) << "selected: " << id << "\n";
      return 0;
    }
    if (*cast_cmd) {
      const auto req = load_requirement(cast_req);
      const auto script = parse_script(read_json_file(cast_script));
      auto gw = make_gateway(cast_c);
      const auto result = service::make_cast(script, req, load_settings(cast_c.config), *gw, prompts);
      fs::create_directories(cast_out);
      write_json_file(fs::path(cast_out) / "cast.json", cast::to_json(result.cast));
      write_json_file(fs::path(cast_out) / "cast_audit.json", cast::to_json(result.audit));
      std::cout << result.cast.actors.size() << " actors, " << result.cast.network.edges.size() << " relationships\n";
      for (const auto& w : result.audit.warnings) std::cout << "warning: " << w << "\n";
      return 0;
    }
    if (*sim_cmd) {
      auto settings = load_settings(sim_c.config);
      if (sim_days > 0) settings.days = sim_days;
      for (const auto& c : sim_constraints) settings.constraints.push_back(parse_constraint(c));
      for (const auto& e : sim_events) settings.events.push_back(parse_event(e));
      const auto script = parse_script(read_json_file(sim_script));
      const auto cast = cast::cast_from_json(read_json_file(sim_cast));
      std::optional<eval::HistoricalTimeline> timeline;
      if (!sim_timeline.empty()) {
        settings.timeline = sim_timeline;
        timeline = service::resolve_timeline(settings, UserRequirement{});
      }
      auto gw = make_gateway(sim_c);
      auto simulation = service::start_simulation(script, cast, settings, timeline, "run", prompts);
      while (!simulation->log().finished()) {
        const auto day = simulation->step_day(*gw);
        sim::save_run(simulation->snapshot(), sim_out);
        std::printf("day %d (%s): %zu decisions, tension %.1f\n", day.day_index + 1,
                    day.calendar_date.to_string().c_str(), day.decisions.size(), day.tension);
        for (const auto& w : day.warnings) std::printf("  warning: %s\n", w.c_str());
      }
      const auto outcome = simulation->finalize_run(*gw);
      sim::save_run(simulation->snapshot(), sim_out);
      std::printf("outcome: %s (%s)\n", outcome.category.c_str(), outcome.label.c_str());
      return 0;
    }
    if (*eval_cmd) {
      const auto run = sim::load_run(eval_run);
      service::RunSettings settings;
      settings.timeline = eval_timeline;
      const auto timeline = service::resolve_timeline(settings, UserRequirement{});
      auto gw = make_gateway(eval_c);
      eval::EvaluateOptions options;
      options.use_judge = !eval_no_judge;
      const auto report = eval::evaluate_run(run, *timeline, *gw, *gw, options, prompts);
      const fs::path out = eval_out.empty() ? fs::path(eval_run) : fs::path(eval_out);
      fs::create_directories(out);
      write_json_file(out / "similarity.json", eval::to_json(report));
      write_text_file(out / "similarity.txt", eval::report_text(report));
      std::cout << eval::report_text(report);
      return 0;
    }
    if (*run_cmd || *fx_replay || *fx_record) {
      Common c = run_c;
      std::string req_path = run_req, out = run_out;
      if (*fx_replay || *fx_record) {
        c = Common{};
        c.config = fx_config;
        req_path = fx_req;
        out = fx_out;
        if (*fx_replay) c.fixture = fx_file;
      }
      const auto req = load_requirement(req_path);
      const auto settings = load_settings(c.config);
      std::shared_ptr<llm::Gateway> gw;
      if (*fx_record)
        gw = llm::Gateway::recording(
            std::make_shared<llm::HttpChatProvider>(llm::HttpChatProvider::from_environment()));
      else
        gw = make_gateway(c);
      const auto artifacts = service::run_end_to_end(req, settings, *gw, prompts);
      if (*fx_record) {
        gw->save_recording(fx_file);
        std::cout << "recorded " << gw->recorded().size() << " exchanges to " << fx_file << "\n";
        return 0;
      }
      service::write_artifacts(artifacts, out);
      std::cout << "selected " << artifacts.run.script_id << "; outcome "
                << (artifacts.run.outcome ? artifacts.run.outcome->category : std::string(sim::kUndetermined)) << "\n";
      if (artifacts.similarity) std::cout << eval::report_text(*artifacts.similarity);
      return 0;
    }
    if (*fx_inspect) {
      const auto fixture = llm::Fixture::load(fx_inspect_file);
      std::map<std::string, int> per_role;
      for (const auto& e : fixture.entries()) ++per_role[e.metadata.value("role_id", std::string("?"))];
      std::cout << fixture.size() << " entries\n";
      for (const auto& [role, n] : per_role) std::cout << "  " << role << ": " << n << "\n";
      return 0;
    }
    if (*serve_cmd) {
      if (serve_data.empty()) {
        const char* env = std::getenv("DSTAGE_DATA_DIR");
        serve_data = env && *env ? env : "dstage-data";
      }
      service::ServiceOptions options;
      options.data_dir = serve_data;
      service::RunService svc(std::move(options));
      service::HttpServer server(svc);
      const int port = server.bind(serve_host, serve_port);
      if (port < 0) {
        std::fprintf(stderr, "cannot bind %s:%d\n", serve_host.c_str(), serve_port);
        return 1;
      }
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::printf("listening on http://%s:%d (data: %s)\n", serve_host.c_str(), port, serve_data.c_str());
      std::fflush(stdout);
      server.serve();
      g_server = nullptr;
      svc.shutdown();
      return 0;
    }
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
