#include "dstage/sim/simulation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include "dstage/llm/extract.hpp"
#include "dstage/script/serialization.hpp"

namespace dstage::sim {
namespace {

std::string bullet_list(const std::vector<std::string>& items) {
  if (items.empty()) return "- none\n";
  std::string out;
  for (const auto& item : items) out += "- " + item + "\n";
  return out;
}

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

std::string describe_sample(const ResponseFactor& factor, const ResponseSample& s) {
  switch (factor.kind) {
    case ResponseKind::scalar:
      return format_number(s.value);
    case ResponseKind::probability_vector: {
      std::string out;
      for (std::size_t i = 0; i < s.probabilities.size() && i < factor.categories.size(); ++i) {
        if (!out.empty()) out += ", ";
        out += factor.categories[i] + "=" + format_number(s.probabilities[i]);
      }
      return out;
    }
    case ResponseKind::categorical:
      return s.category;
  }
  return {};
}

std::string render_messages(const std::vector<WorldMessage>& messages, const CalendarDate& start) {
  if (messages.empty()) return "(no messages)\n";
  std::string out;
  for (const auto& m : messages) {
    out += "[day " + std::to_string(m.day_index + 1) + ", " + start.plus_days(m.day_index).to_string() +
           "] " + m.sender + " (" + std::string(to_string(m.kind)) + "): " + m.text + "\n";
  }
  return out;
}

std::string render_attributes(const AttributeMap& attrs) {
  if (attrs.empty()) return "- none\n";
  std::string out;
  for (const auto& [k, v] : attrs) out += "- " + k + ": " + v + "\n";
  return out;
}

std::vector<WorldMessage> messages_of_day(const std::vector<WorldMessage>& channel, int day) {
  std::vector<WorldMessage> out;
  for (const auto& m : channel)
    if (m.day_index == day) out.push_back(m);
  return out;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::optional<ResponseSample> parse_sample(const ResponseFactor& factor, std::string_view text) {
  ResponseSample s;
  s.kind = factor.kind;
  switch (factor.kind) {
    case ResponseKind::scalar: {
      auto v = llm::extract_score(text);
      if (!v) return std::nullopt;
      s.value = *v;
      return s;
    }
    case ResponseKind::probability_vector: {
      try {
        const auto doc = llm::extract_structured(text, "judge_vector.v1");
        auto weights = doc.at("weights").get<std::vector<double>>();
        if (weights.size() != factor.categories.size()) return std::nullopt;
        auto normalized = normalize_probability_vector(weights);
        if (!normalized) return std::nullopt;
        s.probabilities = std::move(*normalized);
        return s;
      } catch (const llm::ExtractionError&) {
        return std::nullopt;
      }
    }
    case ResponseKind::categorical: {
      try {
        const auto doc = llm::extract_structured(text, "judge_category.v1");
        auto label = doc.at("category").get<std::string>();
        if (std::find(factor.categories.begin(), factor.categories.end(), label) == factor.categories.end())
          return std::nullopt;
        s.category = std::move(label);
        return s;
      } catch (const llm::ExtractionError&) {
        return std::nullopt;
      }
    }
  }
  return std::nullopt;
}

std::string answer_format(const ResponseFactor& factor) {
  switch (factor.kind) {
    case ResponseKind::scalar:
      return "Rate the variable on a 0 to 100 scale. Reply with JSON only: {\"score\": <number>, "
             "\"rationale\": \"...\"}";
    case ResponseKind::probability_vector: {
      std::string cats;
      for (const auto& c : factor.categories) cats += (cats.empty() ? "" : ", ") + c;
      return "Give one non-negative weight per category, in this order: " + cats +
             ". Weights are normalized afterwards. Reply with JSON only: {\"weights\": [<numbers>], "
             "\"rationale\": \"...\"}";
    }
    case ResponseKind::categorical: {
      std::string cats;
      for (const auto& c : factor.categories) cats += (cats.empty() ? "" : ", ") + c;
      return "Choose exactly one category from: " + cats +
             ". Reply with JSON only: {\"category\": \"<category>\", \"rationale\": \"...\"}";
    }
  }
  return {};
}

std::string_view schema_for(ResponseKind kind) {
  switch (kind) {
    case ResponseKind::scalar: return "judge_scalar.v1";
    case ResponseKind::probability_vector: return "judge_vector.v1";
    case ResponseKind::categorical: return "judge_category.v1";
  }
  return "judge_scalar.v1";
}

struct ParsedDecision {
  std::string statement;
  std::string action;
  AttributeMap updates;
};

Json attributes_json(const std::map<std::string, AttributeMap>& states) {
  Json out = Json::object();
  for (const auto& [id, attrs] : states) out[id] = attrs;
  return out;
}

std::map<std::string, AttributeMap> attributes_from_json(const Json& doc) {
  std::map<std::string, AttributeMap> out;
  for (const auto& [id, attrs] : doc.items()) out[id] = attrs.get<AttributeMap>();
  return out;
}

template <typename F>
auto parsing(std::string_view what, F&& fn) {
  try {
    return fn();
  } catch (const Json::exception& e) {
    throw ParseError(std::string(what), e.what());
  }
}

}  // namespace

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::statement: return "statement";
    case MessageKind::action: return "action";
    case MessageKind::emergent_event: return "emergent_event";
    case MessageKind::override_notice: return "override_notice";
  }
  return "statement";
}

MessageKind message_kind_from_string(std::string_view text) {
  for (auto k : {MessageKind::statement, MessageKind::action, MessageKind::emergent_event,
                 MessageKind::override_notice})
    if (to_string(k) == text) return k;
  throw ParseError("kind", "unknown message kind '" + std::string(text) + "'");
}

const Decision* RunLog::decision(int day_index, std::string_view agent_id) const {
  if (day_index < 0 || static_cast<std::size_t>(day_index) >= days.size()) return nullptr;
  for (const auto& d : days[static_cast<std::size_t>(day_index)].decisions)
    if (d.agent_id == agent_id) return &d;
  return nullptr;
}

std::optional<std::vector<double>> normalize_probability_vector(const std::vector<double>& weights) {
  if (weights.empty()) return std::nullopt;
  std::vector<double> out;
  out.reserve(weights.size());
  for (double w : weights) {
    if (!std::isfinite(w)) return std::nullopt;
    out.push_back(std::max(w, 0.0));
  }
  const double sum = std::accumulate(out.begin(), out.end(), 0.0);
  if (!(sum > 0.0) || !std::isfinite(sum)) return std::nullopt;
  for (auto& w : out) w = std::min(w / sum, 1.0);
  return out;
}

ResponseSample default_sample(const ResponseFactor& factor) {
  ResponseSample s;
  s.kind = factor.kind;
  switch (factor.kind) {
    case ResponseKind::scalar:
      s.value = 50.0;
      break;
    case ResponseKind::probability_vector:
      s.probabilities.assign(factor.categories.size(),
                             factor.categories.empty() ? 0.0 : 1.0 / static_cast<double>(factor.categories.size()));
      break;
    case ResponseKind::categorical:
      s.category = factor.categories.empty() ? std::string{} : factor.categories.front();
      break;
  }
  return s;
}

std::optional<std::string> tension_source(const Script& script, const RunConfig& config) {
  if (config.tension_factor) return config.tension_factor;
  const ResponseFactor* fallback = nullptr;
  for (const auto& r : script.responses) {
    if (r.kind != ResponseKind::scalar) continue;
    const auto name = lower(r.name);
    if (name.find("tension") == std::string::npos) continue;
    if (name.find("index") != std::string::npos) return r.name;
    if (fallback == nullptr) fallback = &r;
  }
  if (fallback) return fallback->name;
  return std::nullopt;
}

Json to_json(const WorldMessage& m) {
  return {{"day_index", m.day_index}, {"sender", m.sender}, {"text", m.text}, {"kind", to_string(m.kind)}};
}

Json to_json(const EmergentEvent& e) {
  return {{"day_index", e.day_index}, {"description", e.description}, {"injected_by", e.injected_by}};
}

Json to_json(const DecisionOverride& o) {
  return {{"day_index", o.day_index}, {"agent_id", o.agent_id}, {"decision", o.decision}};
}

Json to_json(const PersonaConstraint& c) { return {{"agent_id", c.agent_id}, {"directive", c.directive}}; }

Json to_json(const ResponseSample& s) {
  Json doc = {{"kind", to_string(s.kind)}, {"carried_forward", s.carried_forward}};
  switch (s.kind) {
    case ResponseKind::scalar: doc["value"] = s.value; break;
    case ResponseKind::probability_vector: doc["probabilities"] = s.probabilities; break;
    case ResponseKind::categorical: doc["category"] = s.category; break;
  }
  return doc;
}

Json to_json(const WorldState& s) {
  Json channel = Json::array();
  for (const auto& m : s.channel) channel.push_back(to_json(m));
  Json series = Json::object();
  for (const auto& [name, samples] : s.response_series) {
    Json list = Json::array();
    for (const auto& sample : samples) list.push_back(to_json(sample));
    series[name] = std::move(list);
  }
  return {{"day_index", s.day_index},
          {"calendar_date", s.calendar_date.to_string()},
          {"channel", std::move(channel)},
          {"agent_states", attributes_json(s.agent_states)},
          {"tension_series", s.tension_series},
          {"response_series", std::move(series)}};
}

Json to_json(const Decision& d) {
  return {{"day_index", d.day_index},
          {"agent_id", d.agent_id},
          {"prompt_digest", d.prompt_digest},
          {"text", d.text},
          {"overridden", d.overridden}};
}

Json to_json(const DaySummary& d) {
  Json messages = Json::array();
  for (const auto& m : d.messages) messages.push_back(to_json(m));
  Json decisions = Json::array();
  for (const auto& x : d.decisions) decisions.push_back(to_json(x));
  Json samples = Json::object();
  for (const auto& [name, s] : d.samples) samples[name] = to_json(s);
  return {{"day_index", d.day_index},
          {"calendar_date", d.calendar_date.to_string()},
          {"messages", std::move(messages)},
          {"decisions", std::move(decisions)},
          {"samples", std::move(samples)},
          {"tension", d.tension},
          {"agent_states", attributes_json(d.agent_states)},
          {"warnings", d.warnings}};
}

Json to_json(const FinalOutcome& o) { return {{"label", o.label}, {"category", o.category}, {"raw", o.raw}}; }

Json to_json(const RunConfig& c) {
  Json constraints = Json::array();
  for (const auto& x : c.constraints) constraints.push_back(to_json(x));
  return {{"days", c.days},
          {"start_date", c.start_date.to_string()},
          {"constraints", std::move(constraints)},
          {"design_point", c.design_point ? to_json(*c.design_point) : Json(nullptr)},
          {"tension_factor", c.tension_factor ? Json(*c.tension_factor) : Json(nullptr)},
          {"channel_window", c.channel_window ? Json(*c.channel_window) : Json(nullptr)},
          {"seed", c.seed}};
}

WorldMessage message_from_json(const Json& doc) {
  return parsing("message", [&] {
    return WorldMessage{doc.at("day_index").get<int>(), doc.at("sender").get<std::string>(),
                        doc.at("text").get<std::string>(),
                        message_kind_from_string(doc.at("kind").get<std::string>())};
  });
}

EmergentEvent event_from_json(const Json& doc) {
  return parsing("event", [&] {
    if (!doc.is_object()) throw ParseError("event", "expected an object");
    EmergentEvent e{doc.at("day_index").get<int>(), doc.at("description").get<std::string>(),
                    doc.value("injected_by", std::string("user"))};
    if (e.description.find_first_not_of(" \t\r\n") == std::string::npos)
      throw ParseError("event.description", "description is empty");
    return e;
  });
}

DecisionOverride override_from_json(const Json& doc) {
  return parsing("override", [&] {
    if (!doc.is_object()) throw ParseError("override", "expected an object");
    DecisionOverride o{doc.at("day_index").get<int>(), doc.at("agent_id").get<std::string>(),
                       doc.at("decision").get<std::string>()};
    if (o.decision.find_first_not_of(" \t\r\n") == std::string::npos)
      throw ParseError("override.decision", "decision is empty");
    return o;
  });
}

PersonaConstraint constraint_from_json(const Json& doc) {
  return parsing("constraint", [&] {
    return PersonaConstraint{doc.at("agent_id").get<std::string>(), doc.at("directive").get<std::string>()};
  });
}

ResponseSample sample_from_json(const Json& doc) {
  return parsing("sample", [&] {
    ResponseSample s;
    auto kind = response_kind_from_string(doc.at("kind").get<std::string>());
    if (!kind) throw ParseError("sample.kind", "unknown response kind");
    s.kind = *kind;
    s.carried_forward = doc.value("carried_forward", false);
    switch (s.kind) {
      case ResponseKind::scalar: s.value = doc.at("value").get<double>(); break;
      case ResponseKind::probability_vector:
        s.probabilities = doc.at("probabilities").get<std::vector<double>>();
        break;
      case ResponseKind::categorical: s.category = doc.at("category").get<std::string>(); break;
    }
    return s;
  });
}

WorldState state_from_json(const Json& doc) {
  return parsing("state", [&] {
    WorldState s;
    s.day_index = doc.at("day_index").get<int>();
    s.calendar_date = CalendarDate::parse(doc.at("calendar_date").get<std::string>());
    for (const auto& m : doc.at("channel")) s.channel.push_back(message_from_json(m));
    s.agent_states = attributes_from_json(doc.at("agent_states"));
    s.tension_series = doc.at("tension_series").get<std::vector<double>>();
    for (const auto& [name, list] : doc.at("response_series").items())
      for (const auto& sample : list) s.response_series[name].push_back(sample_from_json(sample));
    return s;
  });
}

Decision decision_from_json(const Json& doc) {
  return parsing("decision", [&] {
    return Decision{doc.at("day_index").get<int>(), doc.at("agent_id").get<std::string>(),
                    doc.at("prompt_digest").get<std::string>(), doc.at("text").get<std::string>(),
                    doc.at("overridden").get<bool>()};
  });
}

DaySummary day_from_json(const Json& doc) {
  return parsing("day", [&] {
    DaySummary d;
    d.day_index = doc.at("day_index").get<int>();
    d.calendar_date = CalendarDate::parse(doc.at("calendar_date").get<std::string>());
    for (const auto& m : doc.at("messages")) d.messages.push_back(message_from_json(m));
    for (const auto& x : doc.at("decisions")) d.decisions.push_back(decision_from_json(x));
    for (const auto& [name, s] : doc.at("samples").items()) d.samples[name] = sample_from_json(s);
    d.tension = doc.at("tension").get<double>();
    d.agent_states = attributes_from_json(doc.at("agent_states"));
    d.warnings = doc.at("warnings").get<std::vector<std::string>>();
    return d;
  });
}

FinalOutcome outcome_from_json(const Json& doc) {
  return parsing("outcome", [&] {
    return FinalOutcome{doc.at("label").get<std::string>(), doc.at("category").get<std::string>(),
                        doc.value("raw", std::string{})};
  });
}

RunConfig run_config_from_json(const Json& doc) {
  return parsing("config", [&] {
    if (!doc.is_object()) throw ParseError("config", "expected an object");
    RunConfig c;
    c.days = doc.value("days", 1);
    if (auto it = doc.find("start_date"); it != doc.end() && !it->is_null())
      c.start_date = CalendarDate::parse(it->get<std::string>());
    if (auto it = doc.find("constraints"); it != doc.end())
      for (const auto& x : *it) c.constraints.push_back(constraint_from_json(x));
    if (auto it = doc.find("design_point"); it != doc.end() && !it->is_null())
      c.design_point = parse_design_points(Json::array({*it}), "config.design_point").front();
    if (auto it = doc.find("tension_factor"); it != doc.end() && !it->is_null())
      c.tension_factor = it->get<std::string>();
    if (auto it = doc.find("channel_window"); it != doc.end() && !it->is_null())
      c.channel_window = it->get<std::size_t>();
    c.seed = doc.value("seed", std::uint64_t{0});
    return c;
  });
}

std::string state_digest(const RunLog& log) {
  Json days = Json::array();
  for (const auto& d : log.days) days.push_back(to_json(d));
  return digest_of({{"state", to_json(log.state)},
                    {"days", std::move(days)},
                    {"outcome", log.outcome ? to_json(*log.outcome) : Json(nullptr)},
                    {"sealed", log.sealed}});
}

void save_run(const RunLog& log, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "days");
  write_json_file(dir / "config.json",
                  {{"run_id", log.run_id}, {"script_id", log.script_id}, {"config", to_json(log.config)}});
  write_json_file(dir / "script.json", serialize_script(log.script));
  write_json_file(dir / "cast.json", cast::to_json(log.cast));
  for (const auto& d : log.days) {
    char name[32];
    std::snprintf(name, sizeof name, "day-%03d.json", d.day_index);
    write_json_file(dir / "days" / name, to_json(d));
  }
  Json series = Json::object();
  for (const auto& [name, samples] : log.state.response_series) {
    Json list = Json::array();
    for (const auto& s : samples) list.push_back(to_json(s));
    series[name] = std::move(list);
  }
  write_json_file(dir / "series.json",
                  {{"tension_series", log.state.tension_series}, {"response_series", std::move(series)}});
  Json events = Json::array();
  for (const auto& e : log.pending_events) events.push_back(to_json(e));
  Json overrides = Json::array();
  for (const auto& o : log.pending_overrides) overrides.push_back(to_json(o));
  write_json_file(dir / "state.json", {{"state", to_json(log.state)},
                                       {"pending_events", std::move(events)},
                                       {"pending_overrides", std::move(overrides)},
                                       {"sealed", log.sealed}});
  if (log.outcome) write_json_file(dir / "outcome.json", to_json(*log.outcome));
}

RunLog load_run(const std::filesystem::path& dir) {
  RunLog log;
  const auto config = read_json_file(dir / "config.json");
  log.run_id = config.at("run_id").get<std::string>();
  log.script_id = config.at("script_id").get<std::string>();
  log.config = run_config_from_json(config.at("config"));
  log.script = parse_script(read_json_file(dir / "script.json"));
  log.cast = cast::cast_from_json(read_json_file(dir / "cast.json"));
  const auto saved = read_json_file(dir / "state.json");
  log.state = state_from_json(saved.at("state"));
  for (const auto& e : saved.at("pending_events")) log.pending_events.push_back(event_from_json(e));
  for (const auto& o : saved.at("pending_overrides")) log.pending_overrides.push_back(override_from_json(o));
  log.sealed = saved.at("sealed").get<bool>();
  // Day files beyond the saved state belong to a tick that never committed.
  for (int day = 0; day < log.state.day_index; ++day) {
    char name[32];
    std::snprintf(name, sizeof name, "day-%03d.json", day);
    log.days.push_back(day_from_json(read_json_file(dir / "days" / name)));
  }
  if (std::filesystem::exists(dir / "outcome.json"))
    log.outcome = outcome_from_json(read_json_file(dir / "outcome.json"));
  return log;
}

RunLog Simulation::init_run(const Script& script, const cast::Cast& cast, const RunConfig& config,
                            std::string run_id) {
  if (auto report = validate_script(script); !report.valid()) throw ValidationError(report);
  if (auto report = cast::validate_cast(cast, script); !report.valid()) throw ValidationError(report);
  if (config.days < 1) throw SimulationError("days must be at least 1");
  for (const auto& c : config.constraints) {
    const auto* actor = cast.find(c.agent_id);
    if (actor == nullptr || actor->is_environment())
      throw SimulationError("persona constraint names unknown agent '" + c.agent_id + "'");
    if (c.directive.find_first_not_of(" \t\r\n") == std::string::npos)
      throw SimulationError("persona constraint for '" + c.agent_id + "' has an empty directive");
  }
  if (config.design_point &&
      std::find(script.design_points.begin(), script.design_points.end(), *config.design_point) ==
          script.design_points.end())
    throw SimulationError("design point '" + config.design_point->id + "' does not belong to the script");
  if (config.tension_factor) {
    const auto* r = script.find_response(*config.tension_factor);
    if (r == nullptr || r->kind != ResponseKind::scalar)
      throw SimulationError("tension factor '" + *config.tension_factor + "' is not a scalar response");
  }

  RunLog log;
  log.run_id = std::move(run_id);
  log.script_id = script_id(script);
  log.script = script;
  log.cast = cast;
  log.config = config;
  log.state.calendar_date = config.start_date;
  for (const auto& a : cast.actors) log.state.agent_states[a.id] = {};
  if (config.design_point) {
    for (const auto& [factor, level] : config.design_point->assignments)
      for (const auto& a : cast.actors)
        if (a.influence_factors.contains(factor)) log.state.agent_states[a.id][factor] = level_to_string(level);
  }
  for (const auto& r : script.responses) log.state.response_series[r.name] = {};

  std::string names;
  for (const auto* a : cast.performers()) names += (names.empty() ? "" : ", ") + a->intrinsic.name;
  std::string opening = "Scenario opens on " + config.start_date.to_string() + " for " +
                        std::to_string(config.days) + " day(s). " + script.goal.statement +
                        " Participants: " + names + ".";
  if (config.design_point) opening += " Design point: " + config.design_point->id + ".";
  log.state.channel.push_back({0, std::string(kSystemSender), std::move(opening), MessageKind::statement});
  return log;
}

Simulation::Simulation(RunLog log, const llm::PromptLibrary& prompts) : log_(std::move(log)), prompts_(prompts) {
  current_day_ = log_.state.day_index;
  sealed_ = log_.sealed;
}

RunLog Simulation::snapshot() const {
  std::lock_guard lock(mu_);
  RunLog copy = log_;
  copy.pending_events.insert(copy.pending_events.end(), incoming_events_.begin(), incoming_events_.end());
  copy.pending_overrides.insert(copy.pending_overrides.end(), incoming_overrides_.begin(),
                                incoming_overrides_.end());
  return copy;
}

void Simulation::check_command_day(int day_index) const {
  if (sealed_) throw CommandError("run is sealed");
  const int earliest = current_day_;
  if (day_index < earliest)
    throw CommandError("day " + std::to_string(day_index) + " is in the past; the next day is " +
                       std::to_string(earliest));
  if (day_index >= log_.config.days)
    throw CommandError("day " + std::to_string(day_index) + " is beyond the last day " +
                       std::to_string(log_.config.days - 1));
}

void Simulation::inject_event(EmergentEvent event) {
  std::lock_guard lock(mu_);
  check_command_day(event.day_index);
  if (event.description.find_first_not_of(" \t\r\n") == std::string::npos)
    throw CommandError("event description is empty");
  incoming_events_.push_back(std::move(event));
}

void Simulation::override_decision(DecisionOverride o) {
  std::lock_guard lock(mu_);
  check_command_day(o.day_index);
  const auto* actor = log_.cast.find(o.agent_id);
  if (actor == nullptr || actor->is_environment())
    throw CommandError("override names unknown agent '" + o.agent_id + "'");
  auto same = [&](const DecisionOverride& x) { return x.day_index == o.day_index && x.agent_id == o.agent_id; };
  if (std::any_of(incoming_overrides_.begin(), incoming_overrides_.end(), same) ||
      std::any_of(log_.pending_overrides.begin(), log_.pending_overrides.end(), same))
    throw CommandError("an override for " + o.agent_id + " on day " + std::to_string(o.day_index) +
                       " is already queued");
  incoming_overrides_.push_back(std::move(o));
}

void Simulation::drain_commands() {
  std::lock_guard lock(mu_);
  log_.pending_events.insert(log_.pending_events.end(), incoming_events_.begin(), incoming_events_.end());
  log_.pending_overrides.insert(log_.pending_overrides.end(), incoming_overrides_.begin(),
                                incoming_overrides_.end());
  incoming_events_.clear();
  incoming_overrides_.clear();
  // Commands accepted from now on target the day after the one being run.
  current_day_ = log_.state.day_index + 1;
}

DaySummary Simulation::step_day(llm::Gateway& gateway) {
  if (log_.sealed) throw SimulationError("run is sealed");
  if (log_.finished())
    throw SimulationError("all " + std::to_string(log_.config.days) + " days have already run");

  drain_commands();
  RunLog working = log_;
  try {
    auto& state = working.state;
    const int day = state.day_index;
    DaySummary summary;
    summary.day_index = day;
    summary.calendar_date = state.calendar_date;

    std::vector<EmergentEvent> today_events;
    std::erase_if(working.pending_events, [&](const EmergentEvent& e) {
      if (e.day_index != day) return false;
      today_events.push_back(e);
      return true;
    });
    std::vector<std::string> event_lines;
    for (const auto& e : today_events) {
      state.channel.push_back({day, std::string(kSystemSender), e.description, MessageKind::emergent_event});
      event_lines.push_back(e.description);
    }
    std::map<std::string, DecisionOverride> overrides;
    std::erase_if(working.pending_overrides, [&](const DecisionOverride& o) {
      if (o.day_index != day) return false;
      overrides.emplace(o.agent_id, o);
      return true;
    });

    for (const auto& actor : working.cast.actors) {
      if (actor.is_environment()) continue;
      Decision decision;
      decision.day_index = day;
      decision.agent_id = actor.id;

      if (auto it = overrides.find(actor.id); it != overrides.end()) {
        decision.text = it->second.decision;
        decision.overridden = true;
        state.channel.push_back({day, std::string(kSystemSender),
                                 "User override: the decision of " + actor.intrinsic.name + " for " +
                                     state.calendar_date.to_string() + " was replaced.",
                                 MessageKind::override_notice});
        state.channel.push_back({day, actor.id, decision.text, MessageKind::action});
        summary.decisions.push_back(std::move(decision));
        continue;
      }

      std::vector<std::string> goals = actor.goals;
      std::vector<std::string> factors;
      const auto& own_state = state.agent_states[actor.id];
      for (const auto& f : actor.influence_factors) {
        const auto* factor = working.script.find_factor(f);
        std::string line = f + (factor ? ": " + factor->description : std::string{});
        if (auto level = own_state.find(f); level != own_state.end()) line += " (current level: " + level->second + ")";
        factors.push_back(std::move(line));
      }
      std::string constraint;
      for (const auto& c : working.config.constraints)
        if (c.agent_id == actor.id) constraint += "\nStanding directive, follow it at all times: " + c.directive + "\n";

      std::vector<WorldMessage> visible = state.channel;
      if (working.config.channel_window && visible.size() > *working.config.channel_window)
        visible.erase(visible.begin(), visible.end() - static_cast<std::ptrdiff_t>(*working.config.channel_window));

      const auto prompt = prompts_.render(
          "actor_decision.v1",
          {{"name", actor.intrinsic.name},
           {"identity", actor.intrinsic.identity},
           {"description", actor.intrinsic.description},
           {"goal", working.script.goal.statement},
           {"goals", bullet_list(goals)},
           {"knowledge", bullet_list(actor.knowledge)},
           {"factors", bullet_list(factors)},
           {"constraint", constraint},
           {"state", render_attributes(own_state)},
           {"day_number", std::to_string(day + 1)},
           {"day_count", std::to_string(working.config.days)},
           {"date", state.calendar_date.to_string()},
           {"events", bullet_list(event_lines)},
           {"channel", render_messages(visible, working.config.start_date)}});
      const auto request = gateway.request(llm::roles::actor(actor.id), prompt.system, prompt.user,
                                           std::string("decision.v1"));
      decision.prompt_digest = llm::request_digest(request);

      ParsedDecision parsed;
      std::string raw;
      bool ok = false;
      for (int attempt = 0; attempt < 2 && !ok; ++attempt) {
        raw = gateway.complete(request);
        try {
          const auto doc = llm::extract_structured(raw, "decision.v1");
          parsed.statement = doc.value("statement", std::string{});
          parsed.action = doc.at("action").get<std::string>();
          if (auto u = doc.find("state_updates"); u != doc.end()) parsed.updates = u->get<AttributeMap>();
          ok = true;
        } catch (const llm::ExtractionError&) {
        }
      }
      if (!ok) {
        parsed.action = raw;
        parsed.action.erase(0, parsed.action.find_first_not_of(" \t\r\n"));
        parsed.action.erase(parsed.action.find_last_not_of(" \t\r\n") + 1);
        if (parsed.action.empty()) parsed.action = "(no decision)";
        summary.warnings.push_back("decision of " + actor.id + " was not structured; kept the raw text");
      }
      if (!parsed.statement.empty())
        state.channel.push_back({day, actor.id, parsed.statement, MessageKind::statement});
      state.channel.push_back({day, actor.id, parsed.action, MessageKind::action});
      for (auto& [k, v] : parsed.updates) state.agent_states[actor.id][k] = v;
      decision.text = std::move(parsed.action);
      summary.decisions.push_back(std::move(decision));
    }

    double tension = 0.0;
    summary.samples = compute_responses(working, gateway, summary.warnings, tension);
    for (const auto& [name, sample] : summary.samples) state.response_series[name].push_back(sample);
    state.tension_series.push_back(tension);
    summary.tension = tension;
    summary.messages = messages_of_day(state.channel, day);
    summary.agent_states = state.agent_states;

    state.day_index = day + 1;
    state.calendar_date = working.config.start_date.plus_days(state.day_index);
    working.days.push_back(summary);

    std::lock_guard lock(mu_);
    log_ = std::move(working);
    current_day_ = log_.state.day_index;
    return summary;
  } catch (...) {
    std::lock_guard lock(mu_);
    current_day_ = log_.state.day_index;
    throw;
  }
}

std::map<std::string, ResponseSample> Simulation::compute_responses(const RunLog& working, llm::Gateway& gateway,
                                                                    std::vector<std::string>& warnings,
                                                                    double& tension) const {
  const auto& state = working.state;
  const int day = state.day_index;
  const std::string channel = render_messages(messages_of_day(state.channel, day), working.config.start_date);
  std::string states;
  for (const auto& [id, attrs] : state.agent_states) {
    if (attrs.empty()) continue;
    states += id + ":\n" + render_attributes(attrs);
  }
  if (states.empty()) states = "- none\n";

  std::map<std::string, ResponseSample> samples;
  for (const auto& factor : working.script.responses) {
    const auto& series = state.response_series.at(factor.name);
    ResponseSample previous = series.empty() ? default_sample(factor) : series.back();
    previous.carried_forward = false;

    const auto prompt = prompts_.render("judge_response.v1",
                                        {{"answer_format", answer_format(factor)},
                                         {"goal", working.script.goal.statement},
                                         {"factor", factor.name},
                                         {"description", factor.description},
                                         {"day_number", std::to_string(day + 1)},
                                         {"date", state.calendar_date.to_string()},
                                         {"previous", describe_sample(factor, previous)},
                                         {"states", states},
                                         {"channel", channel}});
    const auto request = gateway.request(llm::roles::kJudge, prompt.system, prompt.user,
                                         std::string(schema_for(factor.kind)));
    std::optional<ResponseSample> sample;
    for (int attempt = 0; attempt < 2 && !sample; ++attempt) sample = parse_sample(factor, gateway.complete(request));
    if (!sample) {
      sample = previous;
      sample->carried_forward = true;
      warnings.push_back("judge output for " + factor.name + " unparseable; previous sample carried forward");
    }
    samples[factor.name] = *sample;
  }

  const double previous_tension = state.tension_series.empty() ? 50.0 : state.tension_series.back();
  if (auto source = tension_source(working.script, working.config)) {
    tension = samples.at(*source).value;
  } else {
    const auto prompt = prompts_.render("judge_tension.v1", {{"goal", working.script.goal.statement},
                                                             {"day_number", std::to_string(day + 1)},
                                                             {"date", state.calendar_date.to_string()},
                                                             {"previous", format_number(previous_tension)},
                                                             {"channel", channel}});
    const auto request = gateway.request(llm::roles::kJudge, prompt.system, prompt.user,
                                         std::string("judge_scalar.v1"));
    std::optional<double> score;
    for (int attempt = 0; attempt < 2 && !score; ++attempt) score = llm::extract_score(gateway.complete(request));
    if (!score) warnings.push_back("tension judge output unparseable; previous value carried forward");
    tension = score.value_or(previous_tension);
  }
  return samples;
}

FinalOutcome Simulation::finalize_run(llm::Gateway& gateway) {
  if (log_.sealed) throw SimulationError("run is already sealed");
  if (!log_.finished())
    throw SimulationError("only " + std::to_string(log_.state.day_index) + " of " +
                          std::to_string(log_.config.days) + " days have run");

  std::string series;
  for (const auto& factor : log_.script.responses) {
    const auto& samples = log_.state.response_series.at(factor.name);
    series += "- " + factor.name + ": " + (samples.empty() ? "n/a" : describe_sample(factor, samples.back())) + "\n";
  }
  std::string tension;
  for (double t : log_.state.tension_series) tension += (tension.empty() ? "" : ", ") + format_number(t);
  series += "- tension by day: " + tension + "\n";

  const auto prompt = prompts_.render("judge_outcome.v1",
                                      {{"goal", log_.script.goal.statement},
                                       {"series", series},
                                       {"channel", render_messages(log_.state.channel, log_.config.start_date)}});
  const auto request = gateway.request(llm::roles::kJudge, prompt.system, prompt.user, std::string("outcome.v1"));
  FinalOutcome outcome;
  std::string raw;
  bool ok = false;
  for (int attempt = 0; attempt < 2 && !ok; ++attempt) {
    raw = gateway.complete(request);
    try {
      const auto doc = llm::extract_structured(raw, "outcome.v1");
      outcome.label = doc.at("label").get<std::string>();
      outcome.category = doc.at("category").get<std::string>();
      ok = true;
    } catch (const llm::ExtractionError&) {
    }
  }
  if (!ok) outcome = {std::string(kUndetermined), std::string(kUndetermined), raw};

  std::lock_guard lock(mu_);
  log_.outcome = outcome;
  log_.sealed = true;
  sealed_ = true;
  return outcome;
}

}  // namespace dstage::sim
