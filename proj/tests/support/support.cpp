#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dstage/pipeline/composition.hpp"
#include "dstage/script/serialization.hpp"

#ifndef DSTAGE_DATA_ROOT
#define DSTAGE_DATA_ROOT "data"
#endif

namespace dstage::testing {
namespace fs = std::filesystem;

fs::path data_root() { return DSTAGE_DATA_ROOT; }
fs::path cuban_dir() { return data_root() / "cuban_missile_crisis"; }
fs::path fixture_path(const std::string& name) { return data_root() / "fixtures" / name; }

UserRequirement cuban_requirement() { return parse_requirement(read_json_file(cuban_dir() / "requirement.json")); }
Script cuban_script() { return parse_script(read_json_file(cuban_dir() / "example_script.json")); }
service::RunSettings cuban_settings(const std::string& file) {
  return service::settings_from_json(read_json_file(cuban_dir() / file));
}

fs::path temp_dir(const std::string& tag) {
  static std::mt19937_64 rng{std::random_device{}()};
  auto dir = fs::temp_directory_path() / ("dstage-" + tag + "-" + std::to_string(rng() % 1000000007ULL));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Script small_script(int n_factors) {
  Script s;
  s.goal = {"Measure how the factors move the outcome.", {"outcome shifts between conditions"}};
  for (int i = 0; i < n_factors; ++i)
    s.factors.push_back({"f" + std::to_string(i), "factor " + std::to_string(i), {std::string("low"), std::string("high")}, {}});
  s.responses.push_back({"outcome", "outcome distribution", ResponseKind::probability_vector, {"peace", "limited_conflict", "conventional_war"}});
  s.responses.push_back({"tension_index", "tension", ResponseKind::scalar, {}});
  DesignPoint p{"dp-01", {}};
  p.assignments["f0"] = std::string("low");
  s.design_points.push_back(p);
  p.id = "dp-02";
  p.assignments["f0"] = std::string("high");
  s.design_points.push_back(p);
  s.perspective = "variable design";
  s.provenance.candidate_index = 1;
  return s;
}

Script random_script(std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  static const char* words[] = {"alpha", "beta", "gamma", "delta", "low", "high", "mid", "open", "closed", "strict"};
  Script s;
  s.goal.statement = "Goal " + std::to_string(pick(0, 99999));
  for (int i = pick(0, 3); i > 0; --i) s.goal.success_criteria.push_back("criterion " + std::to_string(pick(0, 999)));
  const int nf = pick(1, 8);
  for (int i = 0; i < nf; ++i) {
    InfluenceFactor f;
    f.name = "factor_" + std::to_string(i) + "_" + words[pick(0, 9)];
    f.description = "description " + std::to_string(pick(0, 999));
    const int nl = pick(2, 4);
    const bool numeric = pick(0, 1) == 1;
    for (int l = 0; l < nl; ++l) {
      if (numeric) f.levels.emplace_back(static_cast<double>(l * pick(1, 7) + l) + (pick(0, 1) ? 0.5 : 0.0));
      else f.levels.emplace_back(std::string(words[l]) + "_" + std::to_string(l));
    }
    // Numeric levels above are distinct because l*k + l grows with l.
    if (pick(0, 2) == 0) f.unit = "units";
    s.factors.push_back(std::move(f));
  }
  const int nr = pick(1, 3);
  for (int i = 0; i < nr; ++i) {
    ResponseFactor r;
    r.name = "response_" + std::to_string(i);
    r.description = "measured " + std::to_string(i);
    r.kind = static_cast<ResponseKind>(pick(0, 2));
    if (r.kind != ResponseKind::scalar)
      for (int c = pick(2, 4); c > 0; --c) r.categories.push_back("cat_" + std::to_string(c));
    s.responses.push_back(std::move(r));
  }
  const int nd = pick(1, 5);
  for (int i = 0; i < nd; ++i) {
    DesignPoint p;
    p.id = "dp-" + std::to_string(i + 1);
    for (const auto& f : s.factors)
      if (p.assignments.empty() || pick(0, 1)) p.assignments[f.name] = f.levels[static_cast<std::size_t>(pick(0, static_cast<int>(f.levels.size()) - 1))];
    s.design_points.push_back(std::move(p));
  }
  s.perspective = pipeline::default_perspectives()[static_cast<std::size_t>(pick(0, 3))];
  if (pick(0, 1)) s.provenance.candidate_index = pick(0, 3);
  if (pick(0, 1)) s.provenance.stage_attempts = {{"Goal", pick(1, 3)}, {"DesignPoints", pick(1, 3)}};
  s.provenance.generator = pick(0, 1) ? "pipeline" : "";
  return s;
}

Json mutate_invalid(const Json& doc, std::mt19937_64& rng, std::string& what) {
  Json d = doc;
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  switch (pick(0, 11)) {
    case 0: {
      static const char* keys[] = {"goal", "factors", "responses", "design_points"};
      const char* k = keys[pick(0, 3)];
      d.erase(k);
      what = std::string("missing ") + k;
      break;
    }
    case 1:
      d["factors"][0]["levels"] = Json::array({d["factors"][0]["levels"][0]});
      what = "single level";
      break;
    case 2:
      d["factors"].push_back(d["factors"][0]);
      what = "duplicate factor name";
      break;
    case 3:
      d["design_points"][0]["assignments"][d["factors"][0]["name"].get<std::string>()] = "not-a-level";
      what = "level not in factor";
      break;
    case 4:
      d["design_points"][0]["assignments"]["no_such_factor"] = "x";
      what = "unknown factor in design point";
      break;
    case 5:
      d["goal"]["statement"] = 42;
      what = "statement not a string";
      break;
    case 6:
      d["responses"][0]["kind"] = "histogram";
      what = "unknown response kind";
      break;
    case 7:
      d["responses"][0]["kind"] = "probability_vector";
      d["responses"][0]["categories"] = Json::array({"only"});
      what = "one category";
      break;
    case 8:
      d["factors"] = Json::array();
      what = "no factors";
      break;
    case 9:
      d["goal"]["statement"] = "";
      what = "empty statement";
      break;
    case 10:
      d["factors"][0]["levels"] = Json::array({d["factors"][0]["levels"][0], d["factors"][0]["levels"][0]});
      what = "repeated level";
      break;
    default:
      d["design_points"] = "none";
      what = "design points not an array";
      break;
  }
  return d;
}

// ---------------------------------------------------------------------------

RoleProvider& RoleProvider::on(std::string role, Fn fn) {
  routes_[std::move(role)] = std::move(fn);
  return *this;
}

RoleProvider& RoleProvider::queue(std::string role, std::vector<std::string> texts) {
  auto state = std::make_shared<std::pair<std::vector<std::string>, std::size_t>>(std::move(texts), 0);
  return on(std::move(role), [state](const llm::CompletionRequest&) {
    auto& [texts, next] = *state;
    const auto& text = texts[std::min(next, texts.size() - 1)];
    ++next;
    return text;
  });
}

std::string RoleProvider::complete(const llm::CompletionRequest& req) {
  Fn fn;
  {
    std::lock_guard lock(mu_);
    ++calls_[req.role_id];
    if (auto it = routes_.find(req.role_id); it != routes_.end()) fn = it->second;
    else if (auto a = routes_.find("actor"); llm::roles::is_actor(req.role_id) && a != routes_.end()) fn = a->second;
    else if (auto any = routes_.find("*"); any != routes_.end()) fn = any->second;
  }
  if (!fn) throw llm::TransportError("no route for role " + req.role_id, false);
  return fn(req);
}

int RoleProvider::calls(const std::string& role) const {
  auto it = calls_.find(role);
  return it == calls_.end() ? 0 : it->second;
}

std::string user_text(const llm::CompletionRequest& req) {
  std::string out;
  for (const auto& m : req.messages)
    if (m.speaker == llm::Speaker::user) out += m.text;
  return out;
}

std::string system_text(const llm::CompletionRequest& req) {
  std::string out;
  for (const auto& m : req.messages)
    if (m.speaker == llm::Speaker::system) out += m.text;
  return out;
}

std::string small_section(const std::string& user, int n_factors) {
  const auto s = small_script(n_factors);
  std::string stage;
  if (auto pos = user.find("Section to rewrite: "); pos != std::string::npos) {
    stage = user.substr(pos + 20, user.find('\n', pos) - pos - 20);
  } else if (user.find("Write part 1") != std::string::npos) {
    stage = "Goal";
  } else if (user.find("Write part 2") != std::string::npos) {
    stage = "InfluenceAndResponse_Factors";
  } else {
    stage = "DesignPoints";
  }
  if (stage == "Goal") return canonical_dump(to_json(s.goal));
  if (stage == "InfluenceAndResponse_Factors") {
    Json factors = Json::array(), responses = Json::array();
    for (const auto& f : s.factors) factors.push_back(to_json(f));
    for (const auto& r : s.responses) responses.push_back(to_json(r));
    return canonical_dump({{"factors", factors}, {"responses", responses}});
  }
  Json points = Json::array();
  for (const auto& p : s.design_points) points.push_back(to_json(p));
  if (stage == "FormatCheck") {
    Json doc = Json::parse(small_section("Write part 2", n_factors));
    doc["goal"] = to_json(s.goal);
    doc["design_points"] = points;
    return canonical_dump(doc);
  }
  return canonical_dump({{"design_points", points}});
}

std::shared_ptr<llm::CompletionProvider> random_pipeline_provider(std::uint64_t seed, double p_fail) {
  auto provider = std::make_shared<RoleProvider>();
  auto rng = std::make_shared<std::mt19937_64>(seed);
  auto mu = std::make_shared<std::mutex>();
  provider->on(std::string(llm::roles::kScreenwriter),
               [](const llm::CompletionRequest& req) { return small_section(user_text(req)); });
  provider->on("*", [rng, mu, p_fail](const llm::CompletionRequest& req) -> std::string {
    if (req.role_id.rfind("director_", 0) != 0) throw llm::TransportError("unexpected role " + req.role_id, false);
    std::lock_guard lock(*mu);
    const bool fail = std::uniform_real_distribution<double>(0.0, 1.0)(*rng) < p_fail;
    return fail ? R"({"passed": false, "feedback": "needs another pass"})" : R"({"passed": true, "feedback": ""})";
  });
  return provider;
}

std::string random_cast_proposal(const Script& script, int performers, std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  Json actors = Json::array();
  const auto names = script.factor_names();
  for (int i = 0; i < performers; ++i) {
    Json factors = Json::array();
    for (const auto& n : names)
      if (pick(0, performers) == 0) factors.push_back(n);
    if (pick(0, 4) == 0) factors.push_back("not_a_factor");
    actors.push_back({{"id", "actor_" + std::to_string(i)},
                      {"name", "Actor " + std::to_string(i)},
                      {"identity", "role " + std::to_string(i)},
                      {"description", "generated"},
                      {"influence_factors", factors},
                      {"knowledge", Json::array({"fact " + std::to_string(pick(0, 99))})},
                      {"goals", Json::array({"goal " + std::to_string(i)})}});
  }
  Json relationships = Json::array();
  for (int i = pick(0, performers * 2); i > 0; --i) {
    const int a = pick(0, performers - 1), b = pick(0, performers - 1);
    relationships.push_back({{"a", "actor_" + std::to_string(a)},
                             {"b", "actor_" + std::to_string(b)},
                             {"label", pick(0, 1) ? "rivals" : ""}});
  }
  return canonical_dump({{"actors", actors}, {"relationships", relationships}});
}

std::string random_supervisor_review(const cast::Cast& cast, const Script& script, std::mt19937_64& rng) {
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  Json review = {{"add", Json::array()}, {"remove", Json::array()}, {"update", Json::array()}, {"relabel", Json::array()}};
  const auto performers = cast.performers();
  const auto names = script.factor_names();
  for (int i = pick(0, 2); i > 0; --i) {
    Json factors = Json::array();
    if (!names.empty()) factors.push_back(names[static_cast<std::size_t>(pick(0, static_cast<int>(names.size()) - 1))]);
    review["add"].push_back({{"id", "added_" + std::to_string(pick(0, 999))},
                             {"name", "Added"},
                             {"identity", "new party"},
                             {"influence_factors", factors},
                             {"goals", Json::array({"take part"})}});
  }
  for (const auto* a : performers) {
    const int r = pick(0, 5);
    if (r == 0) review["remove"].push_back(a->id);
    else if (r == 1) review["update"].push_back({{"id", a->id}, {"knowledge", Json::array({"updated knowledge"})}});
  }
  if (pick(0, 1) == 0) review["remove"].push_back(std::string(cast::kEnvironmentId));
  if (performers.size() >= 2)
    review["relabel"].push_back({{"a", performers[0]->id}, {"b", performers[1]->id}, {"label", "relabeled"}});
  return canonical_dump(review);
}

std::string cast_law_violation(const cast::Cast& cast, const Script& script) {
  const auto n = cast.actors.size();
  if (cast.network.edges.size() != n * (n - 1) / 2)
    return "edge count " + std::to_string(cast.network.edges.size()) + " for " + std::to_string(n) + " actors";
  std::set<std::string> covered;
  for (const auto& a : cast.actors) covered.insert(a.influence_factors.begin(), a.influence_factors.end());
  const auto names = script.factor_names();
  if (covered != std::set<std::string>(names.begin(), names.end())) return "influence factors are not an exact cover";
  std::vector<std::string> ids;
  for (const auto& a : cast.actors) ids.push_back(a.id);
  if (ids != cast.network.agents) return "network agents differ from actor ids";
  for (const auto& [pair, label] : cast.network.edges)
    if (pair.first == pair.second) return "self edge";
  return {};
}

std::shared_ptr<RoleProvider> generic_run_provider(int performers) {
  auto p = std::make_shared<RoleProvider>();
  p->on(std::string(llm::roles::kScreenwriter), [](const llm::CompletionRequest& req) { return small_section(user_text(req)); });
  for (auto role : {llm::roles::kDirectorGoal, llm::roles::kDirectorFactors, llm::roles::kDirectorDesign,
                    llm::roles::kDirectorFormat})
    p->queue(std::string(role), {R"({"passed": true, "feedback": ""})"});
  p->on(std::string(llm::roles::kChiefDirector), [](const llm::CompletionRequest& req) {
    const bool second = user_text(req).find("(script-2") != std::string::npos;
    Json scores = Json::object();
    for (auto c : {"scientific_soundness", "implementation_difficulty", "conditions_controllability", "risk_robustness",
                   "requirement_alignment"})
      scores[c] = {{"score", second ? 80 : 70}, {"rationale", "ok"}};
    scores["ethics_compliance"] = {{"score", 100}, {"rationale", "ok"}};
    return canonical_dump({{"scores", scores}});
  });
  p->on(std::string(llm::roles::kActorFactory), [performers](const llm::CompletionRequest&) {
    Json actors = Json::array();
    for (int i = 0; i < performers; ++i)
      actors.push_back({{"id", "a" + std::to_string(i)},
                        {"name", "Agent " + std::to_string(i)},
                        {"identity", "party " + std::to_string(i)},
                        {"influence_factors", i == 0 ? Json::array({"f0", "f1"}) : Json::array()},
                        {"goals", Json::array({"prevail"})}});
    return canonical_dump({{"actors", actors}});
  });
  p->queue(std::string(llm::roles::kSupervisor), {R"({"notes": "no changes"})"});
  p->on("actor", [](const llm::CompletionRequest& req) {
    const auto user = user_text(req);
    const auto pos = user.find("Today is day ");
    const auto day = pos == std::string::npos ? std::string("?") : user.substr(pos + 13, user.find(' ', pos + 13) - pos - 13);
    return canonical_dump({{"statement", ""}, {"action", req.role_id.substr(6) + " acts on day " + day}});
  });
  p->on(std::string(llm::roles::kJudge), [](const llm::CompletionRequest& req) -> std::string {
    const auto system = system_text(req);
    const auto user = user_text(req);
    if (system.find("has finished") != std::string::npos) return R"({"label": "calm settlement", "category": "peace"})";
    if (user.find("Response variable: outcome") != std::string::npos) return R"({"weights": [2, 1, 1]})";
    return R"({"score": 40})";
  });
  p->on(std::string(llm::roles::kEmbedder), [](const llm::CompletionRequest& req) {
    std::vector<double> v(16, 0.0);
    const auto text = user_text(req);
    for (std::size_t i = 0; i < text.size(); ++i) v[static_cast<unsigned char>(text[i]) % 16] += 1.0;
    return Json(v).dump();
  });
  return p;
}

}  // namespace dstage::testing
