#include "dstage/cast/cast.hpp"

#include <algorithm>

#include "dstage/llm/extract.hpp"
#include "dstage/pipeline/composition.hpp"
#include "dstage/script/serialization.hpp"

namespace dstage::cast {
namespace {

ActorAgent environment_actor() {
  ActorAgent env;
  env.id = std::string(kEnvironmentId);
  env.intrinsic = {"Environment", "ambient conditions",
                   "Holds the influence factors that no character owns, such as weather or "
                   "market-wide conditions."};
  env.goals = {"represent ambient conditions consistently with the active design point"};
  return env;
}

std::vector<std::string> string_list(const Json& doc, const char* key) {
  std::vector<std::string> out;
  if (auto it = doc.find(key); it != doc.end())
    for (const auto& v : *it) out.push_back(v.get<std::string>());
  return out;
}

ActorAgent proposal_actor(const Json& doc) {
  ActorAgent a;
  a.id = doc.at("id").get<std::string>();
  a.intrinsic.name = doc.at("name").get<std::string>();
  a.intrinsic.identity = doc.at("identity").get<std::string>();
  a.intrinsic.description = doc.value("description", std::string{});
  for (auto& f : string_list(doc, "influence_factors")) a.influence_factors.insert(std::move(f));
  a.knowledge = string_list(doc, "knowledge");
  a.goals = string_list(doc, "goals");
  return a;
}

std::string edge_name(const AgentPair& p) { return p.first + "--" + p.second; }

}  // namespace

AgentPair make_pair_key(const std::string& a, const std::string& b) {
  return a < b ? AgentPair{a, b} : AgentPair{b, a};
}

const ActorAgent* Cast::find(std::string_view id) const {
  for (const auto& a : actors)
    if (a.id == id) return &a;
  return nullptr;
}

std::vector<const ActorAgent*> Cast::performers() const {
  std::vector<const ActorAgent*> out;
  for (const auto& a : actors)
    if (!a.is_environment()) out.push_back(&a);
  return out;
}

Json to_json(const ActorAgent& a) {
  return {{"id", a.id},
          {"intrinsic",
           {{"name", a.intrinsic.name},
            {"identity", a.intrinsic.identity},
            {"description", a.intrinsic.description}}},
          {"influence_factors", a.influence_factors},
          {"knowledge", a.knowledge},
          {"goals", a.goals}};
}

ActorAgent actor_from_json(const Json& doc) {
  ActorAgent a;
  a.id = doc.at("id").get<std::string>();
  const auto& p = doc.at("intrinsic");
  a.intrinsic = {p.at("name").get<std::string>(), p.at("identity").get<std::string>(),
                 p.value("description", std::string{})};
  for (auto& f : string_list(doc, "influence_factors")) a.influence_factors.insert(std::move(f));
  a.knowledge = string_list(doc, "knowledge");
  a.goals = string_list(doc, "goals");
  return a;
}

Json to_json(const Cast& cast) {
  auto actors = cast.actors;
  std::sort(actors.begin(), actors.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
  Json list = Json::array();
  for (const auto& a : actors) list.push_back(to_json(a));
  Json edges = Json::array();
  for (const auto& [pair, label] : cast.network.edges)
    edges.push_back({{"a", pair.first}, {"b", pair.second}, {"label", label}});
  return {{"actors", std::move(list)}, {"edges", std::move(edges)}, {"script_id", cast.script_id}};
}

Cast cast_from_json(const Json& doc) {
  try {
    Cast cast;
    cast.script_id = doc.at("script_id").get<std::string>();
    for (const auto& a : doc.at("actors")) cast.actors.push_back(actor_from_json(a));
    for (const auto& a : cast.actors) cast.network.agents.push_back(a.id);
    for (const auto& e : doc.at("edges"))
      cast.network.edges[make_pair_key(e.at("a").get<std::string>(), e.at("b").get<std::string>())] =
          e.value("label", std::string{});
    return cast;
  } catch (const Json::exception& e) {
    throw ParseError("cast", e.what());
  }
}

ValidationReport validate_cast(const Cast& cast, const Script& script) {
  ValidationReport report;
  std::set<std::string> ids;
  std::set<std::string> covered;
  const auto names = script.factor_names();
  const std::set<std::string> script_factors(names.begin(), names.end());
  for (std::size_t i = 0; i < cast.actors.size(); ++i) {
    const auto& a = cast.actors[i];
    const auto at = "actors[" + std::to_string(i) + "]";
    if (a.id.empty() || !ids.insert(a.id).second) report.add(at + ".id", "missing or duplicate id");
    if (a.intrinsic.name.empty()) report.add(at + ".intrinsic.name", "name is empty");
    if (a.intrinsic.identity.empty()) report.add(at + ".intrinsic.identity", "identity is empty");
    if (a.goals.empty()) report.add(at + ".goals", "at least one goal is required");
    for (const auto& f : a.influence_factors) {
      if (!script_factors.contains(f)) report.add(at + ".influence_factors", "unknown factor '" + f + "'");
      covered.insert(f);
    }
    if (i > 0 && cast.actors[i - 1].id >= a.id) report.add(at + ".id", "actors are not sorted by id");
  }
  for (const auto& f : script_factors)
    if (!covered.contains(f)) report.add("actors", "influence factor '" + f + "' is not covered");

  std::vector<std::string> agent_ids;
  for (const auto& a : cast.actors) agent_ids.push_back(a.id);
  if (cast.network.agents != agent_ids) report.add("network.agents", "agents differ from actor ids");
  const std::size_t n = cast.actors.size();
  if (cast.network.edges.size() != n * (n - (n ? 1 : 0)) / 2)
    report.add("network.edges", "expected " + std::to_string(n * (n ? n - 1 : 0) / 2) +
                                    " edges, found " + std::to_string(cast.network.edges.size()));
  for (const auto& [pair, label] : cast.network.edges) {
    if (pair.first == pair.second) report.add("network.edges", "self-edge on '" + pair.first + "'");
    if (!ids.contains(pair.first) || !ids.contains(pair.second))
      report.add("network.edges", "edge " + edge_name(pair) + " names an unknown actor");
  }
  if (cast.performers().empty()) report.add("actors", "cast has no performers");
  if (cast.find(kEnvironmentId) == nullptr) report.add("actors", "environment actor is missing");
  return report;
}

Cast repair_cast(Cast cast, const Script& script, const CastLimits& limits,
                 std::vector<std::string>& warnings) {
  const auto names = script.factor_names();
  const std::set<std::string> script_factors(names.begin(), names.end());

  std::vector<ActorAgent> kept;
  std::set<std::string> ids;
  for (auto& a : cast.actors) {
    if (a.id.empty()) {
      warnings.push_back("dropped an actor without id");
      continue;
    }
    if (!ids.insert(a.id).second) {
      warnings.push_back("dropped duplicate actor id '" + a.id + "'");
      continue;
    }
    if (a.intrinsic.name.empty()) {
      a.intrinsic.name = a.id;
      warnings.push_back("actor '" + a.id + "' had no name");
    }
    if (a.intrinsic.identity.empty()) {
      a.intrinsic.identity = "participant";
      warnings.push_back("actor '" + a.id + "' had no identity");
    }
    if (a.goals.empty()) {
      a.goals.push_back("pursue the experimental goal of the script");
      warnings.push_back("actor '" + a.id + "' had no goals");
    }
    for (auto it = a.influence_factors.begin(); it != a.influence_factors.end();) {
      if (script_factors.contains(*it)) {
        ++it;
        continue;
      }
      warnings.push_back("removed unknown factor '" + *it + "' from actor '" + a.id + "'");
      it = a.influence_factors.erase(it);
    }
    kept.push_back(std::move(a));
  }

  const std::size_t max_performers = limits.max_actors > 0 ? limits.max_actors - 1 : 0;
  std::size_t performers = 0;
  std::vector<ActorAgent> clamped;
  for (auto& a : kept) {
    if (!a.is_environment() && ++performers > max_performers) {
      warnings.push_back("dropped actor '" + a.id + "' to respect the cast size limit of " +
                         std::to_string(limits.max_actors));
      continue;
    }
    clamped.push_back(std::move(a));
  }
  kept = std::move(clamped);

  auto env = std::find_if(kept.begin(), kept.end(), [](const auto& a) { return a.is_environment(); });
  if (env == kept.end()) {
    kept.push_back(environment_actor());
    env = std::prev(kept.end());
  }
  std::set<std::string> covered;
  for (const auto& a : kept) covered.insert(a.influence_factors.begin(), a.influence_factors.end());
  for (const auto& f : names) {
    if (covered.contains(f)) continue;
    env->influence_factors.insert(f);
    warnings.push_back("influence factor '" + f + "' was uncovered and is now held by the environment");
  }

  std::sort(kept.begin(), kept.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
  const auto performer_count = static_cast<std::size_t>(
      std::count_if(kept.begin(), kept.end(), [](const auto& a) { return !a.is_environment(); }));
  if (performer_count == 0) throw CastError("cast has no performers");
  if (kept.size() < limits.min_actors)
    throw CastError("cast has " + std::to_string(kept.size()) + " actors, fewer than the minimum of " +
                    std::to_string(limits.min_actors));

  RelationshipNetwork network;
  for (const auto& a : kept) network.agents.push_back(a.id);
  std::set<std::string> final_ids(network.agents.begin(), network.agents.end());
  for (const auto& [pair, label] : cast.network.edges) {
    if (pair.first == pair.second) {
      warnings.push_back("dropped self-edge on '" + pair.first + "'");
    } else if (!final_ids.contains(pair.first) || !final_ids.contains(pair.second)) {
      if (ids.contains(pair.first) && ids.contains(pair.second)) continue;  // actor was clamped
      warnings.push_back("dropped edge " + edge_name(pair) + " naming an unknown actor");
    }
  }
  for (std::size_t i = 0; i < kept.size(); ++i) {
    for (std::size_t j = i + 1; j < kept.size(); ++j) {
      const auto key = make_pair_key(kept[i].id, kept[j].id);
      auto it = cast.network.edges.find(key);
      network.edges[key] = it == cast.network.edges.end() ? std::string{} : it->second;
    }
  }
  cast.actors = std::move(kept);
  cast.network = std::move(network);
  return cast;
}

Json to_json(const CastAudit& audit) {
  Json relabeled = Json::array();
  for (const auto& p : audit.relabeled) relabeled.push_back({p.first, p.second});
  return {{"added", audit.added},
          {"removed", audit.removed},
          {"changed", audit.changed},
          {"relabeled", std::move(relabeled)},
          {"warnings", audit.warnings}};
}

CastAudit diff_casts(const Cast& before, const Cast& after) {
  CastAudit audit;
  for (const auto& a : after.actors) {
    const auto* old = before.find(a.id);
    if (old == nullptr) audit.added.push_back(a.id);
    else if (!(*old == a)) audit.changed.push_back(a.id);
  }
  for (const auto& a : before.actors)
    if (after.find(a.id) == nullptr) audit.removed.push_back(a.id);
  for (const auto& [pair, label] : after.network.edges) {
    auto it = before.network.edges.find(pair);
    if (it != before.network.edges.end() && it->second != label) audit.relabeled.push_back(pair);
  }
  return audit;
}

Json ActorFactory::ask(std::string_view role, const llm::RenderedPrompt& prompt, std::string_view schema) {
  const auto request = gateway_.request(role, prompt.system, prompt.user, std::string(schema));
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      return llm::extract_structured(gateway_.complete(request), schema);
    } catch (const llm::ExtractionError& e) {
      last_error = e.what();
    }
  }
  throw CastError(std::string(role) + " output unusable after retry: " + last_error);
}

Cast ActorFactory::generate_cast(const Script& script, const UserRequirement& req,
                                 std::vector<std::string>* warnings) {
  if (auto report = validate_script(script); !report.valid()) throw ValidationError(report);
  std::string factor_names;
  for (const auto& f : script.factors) factor_names += "- " + f.name + ": " + f.description + "\n";
  const auto prompt = prompts_.render("actor_factory.v1",
                                      {{"requirement", pipeline::describe_requirement(req)},
                                       {"factor_names", factor_names},
                                       {"script", pretty_dump(serialize_script(script))}});
  const auto doc = ask(llm::roles::kActorFactory, prompt, "cast_proposal.v1");

  Cast cast;
  cast.script_id = script_id(script);
  for (const auto& a : doc.at("actors")) cast.actors.push_back(proposal_actor(a));
  if (auto it = doc.find("relationships"); it != doc.end())
    for (const auto& r : *it)
      cast.network.edges[make_pair_key(r.at("a").get<std::string>(), r.at("b").get<std::string>())] =
          r.value("label", std::string{});

  std::vector<std::string> local;
  auto repaired = repair_cast(std::move(cast), script, limits_, local);
  if (warnings) warnings->insert(warnings->end(), local.begin(), local.end());
  return repaired;
}

SupervisedCast ActorFactory::apply_review(const Cast& before, const Script& script,
                                          const Json& review) const {
  std::vector<std::string> warnings;
  Cast cast = before;

  const auto removals = string_list(review, "remove");
  std::set<std::string> to_remove;
  for (const auto& id : removals) {
    if (id == kEnvironmentId) warnings.push_back("the environment actor cannot be removed");
    else if (cast.find(id) == nullptr) warnings.push_back("cannot remove unknown actor '" + id + "'");
    else to_remove.insert(id);
  }
  const auto remaining =
      std::count_if(cast.actors.begin(), cast.actors.end(),
                    [&](const auto& a) { return !a.is_environment() && !to_remove.contains(a.id); });
  if (remaining == 0 && !to_remove.empty()) {
    warnings.push_back("ignored removals that would leave no performers");
    to_remove.clear();
  }
  std::erase_if(cast.actors, [&](const auto& a) { return to_remove.contains(a.id); });

  if (auto it = review.find("add"); it != review.end()) {
    for (const auto& doc : *it) {
      auto actor = proposal_actor(doc);
      if (cast.find(actor.id) != nullptr) {
        warnings.push_back("cannot add actor '" + actor.id + "': id already in the cast");
        continue;
      }
      cast.actors.push_back(std::move(actor));
    }
  }

  if (auto it = review.find("update"); it != review.end()) {
    for (const auto& doc : *it) {
      const auto id = doc.at("id").get<std::string>();
      auto target = std::find_if(cast.actors.begin(), cast.actors.end(),
                                 [&](const auto& a) { return a.id == id; });
      if (target == cast.actors.end()) {
        warnings.push_back("cannot update unknown actor '" + id + "'");
        continue;
      }
      if (doc.contains("name")) target->intrinsic.name = doc.at("name").get<std::string>();
      if (doc.contains("identity")) target->intrinsic.identity = doc.at("identity").get<std::string>();
      if (doc.contains("description"))
        target->intrinsic.description = doc.at("description").get<std::string>();
      if (doc.contains("influence_factors")) {
        target->influence_factors.clear();
        for (auto& f : string_list(doc, "influence_factors")) target->influence_factors.insert(std::move(f));
      }
      if (doc.contains("knowledge")) target->knowledge = string_list(doc, "knowledge");
      if (doc.contains("goals")) target->goals = string_list(doc, "goals");
    }
  }

  if (auto it = review.find("relabel"); it != review.end()) {
    for (const auto& doc : *it) {
      const auto a = doc.at("a").get<std::string>();
      const auto b = doc.at("b").get<std::string>();
      if (a == b || cast.find(a) == nullptr || cast.find(b) == nullptr) {
        warnings.push_back("cannot relabel edge " + a + "--" + b);
        continue;
      }
      cast.network.edges[make_pair_key(a, b)] = doc.value("label", std::string{});
    }
  }
  for (auto it = cast.network.edges.begin(); it != cast.network.edges.end();) {
    if (to_remove.contains(it->first.first) || to_remove.contains(it->first.second))
      it = cast.network.edges.erase(it);
    else
      ++it;
  }

  auto repaired = repair_cast(std::move(cast), script, limits_, warnings);
  SupervisedCast out{std::move(repaired), {}};
  out.audit = diff_casts(before, out.cast);
  out.audit.warnings = std::move(warnings);
  return out;
}

SupervisedCast ActorFactory::supervisor_review(const Cast& cast, const Script& script,
                                               const UserRequirement& req) {
  if (auto report = validate_cast(cast, script); !report.valid()) throw ValidationError(report);
  const auto prompt = prompts_.render("supervisor.v1",
                                      {{"requirement", pipeline::describe_requirement(req)},
                                       {"script", pretty_dump(serialize_script(script))},
                                       {"cast", pretty_dump(to_json(cast))}});
  const auto review = ask(llm::roles::kSupervisor, prompt, "supervisor_review.v1");
  return apply_review(cast, script, review);
}

}  // namespace dstage::cast
