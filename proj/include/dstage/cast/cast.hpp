#pragma once

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "dstage/common/errors.hpp"
#include "dstage/common/json.hpp"
#include "dstage/common/validation.hpp"
#include "dstage/llm/gateway.hpp"
#include "dstage/llm/prompts.hpp"
#include "dstage/script/script.hpp"

namespace dstage::cast {

/// Id of the actor that holds ambient influence factors no character owns.
inline constexpr std::string_view kEnvironmentId = "environment";

struct IntrinsicAttributes {
  std::string name;
  std::string identity;
  std::string description;

  friend bool operator==(const IntrinsicAttributes&, const IntrinsicAttributes&) = default;
};

/// Performer: intrinsic attributes, assigned influence factors, knowledge and
/// role goals.
struct ActorAgent {
  std::string id;
  IntrinsicAttributes intrinsic;
  std::set<std::string> influence_factors;
  std::vector<std::string> knowledge;
  std::vector<std::string> goals;

  bool is_environment() const { return id == kEnvironmentId; }

  friend bool operator==(const ActorAgent&, const ActorAgent&) = default;
};

using AgentPair = std::pair<std::string, std::string>;

/// Ordered pair with first < second.
AgentPair make_pair_key(const std::string& a, const std::string& b);

/// Complete graph over the cast. An empty label means no substantive
/// relationship, but the edge is still present.
struct RelationshipNetwork {
  std::vector<std::string> agents;
  std::map<AgentPair, std::string> edges;

  friend bool operator==(const RelationshipNetwork&, const RelationshipNetwork&) = default;
};

struct Cast {
  std::vector<ActorAgent> actors;  // sorted by id
  RelationshipNetwork network;
  std::string script_id;

  const ActorAgent* find(std::string_view id) const;
  /// Actors other than the environment, in cast order.
  std::vector<const ActorAgent*> performers() const;

  friend bool operator==(const Cast&, const Cast&) = default;
};

Json to_json(const ActorAgent& actor);
ActorAgent actor_from_json(const Json& doc);
/// {actors, edges: [{a, b, label}], script_id}; actors by id, edges by (a, b).
Json to_json(const Cast& cast);
Cast cast_from_json(const Json& doc);

/// Every Cast invariant against `script`: complete graph, no self-edges,
/// exact factor cover, non-empty names, identities and goals.
ValidationReport validate_cast(const Cast& cast, const Script& script);

struct CastLimits {
  std::size_t min_actors = 2;
  std::size_t max_actors = 50;
};

/// Brings a cast back to its invariants: drops unknown factors and duplicate
/// ids, truncates to the size limit, makes sure the environment actor exists
/// and carries every uncovered factor, sorts actors and re-completes the
/// graph. Each repair appends a line to `warnings`. Leaves a valid cast
/// unchanged.
Cast repair_cast(Cast cast, const Script& script, const CastLimits& limits,
                 std::vector<std::string>& warnings);

struct CastAudit {
  std::vector<std::string> added;
  std::vector<std::string> removed;
  std::vector<std::string> changed;
  std::vector<AgentPair> relabeled;
  std::vector<std::string> warnings;

  bool empty() const {
    return added.empty() && removed.empty() && changed.empty() && relabeled.empty() &&
           warnings.empty();
  }
};

Json to_json(const CastAudit& audit);

/// Differences between two casts, by actor id and edge.
CastAudit diff_casts(const Cast& before, const Cast& after);

struct SupervisedCast {
  Cast cast;
  CastAudit audit;
};

class CastError : public Error {
 public:
  using Error::Error;
};

class ActorFactory {
 public:
  ActorFactory(llm::Gateway& gateway, const llm::PromptLibrary& prompts, CastLimits limits = {})
      : gateway_(gateway), prompts_(prompts), limits_(limits) {}

  /// Asks the provider for actors and relationships, then repairs the result
  /// so every invariant holds. Unusable output is retried once.
  Cast generate_cast(const Script& script, const UserRequirement& req,
                    std::vector<std::string>* warnings = nullptr);

  /// Lets the supervisor add, remove, update actors and relabel edges. The
  /// outcome is re-validated and locally repaired.
  SupervisedCast supervisor_review(const Cast& cast, const Script& script,
                                   const UserRequirement& req);

  /// Applies a supervisor document to `cast` without calling the provider.
  SupervisedCast apply_review(const Cast& cast, const Script& script, const Json& review) const;

  const CastLimits& limits() const { return limits_; }

 private:
  Json ask(std::string_view role, const llm::RenderedPrompt& prompt, std::string_view schema);

  llm::Gateway& gateway_;
  const llm::PromptLibrary& prompts_;
  CastLimits limits_;
};

}  // namespace dstage::cast
