#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dstage/common/json.hpp"

namespace dstage::llm {

namespace roles {
inline constexpr std::string_view kScreenwriter = "screenwriter";
inline constexpr std::string_view kDirectorGoal = "director_goal";
inline constexpr std::string_view kDirectorFactors = "director_factors";
inline constexpr std::string_view kDirectorDesign = "director_design";
inline constexpr std::string_view kDirectorFormat = "director_format";
inline constexpr std::string_view kChiefDirector = "chief_director";
inline constexpr std::string_view kActorFactory = "actor_factory";
inline constexpr std::string_view kSupervisor = "supervisor";
inline constexpr std::string_view kJudge = "judge";
inline constexpr std::string_view kEmbedder = "embedder";

/// "actor:<agent id>"
std::string actor(std::string_view agent_id);
bool is_actor(std::string_view role_id);
}  // namespace roles

enum class Speaker { system, user, assistant };

std::string_view to_string(Speaker speaker);

struct Message {
  Speaker speaker = Speaker::user;
  std::string text;

  friend bool operator==(const Message&, const Message&) = default;
};

struct CompletionRequest {
  std::string role_id;
  std::vector<Message> messages;
  std::optional<std::string> response_schema;
  double temperature = 0.0;
  std::string model_hint;

  friend bool operator==(const CompletionRequest&, const CompletionRequest&) = default;
};

/// Messages must be non-empty and open with a system message.
void check_request(const CompletionRequest& req);

Json to_json(const CompletionRequest& req);
CompletionRequest request_from_json(const Json& doc);

/// SHA-256 over the canonical form of role, messages, schema and temperature.
/// The model hint is left out so fixtures survive model re-configuration.
std::string request_digest(const CompletionRequest& req);

}  // namespace dstage::llm
