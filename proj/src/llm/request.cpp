#include "dstage/llm/request.hpp"

#include "dstage/common/errors.hpp"

namespace dstage::llm {

namespace roles {
std::string actor(std::string_view agent_id) { return "actor:" + std::string(agent_id); }
bool is_actor(std::string_view role_id) { return role_id.rfind("actor:", 0) == 0; }
}  // namespace roles

std::string_view to_string(Speaker speaker) {
  switch (speaker) {
    case Speaker::system: return "system";
    case Speaker::user: return "user";
    case Speaker::assistant: return "assistant";
  }
  return "user";
}

namespace {
Speaker speaker_from(const std::string& s) {
  if (s == "system") return Speaker::system;
  if (s == "user") return Speaker::user;
  if (s == "assistant") return Speaker::assistant;
  throw ParseError("messages.speaker", "unknown speaker '" + s + "'");
}

Json digestible(const CompletionRequest& req) {
  Json messages = Json::array();
  for (const auto& m : req.messages)
    messages.push_back({{"speaker", to_string(m.speaker)}, {"text", m.text}});
  return {{"role_id", req.role_id},
          {"messages", std::move(messages)},
          {"response_schema", req.response_schema ? Json(*req.response_schema) : Json(nullptr)},
          {"temperature", req.temperature}};
}
}  // namespace

void check_request(const CompletionRequest& req) {
  if (req.messages.empty()) throw Error("completion request has no messages");
  if (req.messages.front().speaker != Speaker::system)
    throw Error("completion request must open with a system message");
  if (req.temperature < 0) throw Error("temperature must be non-negative");
}

Json to_json(const CompletionRequest& req) {
  Json doc = digestible(req);
  doc["model_hint"] = req.model_hint;
  return doc;
}

CompletionRequest request_from_json(const Json& doc) {
  CompletionRequest req;
  req.role_id = doc.at("role_id").get<std::string>();
  for (const auto& m : doc.at("messages"))
    req.messages.push_back({speaker_from(m.at("speaker").get<std::string>()),
                            m.at("text").get<std::string>()});
  if (const auto& s = doc.at("response_schema"); s.is_string()) req.response_schema = s.get<std::string>();
  req.temperature = doc.at("temperature").get<double>();
  req.model_hint = doc.value("model_hint", std::string{});
  return req;
}

std::string request_digest(const CompletionRequest& req) { return digest_of(digestible(req)); }

}  // namespace dstage::llm
