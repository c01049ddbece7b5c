#include "dstage/llm/http_provider.hpp"

#include <cstdlib>

#include <httplib.h>

namespace dstage::llm {
namespace {

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : std::string{};
}

}  // namespace

HttpChatProvider::HttpChatProvider(Options options) : options_(std::move(options)) {
  auto url = options_.base_url;
  while (!url.empty() && url.back() == '/') url.pop_back();
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw Error("base URL needs a scheme: '" + url + "'");
  const auto path_start = url.find('/', scheme_end + 3);
  scheme_host_ = url.substr(0, path_start);
  path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
}

HttpChatProvider HttpChatProvider::from_environment() {
  Options options;
  options.base_url = env_or_empty("DSTAGE_LLM_BASE_URL");
  options.api_key = env_or_empty("DSTAGE_LLM_API_KEY");
  if (options.base_url.empty()) throw Error("DSTAGE_LLM_BASE_URL is not set");
  return HttpChatProvider(std::move(options));
}

Json HttpChatProvider::chat_body(const CompletionRequest& req) {
  Json messages = Json::array();
  for (const auto& m : req.messages)
    messages.push_back({{"role", to_string(m.speaker)}, {"content", m.text}});
  Json body = {{"model", req.model_hint}, {"messages", std::move(messages)},
               {"temperature", req.temperature}};
  if (req.response_schema) body["response_format"] = {{"type", "json_object"}};
  return body;
}

Json HttpChatProvider::embedding_body(const CompletionRequest& req) {
  return {{"model", req.model_hint}, {"input", req.messages.back().text}};
}

std::string HttpChatProvider::parse_chat_response(const std::string& body) {
  auto doc = Json::parse(body, nullptr, false);
  if (doc.is_discarded()) throw TransportError("chat response is not JSON", false);
  try {
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const Json::exception&) {
    throw TransportError("chat response lacks choices[0].message.content", false);
  }
}

std::string HttpChatProvider::parse_embedding_response(const std::string& body) {
  auto doc = Json::parse(body, nullptr, false);
  if (doc.is_discarded()) throw TransportError("embedding response is not JSON", false);
  try {
    return canonical_dump(doc.at("data").at(0).at("embedding"));
  } catch (const Json::exception&) {
    throw TransportError("embedding response lacks data[0].embedding", false);
  }
}

std::string HttpChatProvider::post(const std::string& path, const Json& body) {
  httplib::Client client(scheme_host_);
  client.set_connection_timeout(options_.timeout);
  client.set_read_timeout(options_.timeout);
  httplib::Headers headers;
  if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);
  auto res = client.Post(path_prefix_ + path, headers, canonical_dump(body), "application/json");
  if (!res) throw TransportError("HTTP request failed: " + httplib::to_string(res.error()));
  if (res->status == 429 || res->status >= 500)
    throw TransportError("HTTP " + std::to_string(res->status));
  if (res->status >= 400)
    throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body, false);
  return res->body;
}

std::string HttpChatProvider::complete(const CompletionRequest& req) {
  if (req.role_id == roles::kEmbedder)
    return parse_embedding_response(post("/embeddings", embedding_body(req)));
  return parse_chat_response(post("/chat/completions", chat_body(req)));
}

}  // namespace dstage::llm
