#pragma once

#include <chrono>
#include <string>

#include "dstage/llm/gateway.hpp"

namespace dstage::llm {

/// Chat-completions style HTTP endpoint: POST {base}/chat/completions and
/// POST {base}/embeddings.
class HttpChatProvider final : public CompletionProvider {
 public:
  struct Options {
    std::string base_url;
    std::string api_key;
    std::chrono::seconds timeout{120};
  };

  explicit HttpChatProvider(Options options);

  /// Reads DSTAGE_LLM_BASE_URL and DSTAGE_LLM_API_KEY. Throws Error when the
  /// base URL is unset.
  static HttpChatProvider from_environment();

  std::string complete(const CompletionRequest& req) override;

  /// Request bodies in the chat-completions wire shape.
  static Json chat_body(const CompletionRequest& req);
  static Json embedding_body(const CompletionRequest& req);
  static std::string parse_chat_response(const std::string& body);
  static std::string parse_embedding_response(const std::string& body);

 private:
  std::string post(const std::string& path, const Json& body);

  Options options_;
  std::string scheme_host_;
  std::string path_prefix_;
};

}  // namespace dstage::llm
