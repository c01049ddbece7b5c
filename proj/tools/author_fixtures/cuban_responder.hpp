#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dstage/common/json.hpp"
#include "dstage/llm/gateway.hpp"

namespace dstage::authoring {

/// Deterministic stand-in for every model role in the Cuban scenario. It
/// reads only what the prompt gives it: the stage, the perspective, the day,
/// the persona directive and the channel.
class CubanResponder final : public llm::CompletionProvider {
 public:
  explicit CubanResponder(const std::filesystem::path& dataset_dir);

  std::string complete(const llm::CompletionRequest& req) override;

 private:
  std::string screenwriter(const std::string& user) const;
  std::string director(const std::string& role, const std::string& user) const;
  std::string chief(const std::string& user) const;
  std::string actor(const std::string& id, const std::string& user) const;
  std::string judge(const std::string& system, const std::string& user);

  Json section_for(int candidate, const std::string& stage, bool rewrite) const;

  Json script_;
  std::vector<std::string> unparseable_once_;
};

/// Bag-of-words vector over hashed tokens; identical texts map to identical
/// vectors and texts without tokens map to the zero vector.
std::vector<double> hashed_embedding(std::string_view text, std::size_t dims = 128);

}  // namespace dstage::authoring
