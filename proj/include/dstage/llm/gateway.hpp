#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "dstage/common/errors.hpp"
#include "dstage/llm/fixture.hpp"
#include "dstage/llm/request.hpp"

namespace dstage::llm {

class GatewayError : public Error {
 public:
  using Error::Error;
};

/// Replay lookup found no recorded response for a request.
class ReplayMissError : public GatewayError {
 public:
  ReplayMissError(std::string digest, std::string role_id);
  const std::string& digest() const noexcept { return digest_; }
  const std::string& role_id() const noexcept { return role_id_; }

 private:
  std::string digest_;
  std::string role_id_;
};

class TransportError : public GatewayError {
 public:
  TransportError(const std::string& message, bool retryable = true)
      : GatewayError(message), retryable_(retryable) {}
  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

/// Something that answers completion requests: a remote HTTP endpoint, or an
/// in-process stand-in. Embedding requests (role "embedder") are answered
/// with a JSON array of numbers.
class CompletionProvider {
 public:
  virtual ~CompletionProvider() = default;
  virtual std::string complete(const CompletionRequest& req) = 0;
};

/// Adapts a callable into a provider.
class FunctionProvider final : public CompletionProvider {
 public:
  using Fn = std::function<std::string(const CompletionRequest&)>;
  explicit FunctionProvider(Fn fn) : fn_(std::move(fn)) {}
  std::string complete(const CompletionRequest& req) override { return fn_(req); }

 private:
  Fn fn_;
};

struct RoleSettings {
  std::string model;
  double temperature = 0.0;
};

struct GatewayConfig {
  /// Keyed by role id or role family ("director", "actor").
  std::map<std::string, RoleSettings> roles;
  int max_retries = 2;
  std::chrono::milliseconds base_backoff{500};
  std::function<void(std::chrono::milliseconds)> sleep;

  /// Screenwriter 0.8, directors and judge 0.0, actors 0.7.
  static GatewayConfig defaults();

  /// Exact role id first, then its family, then "default".
  RoleSettings settings_for(std::string_view role_id) const;
};

/// The only component that talks to a model. Shareable across threads.
class Gateway {
 public:
  static std::shared_ptr<Gateway> live(std::shared_ptr<CompletionProvider> provider,
                                       GatewayConfig config = GatewayConfig::defaults());
  /// Like live, and every exchange is appended to the recording; when `sink`
  /// is set each entry is also appended to that file as it arrives.
  static std::shared_ptr<Gateway> recording(std::shared_ptr<CompletionProvider> provider,
                                            GatewayConfig config = GatewayConfig::defaults(),
                                            std::optional<std::filesystem::path> sink = {});
  static std::shared_ptr<Gateway> replay(Fixture fixture,
                                         GatewayConfig config = GatewayConfig::defaults());

  Gateway(GatewayMode mode, std::shared_ptr<CompletionProvider> provider, Fixture fixture,
          GatewayConfig config, std::optional<std::filesystem::path> sink);

  /// Builds a request with the role's configured model and temperature.
  CompletionRequest request(std::string_view role_id, std::string system, std::string user,
                            std::optional<std::string> response_schema = {}) const;

  /// Live: provider call, retried up to max_retries times with exponential
  /// backoff. Replay: the n-th lookup of a digest returns the n-th entry
  /// recorded for it, and the last one once those run out.
  std::string complete(const CompletionRequest& req);

  std::vector<double> embed(std::string_view text);

  GatewayMode mode() const { return mode_; }
  const GatewayConfig& config() const { return config_; }

  Fixture recorded() const;
  void save_recording(const std::filesystem::path& path) const;

  /// Every request issued through this gateway, in order.
  std::vector<CompletionRequest> issued() const;

 private:
  std::string call_provider(const CompletionRequest& req);

  GatewayMode mode_;
  std::shared_ptr<CompletionProvider> provider_;
  Fixture fixture_;
  GatewayConfig config_;
  std::optional<std::filesystem::path> sink_;

  mutable std::mutex mu_;
  std::map<std::string, std::size_t> cursor_;
  Fixture recording_;
  std::vector<CompletionRequest> issued_;
};

}  // namespace dstage::llm
