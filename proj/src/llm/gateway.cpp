#include "dstage/llm/gateway.hpp"

#include <thread>

#include "dstage/llm/extract.hpp"

namespace dstage::llm {

ReplayMissError::ReplayMissError(std::string digest, std::string role_id)
    : GatewayError("replay miss for role '" + role_id + "' (request digest " + digest + ")"),
      digest_(std::move(digest)),
      role_id_(std::move(role_id)) {}

GatewayConfig GatewayConfig::defaults() {
  GatewayConfig c;
  c.roles = {
      {"default", {"gpt-5-mini", 0.0}},
      {"screenwriter", {"gpt-4o", 0.8}},
      {"director", {"gpt-5-mini", 0.0}},
      {"chief_director", {"gpt-5-mini", 0.0}},
      {"actor_factory", {"gpt-4o", 0.7}},
      {"supervisor", {"gpt-5-mini", 0.0}},
      {"actor", {"gpt-4o", 0.7}},
      {"judge", {"gpt-5-mini", 0.0}},
      {"embedder", {"sentence-embedding", 0.0}},
  };
  return c;
}

RoleSettings GatewayConfig::settings_for(std::string_view role_id) const {
  if (auto it = roles.find(std::string(role_id)); it != roles.end()) return it->second;
  std::string family(role_id);
  if (roles::is_actor(role_id)) family = "actor";
  else if (role_id.rfind("director_", 0) == 0) family = "director";
  if (auto it = roles.find(family); it != roles.end()) return it->second;
  if (auto it = roles.find("default"); it != roles.end()) return it->second;
  return {};
}

std::shared_ptr<Gateway> Gateway::live(std::shared_ptr<CompletionProvider> provider,
                                       GatewayConfig config) {
  return std::make_shared<Gateway>(GatewayMode::live, std::move(provider), Fixture{},
                                   std::move(config), std::nullopt);
}

std::shared_ptr<Gateway> Gateway::recording(std::shared_ptr<CompletionProvider> provider,
                                            GatewayConfig config,
                                            std::optional<std::filesystem::path> sink) {
  return std::make_shared<Gateway>(GatewayMode::record, std::move(provider), Fixture{},
                                   std::move(config), std::move(sink));
}

std::shared_ptr<Gateway> Gateway::replay(Fixture fixture, GatewayConfig config) {
  return std::make_shared<Gateway>(GatewayMode::replay, nullptr, std::move(fixture),
                                   std::move(config), std::nullopt);
}

Gateway::Gateway(GatewayMode mode, std::shared_ptr<CompletionProvider> provider, Fixture fixture,
                 GatewayConfig config, std::optional<std::filesystem::path> sink)
    : mode_(mode),
      provider_(std::move(provider)),
      fixture_(std::move(fixture)),
      config_(std::move(config)),
      sink_(std::move(sink)) {
  if (mode_ != GatewayMode::replay && !provider_)
    throw GatewayError(std::string(to_string(mode_)) + " gateway needs a provider");
  if (sink_ && std::filesystem::exists(*sink_)) std::filesystem::remove(*sink_);
}

CompletionRequest Gateway::request(std::string_view role_id, std::string system, std::string user,
                                   std::optional<std::string> response_schema) const {
  const auto settings = config_.settings_for(role_id);
  CompletionRequest req;
  req.role_id = std::string(role_id);
  req.messages = {{Speaker::system, std::move(system)}, {Speaker::user, std::move(user)}};
  req.response_schema = std::move(response_schema);
  req.temperature = settings.temperature;
  req.model_hint = settings.model;
  return req;
}

std::string Gateway::call_provider(const CompletionRequest& req) {
  for (int attempt = 0;; ++attempt) {
    try {
      return provider_->complete(req);
    } catch (const TransportError& e) {
      if (!e.retryable() || attempt >= config_.max_retries)
        throw TransportError("provider failed for role '" + req.role_id + "' after " +
                                 std::to_string(attempt + 1) + " attempt(s): " + e.what(),
                             false);
      const auto delay = config_.base_backoff * (1LL << attempt);
      if (config_.sleep) config_.sleep(delay);
      else std::this_thread::sleep_for(delay);
    }
  }
}

std::string Gateway::complete(const CompletionRequest& req) {
  check_request(req);
  const auto digest = request_digest(req);
  {
    std::lock_guard lock(mu_);
    issued_.push_back(req);
  }

  if (mode_ == GatewayMode::replay) {
    const auto* hits = fixture_.positions(digest);
    if (hits == nullptr) throw ReplayMissError(digest, req.role_id);
    std::lock_guard lock(mu_);
    auto& next = cursor_[digest];
    const auto pos = (*hits)[std::min(next, hits->size() - 1)];
    ++next;
    return fixture_.entries()[pos].response_text;
  }

  auto response = call_provider(req);
  if (mode_ == GatewayMode::record) {
    FixtureEntry entry{digest, response,
                       {{"role_id", req.role_id}, {"model", req.model_hint}, {"request", to_json(req)}}};
    std::lock_guard lock(mu_);
    if (sink_) append_text_file(*sink_, canonical_dump(to_json(entry)) + "\n");
    recording_.append(std::move(entry));
  }
  return response;
}

std::vector<double> Gateway::embed(std::string_view text) {
  auto req = request(roles::kEmbedder, "Return the embedding vector of the user text as a JSON array.",
                     std::string(text), "embedding.v1");
  const auto raw = complete(req);
  Json doc;
  try {
    doc = extract_structured(raw, "embedding.v1");
  } catch (const ExtractionError& e) {
    throw GatewayError(std::string("embedding response unusable: ") + e.what());
  }
  return doc.get<std::vector<double>>();
}

Fixture Gateway::recorded() const {
  std::lock_guard lock(mu_);
  return recording_;
}

void Gateway::save_recording(const std::filesystem::path& path) const { recorded().save(path); }

std::vector<CompletionRequest> Gateway::issued() const {
  std::lock_guard lock(mu_);
  return issued_;
}

}  // namespace dstage::llm
