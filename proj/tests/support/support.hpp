#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "dstage/cast/cast.hpp"
#include "dstage/common/json.hpp"
#include "dstage/llm/gateway.hpp"
#include "dstage/script/script.hpp"
#include "dstage/service/workflow.hpp"

namespace dstage::testing {

std::filesystem::path data_root();
std::filesystem::path cuban_dir();
std::filesystem::path fixture_path(const std::string& name);

UserRequirement cuban_requirement();
Script cuban_script();
service::RunSettings cuban_settings(const std::string& file);

/// Fresh empty directory under the system temp dir.
std::filesystem::path temp_dir(const std::string& tag);

/// Small valid script with `n_factors` factors named f0, f1, ...
Script small_script(int n_factors = 3);

/// Structurally valid random script.
Script random_script(std::mt19937_64& rng);

/// Script document broken in one random way. `what` names the mutation.
Json mutate_invalid(const Json& doc, std::mt19937_64& rng, std::string& what);

/// Routes requests by role: exact role id first, then "actor" for any actor
/// role, then "*".
class RoleProvider final : public llm::CompletionProvider {
 public:
  using Fn = std::function<std::string(const llm::CompletionRequest&)>;
  RoleProvider& on(std::string role, Fn fn);
  /// Answers `role` with the given texts in order, repeating the last one.
  RoleProvider& queue(std::string role, std::vector<std::string> texts);
  std::string complete(const llm::CompletionRequest& req) override;
  int calls(const std::string& role) const;

 private:
  std::map<std::string, Fn> routes_;
  std::map<std::string, int> calls_;
  std::mutex mu_;
};

std::string user_text(const llm::CompletionRequest& req);
std::string system_text(const llm::CompletionRequest& req);

/// Screenwriter answers for small_script-shaped sections, keyed on the stage
/// named in the prompt.
std::string small_section(const std::string& user_prompt, int n_factors = 3);

/// Provider for composition property runs: valid screenwriter sections and
/// directors that fail with probability `p_fail`, seeded.
std::shared_ptr<llm::CompletionProvider> random_pipeline_provider(std::uint64_t seed, double p_fail);

/// Actor-factory answer with `performers` actors over `script`'s factors,
/// leaving some uncovered, with random relationship labels.
std::string random_cast_proposal(const Script& script, int performers, std::mt19937_64& rng);
/// Supervisor answer that adds, removes and updates random actors.
std::string random_supervisor_review(const cast::Cast& cast, const Script& script, std::mt19937_64& rng);

/// Checks the edge-count law and the exact-cover law; empty when both hold.
std::string cast_law_violation(const cast::Cast& cast, const Script& script);

/// Provider answering every role of a run over small_script: sections,
/// passing directors, chief scores, a cast of `performers`, actor decisions,
/// judge values and embeddings.
std::shared_ptr<RoleProvider> generic_run_provider(int performers = 2);

}  // namespace dstage::testing
