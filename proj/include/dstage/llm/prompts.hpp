#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace dstage::llm {

struct RenderedPrompt {
  std::string template_id;
  std::string system;
  std::string user;
};

/// Prompt templates with {{placeholder}} slots. A template file holds a
/// "[system]" and a "[user]" section; lines starting with "#!" are comments.
class PromptLibrary {
 public:
  /// Templates compiled in from assets/prompts.
  static const PromptLibrary& builtin();
  static PromptLibrary from_directory(const std::filesystem::path& dir);

  void add(std::string id, std::string_view text);
  bool has(std::string_view id) const;

  /// Throws Error when the template is unknown or uses a placeholder that
  /// `vars` does not supply.
  RenderedPrompt render(std::string_view id, const std::map<std::string, std::string>& vars) const;

 private:
  struct Template {
    std::string system;
    std::string user;
  };
  std::map<std::string, Template, std::less<>> templates_;
};

/// Replaces every {{name}} in `text`.
std::string substitute(std::string_view text, const std::map<std::string, std::string>& vars);

}  // namespace dstage::llm
