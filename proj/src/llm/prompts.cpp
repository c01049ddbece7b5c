#include "dstage/llm/prompts.hpp"

#include <set>
#include <sstream>

#include "dstage/common/assets.hpp"
#include "dstage/common/errors.hpp"
#include "dstage/common/json.hpp"

namespace dstage::llm {
namespace {

std::string trim_block(std::string s) {
  const auto first = s.find_first_not_of("\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of("\n \t");
  return s.substr(first, last - first + 1);
}

std::set<std::string> placeholders(std::string_view text) {
  std::set<std::string> names;
  std::size_t pos = 0;
  while ((pos = text.find("{{", pos)) != std::string_view::npos) {
    const auto end = text.find("}}", pos + 2);
    if (end == std::string_view::npos) break;
    names.emplace(text.substr(pos + 2, end - pos - 2));
    pos = end + 2;
  }
  return names;
}

}  // namespace

std::string substitute(std::string_view text, const std::map<std::string, std::string>& vars) {
  std::string out;
  out.reserve(text.size());
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto open = text.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    const auto close = text.find("}}", open + 2);
    if (close == std::string_view::npos) {
      out.append(text.substr(pos));
      break;
    }
    out.append(text.substr(pos, open - pos));
    const std::string name(text.substr(open + 2, close - open - 2));
    auto it = vars.find(name);
    if (it == vars.end()) throw Error("prompt placeholder {{" + name + "}} has no value");
    out.append(it->second);
    pos = close + 2;
  }
  return out;
}

const PromptLibrary& PromptLibrary::builtin() {
  static const PromptLibrary library = [] {
    PromptLibrary lib;
    static constexpr std::string_view kPrefix = "prompts/";
    for (const auto& path : assets::list(kPrefix)) {
      auto id = path.substr(kPrefix.size());
      if (auto dot = id.rfind(".txt"); dot != std::string::npos) id = id.substr(0, dot);
      lib.add(id, assets::get(path));
    }
    return lib;
  }();
  return library;
}

PromptLibrary PromptLibrary::from_directory(const std::filesystem::path& dir) {
  PromptLibrary lib = builtin();
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() != ".txt") continue;
    lib.add(entry.path().stem().string(), read_text_file(entry.path()));
  }
  return lib;
}

void PromptLibrary::add(std::string id, std::string_view text) {
  Template t;
  std::string* section = nullptr;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("#!", 0) == 0) continue;
    if (line == "[system]") {
      section = &t.system;
      continue;
    }
    if (line == "[user]") {
      section = &t.user;
      continue;
    }
    if (section == nullptr) continue;
    *section += line;
    *section += '\n';
  }
  t.system = trim_block(t.system);
  t.user = trim_block(t.user);
  if (t.system.empty()) throw Error("prompt template '" + id + "' has no [system] section");
  templates_[std::move(id)] = std::move(t);
}

bool PromptLibrary::has(std::string_view id) const { return templates_.find(id) != templates_.end(); }

RenderedPrompt PromptLibrary::render(std::string_view id,
                                     const std::map<std::string, std::string>& vars) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) throw Error("unknown prompt template '" + std::string(id) + "'");
  for (const auto& section : {it->second.system, it->second.user}) {
    for (const auto& name : placeholders(section))
      if (!vars.contains(name))
        throw Error("prompt template '" + std::string(id) + "' needs {{" + name + "}}");
  }
  return {std::string(id), substitute(it->second.system, vars), substitute(it->second.user, vars)};
}

}  // namespace dstage::llm
