// Records the bundled Cuban fixtures from the scripted responder, or checks
// that the shipped ones still match what it would record.

#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "cuban_responder.hpp"
#include "dstage/script/serialization.hpp"
#include "dstage/service/workflow.hpp"

namespace fs = std::filesystem;
using namespace dstage;

namespace {

llm::Fixture record(const fs::path& dataset, const std::string& settings_file, const std::string& artifacts) {
  const auto req = parse_requirement(read_json_file(dataset / "requirement.json"));
  const auto settings = service::settings_from_json(read_json_file(dataset / settings_file));
  auto gateway = llm::Gateway::recording(std::make_shared<authoring::CubanResponder>(dataset));
  const auto result = service::run_end_to_end(req, settings, *gateway, llm::PromptLibrary::builtin());
  if (!artifacts.empty()) service::write_artifacts(result, fs::path(artifacts) / fs::path(settings_file).stem());
  return gateway->recorded();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Author the bundled Cuban scenario fixtures"};
  std::string dataset = (service::dataset_root() / "cuban_missile_crisis").string();
  std::string out = (service::dataset_root() / "fixtures").string();
  std::string artifacts;
  bool check = false;
  app.add_option("--dataset", dataset, "scenario dataset directory");
  app.add_option("--out", out, "fixture directory");
  app.add_option("--artifacts", artifacts, "also write the run artifacts under this directory");
  app.add_flag("--check", check, "compare with the files in --out instead of writing");
  CLI11_PARSE(app, argc, argv);

  int stale = 0;
  for (const auto& [settings, name] : {std::pair{"baseline_settings.json", "cuban_baseline.jsonl"},
                                       std::pair{"counterfactual_settings.json", "cuban_counterfactual.jsonl"}}) {
    try {
      const auto text = record(dataset, settings, artifacts).to_text();
      const auto path = fs::path(out) / name;
      if (!check) {
        fs::create_directories(out);
        write_text_file(path, text);
        std::printf("wrote %s\n", path.c_str());
      } else if (!fs::exists(path) || read_text_file(path) != text) {
        std::printf("stale: %s\n", path.c_str());
        ++stale;
      } else {
        std::printf("up to date: %s\n", path.c_str());
      }
    } catch (const std::exception& e) {
      std::fprintf(stderr, "%s: %s\n", settings, e.what());
      return 2;
    }
  }
  return stale == 0 ? 0 : 1;
}
