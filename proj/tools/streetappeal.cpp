#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "streetappeal/errors.hpp"
#include "streetappeal/pipeline.hpp"

namespace sp = streetappeal::pipeline;

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kValidation = 2, kBackend = 3 };

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Street appeal rating pipeline"};
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> output;
  std::optional<std::string> backend_kind;
  std::optional<int> permutations;
  bool strict = false, lenient = false, print_config = false;
  app.add_option("-c,--config", config_path, "JSON config file")->required();
  app.add_option("--seed", seed, "Override the global seed");
  app.add_option("-o,--output", output, "Override the output directory");
  app.add_option("--backend", backend_kind, "Override the rating backend (mock|remote)");
  app.add_option("--permutations", permutations, "Override the permutation count");
  auto* strict_flag = app.add_flag("--strict", strict, "Fail on the first bad item");
  app.add_flag("--lenient", lenient, "Skip and log bad items")->excludes(strict_flag);
  app.add_flag("--print-config", print_config, "Print the effective config to stdout before running");

  using Command = std::function<void(const sp::PipelineConfig&)>;
  const std::map<std::string, std::pair<std::string, Command>> commands = {
      {"sample", {"Sample points along the street network", [](auto& c) { sp::cmd_sample(c, std::cerr); }}},
      {"fetch", {"Fetch and stitch panoramas, compute luminosity", [](auto& c) { sp::cmd_fetch(c, std::cerr); }}},
      {"rate", {"Rate panoramas under all six prompt models", [](auto& c) { sp::cmd_rate(c, std::cerr); }}},
      {"panel-assign", {"Assign images to raters", [](auto& c) { sp::cmd_panel_assign(c, std::cerr); }}},
      {"panel-ingest", {"Validate and import human ratings", [](auto& c) { sp::cmd_panel_ingest(c, std::cerr); }}},
      {"adjust", {"Write mean-centered score surfaces", [](auto& c) { sp::cmd_adjust(c, std::cerr); }}},
      {"analyze", {"Run statistical and spatial analyses", [](auto& c) { sp::cmd_analyze(c, std::cerr); }}},
      {"report", {"Render tables, map layers and summary", [](auto& c) { sp::cmd_report(c, std::cerr); }}},
  };
  for (const auto& [name, entry] : commands) app.add_subcommand(name, entry.first);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }

  try {
    auto config = sp::load_config(config_path);
    if (seed) {
      config.seed = *seed;
      config.backend.seed = *seed;
    }
    if (output) config.paths.output = *output;
    if (backend_kind) config.backend.kind = streetappeal::backend::kind_from_string(*backend_kind);
    if (permutations) config.stats.permutations = *permutations;
    if (strict) config.strict = true;
    if (lenient) config.strict = false;
    config.validate();
    if (print_config) std::cout << sp::config_json(config);
    commands.at(app.get_subcommands().front()->get_name()).second(config);
    return kOk;
  } catch (const streetappeal::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const streetappeal::BackendExhausted& e) {
    std::cerr << "backend exhausted: " << e.what() << "\n";
    return kBackend;
  } catch (const streetappeal::AuthError& e) {
    std::cerr << "authentication failed: " << e.what() << "\n";
    return kBackend;
  } catch (const streetappeal::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kConfig;
  }
}
