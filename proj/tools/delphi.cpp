// delphi: multi-round, persona-diverse probability elicitation with LLM
// panels, plus the benchmark evaluation harness around it.

#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "delphi/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Delphi panel elicitation engine and evaluation harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::string quantity_path;
  std::string evidence_path;
  std::string data_dir;
  std::string output_dir;
  std::optional<std::uint64_t> seed;

  CLI::App* elicit = app.add_subcommand("elicit", "Run one panel elicitation");
  elicit->add_option("--config", config_path, "Run configuration (JSON)")->required();
  elicit->add_option("--quantity", quantity_path, "Quantity description file (JSON)")->required();
  elicit->add_option("--evidence", evidence_path, "Evidence list file (JSON)");
  elicit->add_option("--seed", seed, "Override the panel seed");
  elicit->add_option("--output-dir", output_dir, "Override the output directory");

  CLI::App* experiment =
      app.add_subcommand("experiment", "Run the experiment named in the config");
  experiment->add_option("--config", config_path, "Run configuration (JSON)")->required();
  experiment->add_option("--seed", seed, "Override the panel seed");
  experiment->add_option("--output-dir", output_dir, "Override the output directory");
  experiment->add_option("--data-dir", data_dir, "Override the benchmark data directory");

  CLI::App* validate = app.add_subcommand("validate-data", "Check the bundled benchmark tables");
  validate->add_option("--data-dir", data_dir, "Benchmark data directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  delphi::cli::Overrides overrides;
  overrides.seed = seed;
  if (!output_dir.empty()) overrides.output_dir = output_dir;
  if (!data_dir.empty()) overrides.data_dir = data_dir;

  try {
    if (elicit->parsed()) {
      std::optional<std::filesystem::path> evidence;
      if (!evidence_path.empty()) evidence = evidence_path;
      return delphi::cli::cmd_elicit(config_path, quantity_path, evidence, std::cout, std::cerr,
                                     overrides);
    }
    if (experiment->parsed()) {
      return delphi::cli::cmd_experiment(config_path, std::cout, std::cerr, overrides);
    }
    std::optional<std::filesystem::path> dir;
    if (!data_dir.empty()) dir = data_dir;
    return delphi::cli::cmd_validate_data(dir, std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
}
