#include "balsam/commands.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"Joint longitudinal-survival models with arc-length hazards"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> preset, longitudinal, survival, fit_dir;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration or run manifest")->required();
    sub->add_option("--out", out_dir, "Output directory")->required();
    sub->add_option("--seed", seed, "Overrides the configured seed");
    sub->add_option("--threads", threads, "Worker threads for chains");
  };

  auto* simulate = app.add_subcommand("simulate", "Generate a joint dataset");
  add_common(simulate);
  auto* fit = app.add_subcommand("fit", "Fit a model by MCMC");
  add_common(fit);
  fit->add_option("--preset", preset, "Sampler preset: table2, model1-sim, model2-sim");
  fit->add_option("--longitudinal", longitudinal, "longitudinal.csv (id, time, z)");
  fit->add_option("--survival", survival, "survival.csv (id, t, delta, x1..xP)");
  auto* study = app.add_subcommand("study", "Coverage study: simulate, fit and score replicates");
  add_common(study);
  study->add_option("--preset", preset, "Sampler preset: table2, model1-sim, model2-sim");
  auto* curves = app.add_subcommand("curves", "Curve tables and risk flags from a fit");
  add_common(curves);
  curves->add_option("--fit", fit_dir, "Directory written by the fit command");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : balsam::kExitConfig;
  }

  balsam::Overrides overrides{seed, threads, preset, longitudinal, survival, fit_dir};
  balsam::Command command = balsam::Command::Fit;
  if (simulate->parsed()) command = balsam::Command::Simulate;
  if (study->parsed()) command = balsam::Command::Study;
  if (curves->parsed()) command = balsam::Command::Curves;
  return balsam::run_command(command, config_path, out_dir, overrides, std::cout, std::cerr);
}
