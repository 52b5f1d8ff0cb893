#include "commands.hpp"

#include "mtksmm/serialization.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>

namespace {

enum ExitCode { kOk = 0, kRuntimeFailure = 1, kConfigFailure = 2 };

}  // namespace

int main(int argc, char** argv) {
  using namespace mtksmm;
  CLI::App app{"Multi-task kernel smoothing manifold models"};
  app.require_subcommand(1);

  cli::CommandArgs args;
  std::uint64_t seed = 0;
  int workers = 0;
  int z_grid = 0;
  int u_grid = 0;
  int task = 0;
  bool no_svg = false;

  auto common = [&](CLI::App* sub, bool config_required) {
    auto* c = sub->add_option("--config", args.config_path, "JSON run configuration");
    if (config_required) c->required();
    sub->add_option("--out", args.out_dir, "Output directory (overrides out_dir)");
    sub->add_option("--seed", seed, "Seed (overrides seed and evaluation.seeds)");
    sub->add_option("--workers", workers, "Threads; 0 uses every core");
  };

  std::function<void(const cli::CommandArgs&)> action;
  auto* train = app.add_subcommand("train", "Train one model and write model, state and trace");
  common(train, false);
  train->callback([&] { action = cli::cmd_train; });

  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a model or compare the three methods");
  common(evaluate, false);
  evaluate->add_option("--model", args.model_path, "Model file written by train");
  evaluate->callback([&] { action = cli::cmd_evaluate; });

  auto* generate = app.add_subcommand("generate", "Decode G(z, u) on chosen latents");
  common(generate, false);
  generate->add_option("--model", args.model_path, "Model file written by train")->required();
  generate->add_option("--z", args.z_text, "Sample latents, e.g. \"0,0;0.5,-0.5\"");
  generate->add_option("--u", args.u_text, "Task latents, e.g. \"-0.5;0.5\"");
  generate->add_option("--z-grid", z_grid, "Lattice points per sample-latent axis");
  generate->add_option("--u-grid", u_grid, "Lattice points per task-latent axis");
  generate->add_option("--task", task, "Task model to decode (mode none models)");
  generate->add_flag("--no-svg", no_svg, "Skip the SVG plot");
  generate->callback([&] { action = cli::cmd_generate; });

  auto* sweep = app.add_subcommand("sweep", "Metrics against samples per task");
  common(sweep, true);
  sweep->callback([&] { action = cli::cmd_sweep; });

  auto* datagen = app.add_subcommand("datagen", "Write the configured dataset as CSV");
  common(datagen, false);
  datagen->callback([&] { action = cli::cmd_datagen; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigFailure;
  }

  for (CLI::App* sub : app.get_subcommands()) {
    if (sub->count("--seed") > 0) args.seed = seed;
    if (sub->count("--workers") > 0) args.workers = workers;
    if (sub == generate) {
      if (sub->count("--z-grid") > 0) args.z_grid = z_grid;
      if (sub->count("--u-grid") > 0) args.u_grid = u_grid;
      if (sub->count("--task") > 0) args.task = task;
      args.svg = !no_svg;
    }
  }

  try {
    action(args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return kOk;
}
