#pragma once

#include "run_config.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace mtksmm::cli {

/// Command-line flags shared by every command. Flags override the config.
struct CommandArgs {
  std::string config_path;
  std::string model_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  // generate only
  std::string z_text;
  std::string u_text;
  std::optional<int> z_grid;
  std::optional<int> u_grid;
  std::optional<int> task;
  bool svg = true;
};

/// Loads the config (defaults when no path is given), applies flag
/// overrides, creates the output directory and writes the effective config
/// there as effective_config.json.
RunConfig prepare(const CommandArgs& args);

/// Writes model.json, state.json, trace.csv and report.csv (or
/// regression_report.csv plus a curve SVG for the regression toys).
void cmd_train(const CommandArgs& args);
/// With --model: evaluates the stored model on the config's split. Without:
/// runs the method comparison over every configured dataset.
void cmd_evaluate(const CommandArgs& args);
/// Decodes G(z, u) on the requested latents into generated.csv (+ SVG).
void cmd_generate(const CommandArgs& args);
/// S/T sweep: sweep.csv, sweep_summary.csv and one SVG per metric.
void cmd_sweep(const CommandArgs& args);
/// Writes the configured dataset to data.csv.
void cmd_datagen(const CommandArgs& args);

/// Parses "a,b;c,d" into points; an empty string gives no points.
std::vector<std::vector<double>> parse_point_list(const std::string& text);

}  // namespace mtksmm::cli
