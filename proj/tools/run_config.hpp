#pragma once

#include "mtksmm/eval.hpp"

#include <json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace mtksmm::cli {

/// Latents for `generate`: explicit lists and/or regular lattices with
/// `*_grid` points per axis (0 disables the lattice).
struct GenerateSpec {
  std::vector<std::vector<double>> z_list;
  int z_grid = 0;
  std::vector<std::vector<double>> u_list;
  int u_grid = 0;
  /// Output coordinates drawn on the SVG (0-based).
  int plot_x = 0;
  int plot_y = 2;
};

/// Everything an experiment needs; every field has a default.
struct RunConfig {
  std::vector<DatasetSpec> datasets{DatasetSpec{}};
  MTConfig model;
  EvalOptions evaluation;
  /// Seed of single-model commands (train, datagen, evaluate --model).
  std::uint64_t seed = 1;
  /// Threads for the per-sample and per-task loops; 0 uses every core.
  int workers = 0;
  GenerateSpec generate;
  std::string out_dir = "out";
};

/// Parses a config document. Relative CSV paths are resolved against
/// `base_dir`. Throws ConfigError naming the offending field.
RunConfig run_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
RunConfig load_run_config(const std::string& path);

/// The effective configuration with every default spelled out.
nlohmann::json run_config_to_json(const RunConfig& config);

}  // namespace mtksmm::cli
