#include "run_config.hpp"

#include "mtksmm/serialization.hpp"

#include <filesystem>
#include <initializer_list>

namespace mtksmm::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const std::string& path) {
  if (!j.is_object()) throw ConfigError(path + ": expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || item.key() == a;
    if (!known) throw ConfigError(path + ": unknown field '" + item.key() + "'");
  }
}

template <typename T>
void read_if(const json& j, const char* key, T& out, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(path + "." + key + ": wrong type (" + j.at(key).dump() + ")");
  }
}

std::string join(const std::string& path, const char* key) {
  return path.empty() ? std::string(key) : path + "." + key;
}

DatasetSpec dataset_from_json(const json& j, const std::string& path, const std::string& base_dir) {
  reject_unknown(j,
                 {"name", "kind", "n_tasks", "samples_per_task", "sigma", "regression", "csv"},
                 path);
  DatasetSpec d;
  read_if(j, "kind", d.kind, path);
  d.name = d.kind;
  read_if(j, "name", d.name, path);
  read_if(j, "n_tasks", d.n_tasks, path);
  read_if(j, "samples_per_task", d.samples_per_task, path);
  read_if(j, "sigma", d.sigma, path);
  static const std::initializer_list<const char*> kinds{
      "saddle", "convex", "triangle", "sine", "regression_plain", "regression_shift", "csv"};
  bool known = false;
  for (const char* k : kinds) known = known || d.kind == k;
  if (!known) throw ConfigError(join(path, "kind") + ": unknown kind '" + d.kind + "'");
  if (d.n_tasks < 1) throw ConfigError(join(path, "n_tasks") + ": must be >= 1");
  if (d.samples_per_task < 1) throw ConfigError(join(path, "samples_per_task") + ": must be >= 1");
  if (!(d.sigma >= 0.0)) throw ConfigError(join(path, "sigma") + ": must be >= 0");
  if (j.contains("regression")) {
    const std::string rp = join(path, "regression");
    const json& r = j.at("regression");
    reject_unknown(r, {"a", "b", "c", "d", "sigma"}, rp);
    read_if(r, "a", d.regression.a, rp);
    read_if(r, "b", d.regression.b, rp);
    read_if(r, "c", d.regression.c, rp);
    read_if(r, "d", d.regression.d, rp);
    read_if(r, "sigma", d.regression.sigma, rp);
    if (!(d.regression.sigma >= 0.0)) throw ConfigError(rp + ".sigma: must be >= 0");
  }
  if (j.contains("csv")) {
    const std::string cp = join(path, "csv");
    const json& c = j.at("csv");
    reject_unknown(c, {"path", "value_columns", "task_column", "truth_z_columns", "truth_u_columns"},
                   cp);
    read_if(c, "path", d.csv_path, cp);
    read_if(c, "value_columns", d.csv_schema.value_columns, cp);
    read_if(c, "task_column", d.csv_schema.task_column, cp);
    read_if(c, "truth_z_columns", d.csv_schema.truth_z_columns, cp);
    read_if(c, "truth_u_columns", d.csv_schema.truth_u_columns, cp);
  }
  if (d.kind == "csv") {
    if (d.csv_path.empty()) throw ConfigError(path + ".csv.path: required for kind 'csv'");
    std::filesystem::path p(d.csv_path);
    if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
    d.csv_path = std::filesystem::absolute(p).lexically_normal().string();
    if (!std::filesystem::exists(p)) {
      throw ConfigError(path + ".csv.path: file '" + d.csv_path + "' does not exist");
    }
    if (d.csv_schema.value_columns.empty() || d.csv_schema.task_column.empty()) {
      throw ConfigError(path + ".csv: value_columns and task_column are required");
    }
  }
  return d;
}

json dataset_to_json(const DatasetSpec& d) {
  json j{{"name", d.name},
         {"kind", d.kind},
         {"n_tasks", d.n_tasks},
         {"samples_per_task", d.samples_per_task},
         {"sigma", d.sigma},
         {"regression",
          {{"a", d.regression.a},
           {"b", d.regression.b},
           {"c", d.regression.c},
           {"d", d.regression.d},
           {"sigma", d.regression.sigma}}}};
  if (d.kind == "csv") {
    j["csv"] = {{"path", d.csv_path},
                {"value_columns", d.csv_schema.value_columns},
                {"task_column", d.csv_schema.task_column},
                {"truth_z_columns", d.csv_schema.truth_z_columns},
                {"truth_u_columns", d.csv_schema.truth_u_columns}};
  }
  return j;
}

EvalOptions evaluation_from_json(const json& j, const std::string& path) {
  reject_unknown(j,
                 {"n_train_tasks", "st_list", "seeds", "modes", "bins", "new_task_rounds",
                  "evaluate_new", "record_runtime"},
                 path);
  EvalOptions e;
  read_if(j, "n_train_tasks", e.n_train_tasks, path);
  read_if(j, "st_list", e.st_list, path);
  read_if(j, "seeds", e.seeds, path);
  if (j.contains("modes")) {
    std::vector<std::string> names;
    read_if(j, "modes", names, path);
    e.modes.clear();
    for (const std::string& n : names) {
      try {
        e.modes.push_back(transfer_mode_from_string(n));
      } catch (const std::invalid_argument& ex) {
        throw ConfigError(path + ".modes: " + ex.what());
      }
    }
  }
  read_if(j, "bins", e.bins, path);
  read_if(j, "new_task_rounds", e.new_task.rounds, path);
  read_if(j, "evaluate_new", e.evaluate_new, path);
  read_if(j, "record_runtime", e.record_runtime, path);
  if (e.n_train_tasks < 1) throw ConfigError(path + ".n_train_tasks: must be >= 1");
  if (e.st_list.empty()) throw ConfigError(path + ".st_list: must be non-empty");
  for (int st : e.st_list) {
    if (st < 1) throw ConfigError(path + ".st_list: entries must be >= 1");
  }
  if (e.seeds.empty()) throw ConfigError(path + ".seeds: must be non-empty");
  if (e.modes.empty()) throw ConfigError(path + ".modes: must be non-empty");
  if (e.bins < 1) throw ConfigError(path + ".bins: must be >= 1");
  if (e.new_task.rounds < 0) throw ConfigError(path + ".new_task_rounds: must be >= 0");
  return e;
}

json evaluation_to_json(const EvalOptions& e) {
  std::vector<std::string> modes;
  for (TransferMode m : e.modes) modes.push_back(to_string(m));
  return {{"n_train_tasks", e.n_train_tasks}, {"st_list", e.st_list},
          {"seeds", e.seeds},                 {"modes", modes},
          {"bins", e.bins},                   {"new_task_rounds", e.new_task.rounds},
          {"evaluate_new", e.evaluate_new},   {"record_runtime", e.record_runtime}};
}

GenerateSpec generate_from_json(const json& j, const std::string& path) {
  reject_unknown(j, {"z_list", "z_grid", "u_list", "u_grid", "plot_x", "plot_y"}, path);
  GenerateSpec g;
  read_if(j, "z_list", g.z_list, path);
  read_if(j, "z_grid", g.z_grid, path);
  read_if(j, "u_list", g.u_list, path);
  read_if(j, "u_grid", g.u_grid, path);
  read_if(j, "plot_x", g.plot_x, path);
  read_if(j, "plot_y", g.plot_y, path);
  if (g.z_grid < 0 || g.u_grid < 0) throw ConfigError(path + ": grid sizes must be >= 0");
  return g;
}

json generate_to_json(const GenerateSpec& g) {
  return {{"z_list", g.z_list}, {"z_grid", g.z_grid}, {"u_list", g.u_list},
          {"u_grid", g.u_grid}, {"plot_x", g.plot_x}, {"plot_y", g.plot_y}};
}

}  // namespace

RunConfig run_config_from_json(const json& j, const std::string& base_dir) {
  reject_unknown(j,
                 {"dataset", "datasets", "model", "evaluation", "seed", "workers", "generate",
                  "out_dir"},
                 "config");
  RunConfig c;
  if (j.contains("dataset") && j.contains("datasets")) {
    throw ConfigError("config: give either 'dataset' or 'datasets', not both");
  }
  if (j.contains("dataset")) {
    c.datasets = {dataset_from_json(j.at("dataset"), "dataset", base_dir)};
  } else if (j.contains("datasets")) {
    const json& list = j.at("datasets");
    if (!list.is_array() || list.empty()) throw ConfigError("datasets: expected a non-empty array");
    c.datasets.clear();
    for (std::size_t i = 0; i < list.size(); ++i) {
      c.datasets.push_back(
          dataset_from_json(list[i], "datasets[" + std::to_string(i) + "]", base_dir));
    }
  }
  if (j.contains("model")) {
    try {
      c.model = mt_config_from_json(j.at("model"));
    } catch (const FormatError& e) {
      const std::string msg = e.what();
      throw ConfigError(msg.rfind("model", 0) == 0 ? msg : "model." + msg);
    }
  }
  if (j.contains("evaluation")) c.evaluation = evaluation_from_json(j.at("evaluation"), "evaluation");
  read_if(j, "seed", c.seed, "config");
  read_if(j, "workers", c.workers, "config");
  if (c.workers < 0) throw ConfigError("workers: must be >= 0");
  if (j.contains("generate")) c.generate = generate_from_json(j.at("generate"), "generate");
  read_if(j, "out_dir", c.out_dir, "config");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  json j;
  try {
    j = read_json_file(path);
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  }
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  return run_config_from_json(j, base.empty() ? "." : base.string());
}

json run_config_to_json(const RunConfig& c) {
  json datasets = json::array();
  for (const DatasetSpec& d : c.datasets) datasets.push_back(dataset_to_json(d));
  return {{"datasets", datasets},
          {"model", mt_config_to_json(c.model)},
          {"evaluation", evaluation_to_json(c.evaluation)},
          {"seed", c.seed},
          {"workers", c.workers},
          {"generate", generate_to_json(c.generate)},
          {"out_dir", c.out_dir}};
}

}  // namespace mtksmm::cli
