#include "../tools/commands.hpp"
#include "../tools/run_config.hpp"

#include "mtksmm/serialization.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mtksmm;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "mtksmm_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

RunResult run(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt";
  const fs::path err = dir / "stderr.txt";
  const std::string cmd = std::string("\"") + MTKSMM_CLI_PATH + "\" " + args + " >\"" +
                          out.string() + "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out);
  r.err = read_file(err);
  return r;
}

fs::path write_config(const fs::path& dir, const nlohmann::json& j,
                      const std::string& name = "config.json") {
  const fs::path p = dir / name;
  std::ofstream(p) << j.dump(2);
  return p;
}

nlohmann::json small_saddle(int iters = 6, const std::string& mode = "both") {
  return {{"dataset", {{"kind", "saddle"}, {"n_tasks", 12}, {"samples_per_task", 8}}},
          {"model", {{"mode", mode}, {"schedule", {{"total_iters", iters}}}}},
          {"evaluation", {{"n_train_tasks", 9}, {"st_list", {3}}, {"new_task_rounds", 2}}},
          {"workers", 1}};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<double> split_doubles(const std::string& line) {
  std::vector<double> v;
  std::istringstream in(line);
  for (std::string c; std::getline(in, c, ',');) v.push_back(std::stod(c));
  return v;
}

double value_after(const std::string& text, const std::string& key) {
  const auto p = text.find(key + "=");
  REQUIRE(p != std::string::npos);
  return std::stod(text.substr(p + key.size() + 1));
}

// Reads a column of a CSV by header name.
std::vector<std::string> column(const std::string& csv, const std::string& name) {
  const auto rows = lines(csv);
  std::vector<std::string> header;
  std::istringstream h(rows.at(0));
  for (std::string c; std::getline(h, c, ',');) header.push_back(c);
  const auto idx = static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
  REQUIRE(idx < header.size());
  std::vector<std::string> out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    std::vector<std::string> cells;
    std::istringstream in(rows[r]);
    for (std::string c; std::getline(in, c, ',');) cells.push_back(c);
    out.push_back(cells.at(idx));
  }
  return out;
}

}  // namespace

TEST_CASE("parse_point_list") {
  CHECK(cli::parse_point_list("").empty());
  CHECK(cli::parse_point_list("  ").empty());
  const auto p = cli::parse_point_list("0,0.5;-1, 1");
  REQUIRE(p.size() == 2);
  CHECK(p[1] == std::vector<double>{-1.0, 1.0});
  CHECK_THROWS_AS(cli::parse_point_list("0,abc"), ConfigError);
}

TEST_CASE("run config parsing names the offending field") {
  CHECK_NOTHROW(cli::run_config_from_json(small_saddle()));
  auto j = small_saddle();
  j["model"]["schedule"]["lambda_T_end"] = -1.0;
  try {
    cli::run_config_from_json(j);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("model.schedule.lambda_T") != std::string::npos);
  }
  auto k = small_saddle();
  k["evaluation"]["st_lists"] = {2};
  try {
    cli::run_config_from_json(k);
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("st_lists") != std::string::npos);
  }
  auto c = small_saddle();
  c["dataset"] = {{"kind", "csv"}, {"csv", {{"path", "nowhere.csv"}, {"value_columns", {"a"}}, {"task_column", "t"}}}};
  CHECK_THROWS_AS(cli::run_config_from_json(c), ConfigError);

  const cli::RunConfig cfg = cli::run_config_from_json(small_saddle());
  CHECK(cli::run_config_to_json(cli::run_config_from_json(cli::run_config_to_json(cfg))) ==
        cli::run_config_to_json(cfg));
}

TEST_CASE("train writes model, state and trace; reruns are byte-identical") {
  const fs::path dir = fresh_dir("train");
  const fs::path cfg = write_config(dir, small_saddle(7));
  const RunResult a = run("train --config \"" + cfg.string() + "\" --out \"" + (dir / "a").string() + "\"", dir);
  REQUIRE(a.exit_code == 0);
  for (const char* f : {"model.json", "state.json", "trace.csv", "report.csv", "effective_config.json"}) {
    CHECK(fs::exists(dir / "a" / f));
  }
  const auto trace = lines(read_file(dir / "a" / "trace.csv"));
  CHECK(trace.size() == 7 + 1);
  CHECK(trace[0] == "iteration,lower_cost");

  const RunResult b = run("train --config \"" + cfg.string() + "\" --out \"" + (dir / "b").string() + "\"", dir);
  REQUIRE(b.exit_code == 0);
  for (const char* f : {"model.json", "state.json", "trace.csv", "report.csv"}) {
    CHECK(read_file(dir / "a" / f) == read_file(dir / "b" / f));
  }
  CHECK(a.out == b.out);

  // Reloading the effective configuration reproduces the outputs.
  const RunResult c = run("train --config \"" + (dir / "a" / "effective_config.json").string() +
                              "\" --out \"" + (dir / "c").string() + "\"",
                          dir);
  REQUIRE(c.exit_code == 0);
  for (const char* f : {"model.json", "state.json", "trace.csv", "report.csv"}) {
    CHECK(read_file(dir / "a" / f) == read_file(dir / "c" / f));
  }

  // Evaluating the stored model on the same split reproduces the training metric.
  const RunResult e = run("evaluate --config \"" + cfg.string() + "\" --model \"" +
                              (dir / "a" / "model.json").string() + "\" --out \"" +
                              (dir / "e").string() + "\"",
                          dir);
  REQUIRE(e.exit_code == 0);
  CHECK(std::abs(value_after(e.out, "rmse_existing") - value_after(a.out, "rmse_existing")) < 1e-9);
  CHECK(fs::exists(dir / "e" / "reports.csv"));
  CHECK(lines(read_file(dir / "e" / "summary.csv")).size() == 2);

  // A different seed changes the results.
  const RunResult s = run("train --config \"" + cfg.string() + "\" --seed 5 --out \"" + (dir / "s").string() + "\"", dir);
  REQUIRE(s.exit_code == 0);
  CHECK(read_file(dir / "a" / "trace.csv") != read_file(dir / "s" / "trace.csv"));
}

TEST_CASE("mode none stores one model per task and no W") {
  const fs::path dir = fresh_dir("none");
  const fs::path cfg = write_config(dir, small_saddle(4, "none"));
  REQUIRE(run("train --config \"" + cfg.string() + "\" --out \"" + dir.string() + "\"", dir).exit_code == 0);
  const nlohmann::json model = read_json_file((dir / "model.json").string());
  REQUIRE(model.contains("task_models"));
  CHECK(model.at("task_models").size() == 9);
  CHECK_FALSE(model.contains("W"));
  CHECK(model.at("mode") == "none");
}

TEST_CASE("configuration and IO failures exit with code 2") {
  const fs::path dir = fresh_dir("errors");
  const fs::path cfg = write_config(dir, small_saddle());
  const fs::path missing = dir / "no_such_model.json";
  const RunResult m = run("evaluate --config \"" + cfg.string() + "\" --model \"" + missing.string() + "\" --out \"" + dir.string() + "\"", dir);
  CHECK(m.exit_code == 2);
  CHECK(m.err.find(missing.string()) != std::string::npos);

  auto bad = small_saddle();
  bad["model"]["lower_basis"] = {{"latent_dim", 2}, {"max_degree_per_dim", -1}};
  const fs::path bad_cfg = write_config(dir, bad, "bad.json");
  const RunResult b = run("train --config \"" + bad_cfg.string() + "\" --out \"" + dir.string() + "\"", dir);
  CHECK(b.exit_code == 2);
  CHECK(b.err.find("max_degree_per_dim") != std::string::npos);

  const RunResult n = run("train --config \"" + (dir / "absent.json").string() + "\"", dir);
  CHECK(n.exit_code == 2);
  CHECK(n.err.find("absent.json") != std::string::npos);

  CHECK(run("frobnicate", dir).exit_code == 2);
  CHECK(run("sweep", dir).exit_code == 2);

  // A model trained with other bases is rejected with dimension diagnostics.
  REQUIRE(run("train --config \"" + cfg.string() + "\" --out \"" + (dir / "m").string() + "\"", dir).exit_code == 0);
  auto other = small_saddle();
  other["model"]["lower_basis"] = {{"latent_dim", 2}, {"max_degree_per_dim", 3}};
  const fs::path other_cfg = write_config(dir, other, "other.json");
  const RunResult x = run("evaluate --config \"" + other_cfg.string() + "\" --model \"" +
                              (dir / "m" / "model.json").string() + "\" --out \"" + dir.string() + "\"",
                          dir);
  CHECK(x.exit_code == 2);
  CHECK(x.err.find("lower basis") != std::string::npos);
}

TEST_CASE("generate: header-only output, u sweeps and the learned saddle surface") {
  const fs::path dir = fresh_dir("generate");
  auto j = small_saddle(60);
  j["dataset"] = {{"kind", "saddle"}, {"n_tasks", 60}, {"samples_per_task", 20}};
  j["evaluation"]["n_train_tasks"] = 50;
  j["evaluation"]["st_list"] = {20};
  const fs::path cfg = write_config(dir, j);
  const std::string model = (dir / "m" / "model.json").string();
  REQUIRE(run("train --config \"" + cfg.string() + "\" --out \"" + (dir / "m").string() + "\"", dir).exit_code == 0);

  REQUIRE(run("generate --model \"" + model + "\" --out \"" + (dir / "empty").string() + "\"", dir).exit_code == 0);
  const auto empty = lines(read_file(dir / "empty" / "generated.csv"));
  REQUIRE(empty.size() == 1);
  CHECK(empty[0].rfind("z_1,z_2,u_1,x_1,", 0) == 0);

  REQUIRE(run("generate --model \"" + model + "\" --z 0.1,-0.2 --u \"-0.5;0;0.5;1\" --no-svg --out \"" +
                  (dir / "usweep").string() + "\"",
              dir).exit_code == 0);
  CHECK(lines(read_file(dir / "usweep" / "generated.csv")).size() == 1 + 4);
  CHECK_FALSE(fs::exists(dir / "usweep" / "generated.svg"));

  REQUIRE(run("generate --model \"" + model + "\" --z-grid 9 --u 0.3 --out \"" + (dir / "surface").string() + "\"",
              dir).exit_code == 0);
  CHECK(fs::exists(dir / "surface" / "generated.svg"));
  const auto rows = lines(read_file(dir / "surface" / "generated.csv"));
  REQUIRE(rows.size() == 1 + 81);
  // Latent axes are identifiable only up to cube symmetries, so compare the
  // visible coordinates: x3 - (x1^2 - x2^2) is constant on one task manifold.
  std::vector<double> offsets;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto v = split_doubles(rows[r]);
    const double x1 = v[3];
    const double x2 = v[4];
    offsets.push_back(v[5] - (x1 * x1 - x2 * x2));
  }
  double mean = 0.0;
  for (double o : offsets) mean += o;
  mean /= static_cast<double>(offsets.size());
  double sq = 0.0;
  for (double o : offsets) sq += (o - mean) * (o - mean);
  const double spread = std::sqrt(sq / static_cast<double>(offsets.size()));
  CAPTURE(spread);
  CHECK(spread < 0.2);

  const RunResult out_of_cube = run("generate --model \"" + model + "\" --z 1.5,0 --out \"" + (dir / "bad").string() + "\"", dir);
  CHECK(out_of_cube.exit_code == 2);
}

TEST_CASE("generate for mode none decodes a chosen task") {
  const fs::path dir = fresh_dir("generate_none");
  const fs::path cfg = write_config(dir, small_saddle(4, "none"));
  REQUIRE(run("train --config \"" + cfg.string() + "\" --out \"" + (dir / "m").string() + "\"", dir).exit_code == 0);
  const std::string model = (dir / "m" / "model.json").string();
  REQUIRE(run("generate --model \"" + model + "\" --z \"0,0;0.5,0.5\" --task 2 --out \"" + (dir / "g").string() + "\"", dir).exit_code == 0);
  const auto rows = lines(read_file(dir / "g" / "generated.csv"));
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].rfind("z_1,z_2,task,x_1", 0) == 0);
  CHECK(column(read_file(dir / "g" / "generated.csv"), "task") == std::vector<std::string>{"2", "2"});
  CHECK(run("generate --model \"" + model + "\" --task 99 --out \"" + (dir / "g").string() + "\"", dir).exit_code == 2);
}

TEST_CASE("evaluate without a model runs a scaled-down four-family preset") {
  const fs::path dir = fresh_dir("families");
  nlohmann::json j = read_json_file(std::string(MTKSMM_PRESET_DIR) + "/saddle_table1.json");
  for (auto& d : j["datasets"]) {
    d["n_tasks"] = 10;
    d["samples_per_task"] = 6;
  }
  j["model"]["schedule"]["total_iters"] = 4;
  j["evaluation"]["n_train_tasks"] = 8;
  j["evaluation"]["seeds"] = {1};
  j["evaluation"]["new_task_rounds"] = 1;
  const fs::path cfg = write_config(dir, j);
  const RunResult r = run("evaluate --config \"" + cfg.string() + "\" --out \"" + dir.string() + "\"", dir);
  REQUIRE(r.exit_code == 0);
  const auto summary = lines(read_file(dir / "summary.csv"));
  CHECK(summary.size() == 1 + 12);
  CHECK(lines(read_file(dir / "reports.csv")).size() == 1 + 12);
  const auto methods = column(read_file(dir / "summary.csv"), "method");
  CHECK(methods[0] == "MT-KSMM");
  CHECK(methods[1] == "KSMM2");
  CHECK(methods[2] == "KSMM");
}

TEST_CASE("evaluate and train on the regression preset") {
  const fs::path dir = fresh_dir("regression");
  nlohmann::json j = read_json_file(std::string(MTKSMM_PRESET_DIR) + "/regression_fig9.json");
  for (auto& d : j["datasets"]) d["n_tasks"] = 12;
  j["model"]["schedule"]["total_iters"] = 5;
  const fs::path cfg = write_config(dir, j);
  REQUIRE(run("evaluate --config \"" + cfg.string() + "\" --out \"" + dir.string() + "\"", dir).exit_code == 0);
  const auto rows = lines(read_file(dir / "regression.csv"));
  CHECK(rows.size() == 1 + 6);
  CHECK(rows[0] == "dataset,mode,method,st,seed,mse");

  nlohmann::json t = j;
  t["dataset"] = t["datasets"][1];
  t.erase("datasets");
  const fs::path tcfg = write_config(dir, t, "train.json");
  const RunResult r = run("train --config \"" + tcfg.string() + "\" --out \"" + (dir / "t").string() + "\"", dir);
  REQUIRE(r.exit_code == 0);
  CHECK(fs::exists(dir / "t" / "regression_curves.svg"));
  const RunResult e = run("evaluate --config \"" + tcfg.string() + "\" --model \"" +
                              (dir / "t" / "model.json").string() + "\" --out \"" + (dir / "e").string() + "\"",
                          dir);
  REQUIRE(e.exit_code == 0);
  CHECK(value_after(e.out, "mse") == value_after(r.out, "mse"));
}

TEST_CASE("sweep writes per-mode curves with error bars only for several seeds") {
  const fs::path dir = fresh_dir("sweep");
  auto j = small_saddle(4);
  j["evaluation"]["st_list"] = {2};
  j["evaluation"]["seeds"] = {1};
  const fs::path cfg = write_config(dir, j);
  REQUIRE(run("sweep --config \"" + cfg.string() + "\" --out \"" + (dir / "one").string() + "\"", dir).exit_code == 0);
  CHECK(lines(read_file(dir / "one" / "sweep.csv")).size() == 1 + 3);
  for (const char* f : {"sweep_rmse_existing.svg", "sweep_mi_existing.svg", "sweep_rmse_new.svg", "sweep_mi_new.svg"}) {
    const std::string svg = read_file(dir / "one" / f);
    CHECK(svg.find("<svg") != std::string::npos);
    CHECK(svg.find("<line x1") != std::string::npos);  // axes
  }
  // Single seed: no error bar caps (8 px wide horizontal segments at a data point).
  const std::string one = read_file(dir / "one" / "sweep_rmse_existing.svg");

  j["evaluation"]["st_list"] = {2, 3, 4, 5};
  j["evaluation"]["seeds"] = {1, 2, 3};
  const fs::path cfg36 = write_config(dir, j, "c36.json");
  REQUIRE(run("sweep --config \"" + cfg36.string() + "\" --out \"" + (dir / "many").string() + "\"", dir).exit_code == 0);
  CHECK(lines(read_file(dir / "many" / "sweep.csv")).size() == 1 + 36);
  CHECK(lines(read_file(dir / "many" / "sweep_summary.csv")).size() == 1 + 12);
  const std::string many = read_file(dir / "many" / "sweep_rmse_existing.svg");
  auto count = [](const std::string& s, const std::string& n) {
    std::size_t c = 0;
    for (auto p = s.find(n); p != std::string::npos; p = s.find(n, p + 1)) ++c;
    return c;
  };
  // Same axes in both plots; only the multi-seed sweep adds bar and cap lines.
  const std::size_t axis_lines_one = count(one, "<line");
  const std::size_t lines_many = count(many, "<line");
  CHECK(lines_many > axis_lines_one);
  CHECK((lines_many - axis_lines_one) % 3 == 0);
}

TEST_CASE("datagen writes the configured dataset") {
  const fs::path dir = fresh_dir("datagen");
  const fs::path cfg = write_config(dir, small_saddle());
  REQUIRE(run("datagen --config \"" + cfg.string() + "\" --out \"" + dir.string() + "\"", dir).exit_code == 0);
  const auto rows = lines(read_file(dir / "data.csv"));
  CHECK(rows.size() == 1 + 12 * 8);
  CHECK(rows[0].rfind("task,x_1,", 0) == 0);

  // The exported file loads back as a CSV dataset.
  nlohmann::json j = small_saddle();
  nlohmann::json values = nlohmann::json::array();
  for (int k = 1; k <= 10; ++k) values.push_back("x_" + std::to_string(k));
  j["dataset"] = {{"kind", "csv"},
                  {"csv", {{"path", "data.csv"}, {"value_columns", values}, {"task_column", "task"}}}};
  const fs::path csv_cfg = write_config(dir, j, "csv.json");
  REQUIRE(run("datagen --config \"" + csv_cfg.string() + "\" --out \"" + (dir / "again").string() + "\"", dir).exit_code == 0);
  const auto again = lines(read_file(dir / "again" / "data.csv"));
  REQUIRE(again.size() == rows.size());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    CHECK(rows[r].substr(0, again[r].size()) == again[r]);
  }
}
