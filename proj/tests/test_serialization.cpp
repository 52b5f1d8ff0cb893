#include "mtksmm/datasets.hpp"
#include "mtksmm/serialization.hpp"
#include "mtksmm/svg.hpp"

#include <doctest.h>

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

using namespace mtksmm;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "mtksmm_test_serialization";
  std::filesystem::create_directories(dir);
  return dir / name;
}

MTConfig small_config(TransferMode mode) {
  MTConfig cfg;
  cfg.mode = mode;
  cfg.lower_basis = {2, 2};
  cfg.higher_basis = {1, 2};
  cfg.lower_nodes = 6;
  cfg.higher_nodes = 6;
  cfg.schedule.total_iters = 6;
  return cfg;
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto p = s.find(needle); p != std::string::npos; p = s.find(needle, p + 1)) ++n;
  return n;
}

}  // namespace

TEST_CASE("format_double round trips bit-exactly") {
  for (double v : {0.0, -0.0, 1.0, 0.1, 1.0 / 3.0, 1e-300, 6.02214076e23,
                   std::numeric_limits<double>::denorm_min(), std::numeric_limits<double>::max()}) {
    const std::string s = format_double(v);
    double back = 1.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), back);
    CHECK(ec == std::errc());
    CHECK(ptr == s.data() + s.size());
    CHECK(back == v);
    CHECK(std::signbit(back) == std::signbit(v));
  }
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("matrix json round trip and shape errors") {
  Matrix m(2, 3);
  m << 0.1, -2.5, 1.0 / 3.0, 4e-17, 5.0, -6.25;
  const nlohmann::json j = matrix_to_json(m);
  CHECK(j.at("rows") == 2);
  CHECK(j.at("cols") == 3);
  CHECK(j.at("data")[1] == -2.5);
  CHECK(matrix_from_json(j, "m") == m);
  nlohmann::json bad = j;
  bad["data"].erase(0);
  CHECK_THROWS_AS(matrix_from_json(bad, "m"), FormatError);
}

TEST_CASE("config json round trip and strict field checks") {
  MTConfig cfg = small_config(TransferMode::model_only);
  cfg.schedule.lambda_L_end = 0.15;
  cfg.lower_estep.grid_res = 13;
  cfg.fix_sample_latents = true;
  const MTConfig back = mt_config_from_json(mt_config_to_json(cfg));
  CHECK(mt_config_to_json(back) == mt_config_to_json(cfg));
  CHECK(back.mode == TransferMode::model_only);
  CHECK(back.schedule.lambda_L_end == 0.15);

  nlohmann::json j = mt_config_to_json(cfg);
  j["schedule"]["lambda_L_start"] = 0.05;
  try {
    mt_config_from_json(j);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("lambda_L") != std::string::npos);
  }
  nlohmann::json extra = mt_config_to_json(cfg);
  extra["colour"] = 1;
  try {
    mt_config_from_json(extra);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("colour") != std::string::npos);
  }
  const MTConfig partial = mt_config_from_json(nlohmann::json{{"mode", "none"}});
  CHECK(partial.mode == TransferMode::none);
  CHECK(partial.schedule.total_iters == MTConfig{}.schedule.total_iters);
}

TEST_CASE("model save/load is bit-exact in every mode") {
  const LabeledMultiTaskDataset ds = gen_saddle(4, 8, 0.1, 1);
  for (TransferMode mode : {TransferMode::both, TransferMode::model_only, TransferMode::none}) {
    CAPTURE(to_string(mode));
    const MTConfig cfg = small_config(mode);
    const MTResult r = train(ds.data, cfg, 3);
    const auto path = temp_file("model_" + to_string(mode) + ".json");
    save_model(path.string(), r, cfg);
    const StoredModel s = load_model(path.string());
    CHECK(s.result.mode == mode);
    CHECK(s.result.state.U == r.state.U);
    for (int i = 0; i < 4; ++i) CHECK(s.result.task_coeff(i) == r.task_coeff(i));
    CHECK(mt_config_to_json(s.config) == mt_config_to_json(cfg));

    const nlohmann::json doc = read_json_file(path.string());
    CHECK(doc.at("dim_visible") == 10);
    if (mode == TransferMode::none) {
      CHECK(doc.contains("task_models"));
      CHECK_FALSE(doc.contains("W"));
    } else {
      CHECK(doc.contains("W"));
      CHECK_FALSE(doc.contains("task_models"));
      REQUIRE(s.result.model.W.size() == r.model.W.size());
      for (std::size_t k = 0; k < r.model.W.size(); ++k) CHECK(s.result.model.W[k] == r.model.W[k]);
    }
    // Saving the loaded model reproduces the file byte for byte.
    const auto again = temp_file("model_again.json");
    save_model(again.string(), s.result, s.config);
    CHECK(read_json_file(again.string()).dump() == doc.dump());
  }
}

TEST_CASE("model loading errors name the file or field") {
  const auto missing = temp_file("does_not_exist.json");
  try {
    load_model(missing.string());
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find(missing.string()) != std::string::npos);
  }

  const LabeledMultiTaskDataset ds = gen_saddle(3, 5, 0.1, 2);
  const MTConfig cfg = small_config(TransferMode::both);
  const MTResult r = train(ds.data, cfg, 1);
  nlohmann::json doc = model_to_json(r, cfg);
  doc["W"].erase(0);
  const auto broken = temp_file("broken.json");
  write_json_file(broken.string(), doc);
  try {
    load_model(broken.string());
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(broken.string()) != std::string::npos);
    CHECK(msg.find("W") != std::string::npos);
  }

  nlohmann::json tag = model_to_json(r, cfg);
  tag["format"] = "something-else";
  CHECK_THROWS_AS(model_from_json(tag), FormatError);

  const auto garbage = temp_file("garbage.json");
  {
    std::ofstream out(garbage);
    out << "{ not json";
  }
  try {
    load_model(garbage.string());
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find(garbage.string()) != std::string::npos);
  }
}

TEST_CASE("state json and trace csv") {
  MTFitState st;
  st.Z = Matrix::Constant(3, 2, 0.25);
  st.U = Matrix::Constant(2, 1, -0.5);
  st.iteration = 7;
  const MTFitState back = state_from_json(state_to_json(st));
  CHECK(back.Z == st.Z);
  CHECK(back.U == st.U);
  CHECK(back.iteration == 7);

  std::ostringstream out;
  write_trace_csv({1.5, 0.25}, out);
  CHECK(out.str() == "iteration,lower_cost\n0,1.5\n1,0.25\n");
}

TEST_CASE("svg rendering is deterministic and draws error bars only when positive") {
  const svg::Plot plot{"RMSE", "S/T", "rmse"};
  svg::Series a{"MT-KSMM", {2, 3, 5}, {0.5, 0.4, 0.35}, {0.01, 0.0, 0.02}};
  svg::Series b{"KSMM", {2, 3, 5}, {0.9, 0.85, 0.7}, {}};
  const std::string one = svg::render(plot, {a, b});
  CHECK(one == svg::render(plot, {a, b}));
  CHECK(one.rfind("<svg", 0) == 0);
  CHECK(one.find("</svg>") != std::string::npos);
  CHECK(one.find("MT-KSMM") != std::string::npos);
  CHECK(count(one, "<polyline") == 2);
  CHECK(count(one, "<circle") == 6);

  // Two positive errors, three line elements each (bar plus two caps).
  svg::Series no_err = a;
  no_err.err.clear();
  const std::string plain = svg::render(plot, {no_err, b});
  CHECK(count(one, "<line") - count(plain, "<line") == 6);

  svg::Series markers = b;
  markers.line = false;
  CHECK(count(svg::render(plot, {markers}), "<polyline") == 0);

  svg::Series bad = a;
  bad.y.pop_back();
  CHECK_THROWS_AS(svg::render(plot, {bad}), std::invalid_argument);
  svg::Series bad_err = a;
  bad_err.err = {0.1};
  CHECK_THROWS_AS(svg::render(plot, {bad_err}), std::invalid_argument);

  const auto path = temp_file("plot.svg");
  svg::write(path.string(), plot, {a, b});
  CHECK(std::filesystem::file_size(path) == one.size());
  CHECK_THROWS_AS(svg::write((temp_file("no_such_dir") / "x" / "p.svg").string(), plot, {a}),
                  std::runtime_error);
}

TEST_CASE("svg handles degenerate inputs") {
  const svg::Plot plot{"t", "x", "y"};
  CHECK_NOTHROW(svg::render(plot, {}));
  CHECK_NOTHROW(svg::render(plot, {svg::Series{"one", {1.0}, {2.0}, {}}}));
  CHECK_NOTHROW(svg::render(plot, {svg::Series{"flat", {1.0, 2.0}, {3.0, 3.0}, {}}}));
  const std::string s = svg::render(plot, {svg::Series{"a<b&c", {1.0}, {2.0}, {}}});
  CHECK(s.find("a&lt;b&amp;c") != std::string::npos);
}
