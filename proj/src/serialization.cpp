#include "mtksmm/serialization.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

namespace mtksmm {

using nlohmann::json;

namespace {

constexpr const char* kModelFormat = "mtksmm-model";
constexpr int kModelVersion = 1;

const json& require(const json& j, const std::string& key, const std::string& context) {
  if (!j.is_object() || !j.contains(key)) {
    throw FormatError(context + ": missing field '" + key + "'");
  }
  return j.at(key);
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw FormatError(std::string(key) + ": wrong type (" + j.at(key).dump() + ")");
  }
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const std::string& context) {
  if (!j.is_object()) throw FormatError(context + ": expected an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || item.key() == a;
    if (!known) throw FormatError(context + ": unknown field '" + item.key() + "'");
  }
}

template <typename Fn>
auto prefixed(const std::string& prefix, Fn&& fn) {
  try {
    return fn();
  } catch (const FormatError& e) {
    throw FormatError(prefix + "." + e.what());
  }
}

json estep_to_json(const EStepParams& p) {
  return {{"grid_res", p.grid_res}, {"grad_iters", p.grad_iters}};
}

EStepParams estep_from_json(const json& j, EStepParams base) {
  reject_unknown(j, {"grid_res", "grad_iters"}, "estep");
  read_if(j, "grid_res", base.grid_res);
  read_if(j, "grad_iters", base.grad_iters);
  return base;
}

}  // namespace

std::string format_double(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j, const std::string& field) {
  const auto rows = require(j, "rows", field).get<Eigen::Index>();
  const auto cols = require(j, "cols", field).get<Eigen::Index>();
  const json& data = require(j, "data", field);
  if (rows < 0 || cols < 0 || !data.is_array() ||
      data.size() != static_cast<std::size_t>(rows * cols)) {
    throw FormatError(field + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " values, found " + std::to_string(data.size()));
  }
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[k++].get<double>();
  }
  return m;
}

json basis_to_json(const BasisConfig& basis) {
  return {{"latent_dim", basis.latent_dim}, {"max_degree_per_dim", basis.max_degree_per_dim}};
}

BasisConfig basis_from_json(const json& j, const std::string& field) {
  BasisConfig b;
  b.latent_dim = require(j, "latent_dim", field).get<int>();
  b.max_degree_per_dim = require(j, "max_degree_per_dim", field).get<int>();
  return b;
}

json schedule_to_json(const Schedule& s) {
  return {{"lambda_L_start", s.lambda_L_start},     {"lambda_L_end", s.lambda_L_end},
          {"lambda_T_start", s.lambda_T_start},     {"lambda_T_end", s.lambda_T_end},
          {"lambda_rho_start", s.lambda_rho_start}, {"lambda_rho_end", s.lambda_rho_end},
          {"total_iters", s.total_iters},           {"beta", s.beta}};
}

Schedule schedule_from_json(const json& j, Schedule s) {
  reject_unknown(j,
                 {"lambda_L_start", "lambda_L_end", "lambda_T_start", "lambda_T_end",
                  "lambda_rho_start", "lambda_rho_end", "total_iters", "beta"},
                 "schedule");
  read_if(j, "lambda_L_start", s.lambda_L_start);
  read_if(j, "lambda_L_end", s.lambda_L_end);
  read_if(j, "lambda_T_start", s.lambda_T_start);
  read_if(j, "lambda_T_end", s.lambda_T_end);
  read_if(j, "lambda_rho_start", s.lambda_rho_start);
  read_if(j, "lambda_rho_end", s.lambda_rho_end);
  read_if(j, "total_iters", s.total_iters);
  read_if(j, "beta", s.beta);
  return s;
}

json mt_config_to_json(const MTConfig& c) {
  return {{"mode", to_string(c.mode)},
          {"lower_basis", basis_to_json(c.lower_basis)},
          {"higher_basis", basis_to_json(c.higher_basis)},
          {"lower_nodes", c.lower_nodes},
          {"higher_nodes", c.higher_nodes},
          {"schedule", schedule_to_json(c.schedule)},
          {"lower_estep", estep_to_json(c.lower_estep)},
          {"higher_estep", estep_to_json(c.higher_estep)},
          {"grid_fraction", c.grid_fraction},
          {"fix_sample_latents", c.fix_sample_latents}};
}

MTConfig mt_config_from_json(const json& j, MTConfig c) {
  reject_unknown(j,
                 {"mode", "lower_basis", "higher_basis", "lower_nodes", "higher_nodes", "schedule",
                  "lower_estep", "higher_estep", "grid_fraction", "fix_sample_latents"},
                 "model");
  if (j.contains("mode")) {
    std::string mode;
    read_if(j, "mode", mode);
    try {
      c.mode = transfer_mode_from_string(mode);
    } catch (const std::invalid_argument& e) {
      throw FormatError(std::string("mode: ") + e.what());
    }
  }
  auto basis = [&](const char* key, BasisConfig& b) {
    if (!j.contains(key)) return;
    prefixed(key, [&] {
      reject_unknown(j.at(key), {"latent_dim", "max_degree_per_dim"}, key);
      read_if(j.at(key), "latent_dim", b.latent_dim);
      read_if(j.at(key), "max_degree_per_dim", b.max_degree_per_dim);
      if (b.latent_dim < 1) throw FormatError("latent_dim: must be >= 1");
      if (b.max_degree_per_dim < 0) throw FormatError("max_degree_per_dim: must be >= 0");
    });
  };
  basis("lower_basis", c.lower_basis);
  basis("higher_basis", c.higher_basis);
  read_if(j, "lower_nodes", c.lower_nodes);
  read_if(j, "higher_nodes", c.higher_nodes);
  if (j.contains("schedule")) {
    c.schedule = prefixed("schedule", [&] {
      Schedule s = schedule_from_json(j.at("schedule"), c.schedule);
      try {
        s.validate();
      } catch (const std::invalid_argument& e) {
        throw FormatError(e.what());
      }
      return s;
    });
  }
  if (j.contains("lower_estep")) {
    c.lower_estep =
        prefixed("lower_estep", [&] { return estep_from_json(j.at("lower_estep"), c.lower_estep); });
  }
  if (j.contains("higher_estep")) {
    c.higher_estep = prefixed(
        "higher_estep", [&] { return estep_from_json(j.at("higher_estep"), c.higher_estep); });
  }
  read_if(j, "grid_fraction", c.grid_fraction);
  read_if(j, "fix_sample_latents", c.fix_sample_latents);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  return c;
}

json model_to_json(const MTResult& result, const MTConfig& config) {
  json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["mode"] = to_string(result.mode);
  int dim_visible = result.model.dim_visible();
  if (dim_visible == 0 && !result.state.V_stack.empty()) {
    dim_visible = static_cast<int>(result.state.V_stack[0].cols());
  }
  j["dim_visible"] = dim_visible;
  MTConfig stored = config;
  stored.mode = result.mode;
  j["config"] = mt_config_to_json(stored);
  j["lower_basis"] = basis_to_json(result.model.lower_basis);
  j["higher_basis"] = basis_to_json(result.model.higher_basis);
  j["U"] = matrix_to_json(result.state.U);
  if (result.mode == TransferMode::none) {
    json models = json::array();
    for (const Matrix& v : result.state.V_stack) models.push_back(matrix_to_json(v));
    j["task_models"] = std::move(models);
  } else {
    json slices = json::array();
    for (const Matrix& w : result.model.W) slices.push_back(matrix_to_json(w));
    j["W"] = std::move(slices);
  }
  return j;
}

StoredModel model_from_json(const json& j) {
  const std::string ctx = "model";
  if (require(j, "format", ctx).get<std::string>() != kModelFormat) {
    throw FormatError("model: unrecognized format tag");
  }
  if (require(j, "version", ctx).get<int>() != kModelVersion) {
    throw FormatError("model: unsupported version");
  }
  StoredModel out;
  out.config = mt_config_from_json(require(j, "config", ctx));
  MTResult& r = out.result;
  r.mode = out.config.mode;
  r.model.lower_basis = basis_from_json(require(j, "lower_basis", ctx), "lower_basis");
  r.model.higher_basis = basis_from_json(require(j, "higher_basis", ctx), "higher_basis");
  r.state.U = matrix_from_json(require(j, "U", ctx), "U");
  const int dim_visible = require(j, "dim_visible", ctx).get<int>();
  const int L = r.model.lower_basis.size();
  auto check_slice = [&](const Matrix& m, const std::string& field) {
    if (m.rows() != L || m.cols() != dim_visible) {
      throw FormatError(field + ": expected " + std::to_string(L) + "x" +
                        std::to_string(dim_visible) + ", found " + std::to_string(m.rows()) +
                        "x" + std::to_string(m.cols()));
    }
  };
  if (r.mode == TransferMode::none) {
    const json& models = require(j, "task_models", ctx);
    for (std::size_t i = 0; i < models.size(); ++i) {
      const std::string field = "task_models[" + std::to_string(i) + "]";
      r.state.V_stack.push_back(matrix_from_json(models[i], field));
      check_slice(r.state.V_stack.back(), field);
    }
    if (r.state.V_stack.size() != static_cast<std::size_t>(r.state.U.rows())) {
      throw FormatError("task_models: count does not match the rows of U");
    }
  } else {
    const json& slices = require(j, "W", ctx);
    if (slices.size() != static_cast<std::size_t>(r.model.higher_basis.size())) {
      throw FormatError("W: expected " + std::to_string(r.model.higher_basis.size()) +
                        " slices, found " + std::to_string(slices.size()));
    }
    for (std::size_t k = 0; k < slices.size(); ++k) {
      const std::string field = "W[" + std::to_string(k) + "]";
      r.model.W.push_back(matrix_from_json(slices[k], field));
      check_slice(r.model.W.back(), field);
    }
  }
  if (r.state.U.cols() != r.model.higher_basis.latent_dim) {
    throw FormatError("U: column count does not match the higher basis latent_dim");
  }
  return out;
}

void save_model(const std::string& path, const MTResult& result, const MTConfig& config) {
  write_json_file(path, model_to_json(result, config));
}

StoredModel load_model(const std::string& path) {
  try {
    return model_from_json(read_json_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

json state_to_json(const MTFitState& state) {
  return {{"iteration", state.iteration},
          {"Z", matrix_to_json(state.Z)},
          {"U", matrix_to_json(state.U)}};
}

MTFitState state_from_json(const json& j) {
  MTFitState s;
  s.iteration = require(j, "iteration", "state").get<int>();
  s.Z = matrix_from_json(require(j, "Z", "state"), "Z");
  s.U = matrix_from_json(require(j, "U", "state"), "U");
  return s;
}

void write_trace_csv(const std::vector<double>& trace, std::ostream& out) {
  out << "iteration,lower_cost\n";
  for (std::size_t t = 0; t < trace.size(); ++t) {
    out << t << ',' << format_double(trace[t]) << '\n';
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
  if (!out) throw FormatError("write failed for '" + path + "'");
}

}  // namespace mtksmm
