#pragma once

#include "mtksmm/mt_ksmm.hpp"

#include <json.hpp>

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtksmm {

/// Thrown when a model or state document is missing, unreadable or
/// inconsistent; the message names the file or the offending field.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// {"rows": r, "cols": c, "data": [row-major values]}. Doubles are written
/// with round-trip precision, so save/load is bit-exact.
nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j, const std::string& field);

nlohmann::json basis_to_json(const BasisConfig& basis);
BasisConfig basis_from_json(const nlohmann::json& j, const std::string& field);

nlohmann::json schedule_to_json(const Schedule& schedule);
/// Missing keys keep the values already in `base`.
Schedule schedule_from_json(const nlohmann::json& j, Schedule base = {});

nlohmann::json mt_config_to_json(const MTConfig& config);
/// Missing keys keep the values already in `base`; the result is validated.
MTConfig mt_config_from_json(const nlohmann::json& j, MTConfig base = {});

/// A trained model together with the configuration that produced it.
struct StoredModel {
  MTConfig config;
  MTResult result;
};

/// Model document: D_V, mode, configuration (bases, nodes, schedule, E-step
/// parameters), final task latents U, and either the general-model slices W
/// (modes both/model_only) or the per-task coefficient matrices (mode none).
nlohmann::json model_to_json(const MTResult& result, const MTConfig& config);
StoredModel model_from_json(const nlohmann::json& j);

void save_model(const std::string& path, const MTResult& result, const MTConfig& config);
StoredModel load_model(const std::string& path);

/// Fit-state document: Z, U and the iteration count.
nlohmann::json state_to_json(const MTFitState& state);
MTFitState state_from_json(const nlohmann::json& j);

/// One row per iteration: iteration, lower_cost.
void write_trace_csv(const std::vector<double>& trace, std::ostream& out);

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);

}  // namespace mtksmm
