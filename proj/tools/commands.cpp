#include "commands.hpp"

#include "mtksmm/serialization.hpp"
#include "mtksmm/svg.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace mtksmm::cli {

namespace fs = std::filesystem;

namespace {

bool is_regression(const DatasetSpec& d) {
  return d.kind == "regression_plain" || d.kind == "regression_shift";
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out_dir) / name).string();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  return out;
}

void log(const std::string& msg) { std::cerr << "[mtksmm] " << msg << '\n'; }

std::string csv_double(double v) { return format_double(v); }

/// Regular lattice with `res` points per axis, or the explicit list.
Matrix latent_points(const std::vector<std::vector<double>>& list, int grid, int dim,
                     const std::string& what) {
  std::vector<std::vector<double>> pts = list;
  if (grid > 0) {
    const Matrix g = lattice_grid(dim, grid);
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      std::vector<double>& p = pts.emplace_back();
      for (int k = 0; k < dim; ++k) p.push_back(g(r, k));
    }
  }
  Matrix out(static_cast<Eigen::Index>(pts.size()), dim);
  for (std::size_t r = 0; r < pts.size(); ++r) {
    if (static_cast<int>(pts[r].size()) != dim) {
      throw ConfigError(what + ": point " + std::to_string(r) + " has " +
                        std::to_string(pts[r].size()) + " coordinates, expected " +
                        std::to_string(dim));
    }
    for (int k = 0; k < dim; ++k) {
      const double v = pts[r][static_cast<std::size_t>(k)];
      if (!(v >= -1.0 && v <= 1.0)) {
        throw ConfigError(what + ": point " + std::to_string(r) + " lies outside [-1, 1]");
      }
      out(static_cast<Eigen::Index>(r), k) = v;
    }
  }
  return out;
}

int stored_dim_visible(const StoredModel& m) {
  if (m.result.model.dim_visible() > 0) return m.result.model.dim_visible();
  return m.result.state.V_stack.empty() ? 0 : static_cast<int>(m.result.state.V_stack[0].cols());
}

void check_compatible(const StoredModel& stored, const RunConfig& cfg, int data_dim,
                      int data_tasks, const std::string& model_path) {
  std::ostringstream why;
  const int dv = stored_dim_visible(stored);
  if (dv != data_dim) why << " D_V: model " << dv << ", data " << data_dim << ';';
  const BasisConfig& ml = stored.result.model.lower_basis;
  const BasisConfig& mh = stored.result.model.higher_basis;
  if (!(ml == cfg.model.lower_basis)) {
    why << " lower basis: model (" << ml.latent_dim << ", deg " << ml.max_degree_per_dim
        << "), config (" << cfg.model.lower_basis.latent_dim << ", deg "
        << cfg.model.lower_basis.max_degree_per_dim << ");";
  }
  if (!(mh == cfg.model.higher_basis)) {
    why << " higher basis: model (" << mh.latent_dim << ", deg " << mh.max_degree_per_dim
        << "), config (" << cfg.model.higher_basis.latent_dim << ", deg "
        << cfg.model.higher_basis.max_degree_per_dim << ");";
  }
  if (stored.result.state.U.rows() != data_tasks) {
    why << " tasks: model " << stored.result.state.U.rows() << ", data " << data_tasks << ';';
  }
  if (!why.str().empty()) {
    throw ConfigError("model '" + model_path + "' is incompatible with the config:" + why.str());
  }
}

void write_regression_svg(const std::string& path, const MTResult& trained,
                          const LabeledMultiTaskDataset& ds, const RegressionParams& params,
                          bool shift) {
  std::vector<int> order(static_cast<std::size_t>(ds.data.num_tasks));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return ds.true_u(a, 0) < ds.true_u(b, 0); });
  const int shown = std::min<int>(5, static_cast<int>(order.size()));
  std::vector<svg::Series> series;
  for (int k = 0; k < shown; ++k) {
    const int pick = shown == 1 ? 0 : k * (static_cast<int>(order.size()) - 1) / (shown - 1);
    const int task = order[static_cast<std::size_t>(pick)];
    const double u = ds.true_u(task, 0);
    const Vector t = regression_inputs(u, shift, 101);
    const Vector s_hat = predict_regression(trained, task, t, !shift);
    char label[48];
    std::snprintf(label, sizeof label, "u=%.2f", u);
    svg::Series truth{std::string(label) + " true", {}, {}, {}, true};
    svg::Series est{std::string(label) + " fit", {}, {}, {}, false};
    for (Eigen::Index p = 0; p < t.size(); ++p) {
      truth.x.push_back(t[p]);
      truth.y.push_back(regression_curve(params, t[p], u));
      est.x.push_back(t[p]);
      est.y.push_back(s_hat[p]);
    }
    series.push_back(std::move(truth));
    series.push_back(std::move(est));
  }
  svg::write(path, svg::Plot{"Estimated task functions", "t", "s"}, series);
}

void write_train_outputs(const RunConfig& cfg, const MTResult& trained, const MTConfig& model) {
  save_model(out_path(cfg, "model.json"), trained, model);
  write_json_file(out_path(cfg, "state.json"), state_to_json(trained.state));
  auto trace = open_out(out_path(cfg, "trace.csv"));
  write_trace_csv(trained.trace, trace);
}

}  // namespace

std::vector<std::vector<double>> parse_point_list(const std::string& text) {
  std::vector<std::vector<double>> out;
  if (text.find_first_not_of(" \t") == std::string::npos) return out;
  std::stringstream points(text);
  std::string point;
  while (std::getline(points, point, ';')) {
    std::vector<double> coords;
    std::stringstream cs(point);
    std::string c;
    while (std::getline(cs, c, ',')) {
      try {
        std::size_t used = 0;
        coords.push_back(std::stod(c, &used));
        if (c.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(c);
      } catch (const std::exception&) {
        throw ConfigError("cannot parse coordinate '" + c + "' in '" + text + "'");
      }
    }
    out.push_back(std::move(coords));
  }
  return out;
}

RunConfig prepare(const CommandArgs& args) {
  RunConfig cfg = args.config_path.empty() ? RunConfig{} : load_run_config(args.config_path);
  if (args.seed) {
    cfg.seed = *args.seed;
    cfg.evaluation.seeds = {*args.seed};
  }
  if (args.workers) {
    if (*args.workers < 0) throw ConfigError("--workers: must be >= 0");
    cfg.workers = *args.workers;
  }
  if (!args.out_dir.empty()) cfg.out_dir = args.out_dir;
  if (args.z_grid) cfg.generate.z_grid = *args.z_grid;
  if (args.u_grid) cfg.generate.u_grid = *args.u_grid;
  if (!args.z_text.empty()) cfg.generate.z_list = parse_point_list(args.z_text);
  if (!args.u_text.empty()) cfg.generate.u_list = parse_point_list(args.u_text);
  set_workers(cfg.workers);
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec || !fs::is_directory(cfg.out_dir)) {
    throw ConfigError("cannot create output directory '" + cfg.out_dir + "'");
  }
  write_json_file(out_path(cfg, "effective_config.json"), run_config_to_json(cfg));
  return cfg;
}

void cmd_train(const CommandArgs& args) {
  const RunConfig cfg = prepare(args);
  const DatasetSpec& spec = cfg.datasets.front();
  const LabeledMultiTaskDataset ds = make_dataset(spec, cfg.seed);
  log("training " + to_string(cfg.model.mode) + " on " + spec.name);
  if (is_regression(spec)) {
    const bool shift = spec.kind == "regression_shift";
    MTConfig model = cfg.model;
    model.fix_sample_latents = model.fix_sample_latents || !shift;
    const MTResult trained = train_regression(regression_problem(ds, shift), model, cfg.seed);
    write_train_outputs(cfg, trained, model);
    RegressionReport rep{spec.name, method_name(trained.mode), trained.mode, spec.samples_per_task,
                         cfg.seed, regression_mse(trained, ds, spec.regression, !shift, shift)};
    auto out = open_out(out_path(cfg, "regression_report.csv"));
    write_regression_csv({rep}, out);
    write_regression_svg(out_path(cfg, "regression_curves.svg"), trained, ds, spec.regression,
                         shift);
    std::cout << "mse=" << format_double(rep.mse) << '\n';
    return;
  }
  const int st = cfg.evaluation.st_list.front();
  const DatasetSplit split = split_existing_new(ds, cfg.evaluation.n_train_tasks, st, cfg.seed);
  EvalOptions opts = cfg.evaluation;
  opts.evaluate_new = false;
  MTResult trained;
  const MetricReport rep = evaluate_split(spec.name, split, cfg.model, st, cfg.seed, opts, &trained);
  write_train_outputs(cfg, trained, cfg.model);
  auto out = open_out(out_path(cfg, "report.csv"));
  write_reports_csv({rep}, out);
  std::cout << "rmse_existing=" << format_double(rep.rmse_existing) << '\n';
}

void cmd_evaluate(const CommandArgs& args) {
  const RunConfig cfg = prepare(args);
  if (!args.model_path.empty()) {
    if (!fs::exists(args.model_path)) {
      throw ConfigError("model file '" + args.model_path + "' does not exist");
    }
    const StoredModel stored = load_model(args.model_path);
    const DatasetSpec& spec = cfg.datasets.front();
    const LabeledMultiTaskDataset ds = make_dataset(spec, cfg.seed);
    if (is_regression(spec)) {
      const bool shift = spec.kind == "regression_shift";
      check_compatible(stored, cfg, shift ? ds.data.dim_visible() : 1, ds.data.num_tasks,
                       args.model_path);
      RegressionReport rep{spec.name, method_name(stored.result.mode), stored.result.mode,
                           spec.samples_per_task, cfg.seed,
                           regression_mse(stored.result, ds, spec.regression, !shift, shift)};
      auto out = open_out(out_path(cfg, "regression_report.csv"));
      write_regression_csv({rep}, out);
      std::cout << "mse=" << format_double(rep.mse) << '\n';
      return;
    }
    const int st = cfg.evaluation.st_list.front();
    const DatasetSplit split = split_existing_new(ds, cfg.evaluation.n_train_tasks, st, cfg.seed);
    check_compatible(stored, cfg, split.train.data.dim_visible(), split.train.data.num_tasks,
                     args.model_path);
    const MetricReport rep = evaluate_trained(spec.name, split, stored.result, stored.config, st,
                                              cfg.seed, cfg.evaluation);
    auto out = open_out(out_path(cfg, "reports.csv"));
    write_reports_csv({rep}, out);
    auto sum = open_out(out_path(cfg, "summary.csv"));
    write_summary_csv(summarize({rep}), sum);
    std::cout << "rmse_existing=" << format_double(rep.rmse_existing) << '\n';
    return;
  }
  std::vector<MetricReport> reports;
  std::vector<RegressionReport> regression;
  for (const DatasetSpec& spec : cfg.datasets) {
    log("comparing methods on " + spec.name);
    if (is_regression(spec)) {
      auto r = compare_regression(spec, cfg.model, cfg.evaluation);
      regression.insert(regression.end(), r.begin(), r.end());
    } else {
      auto r = compare_methods(spec, cfg.model, cfg.evaluation);
      reports.insert(reports.end(), r.begin(), r.end());
    }
  }
  if (!reports.empty()) {
    auto out = open_out(out_path(cfg, "reports.csv"));
    write_reports_csv(reports, out);
    auto sum = open_out(out_path(cfg, "summary.csv"));
    write_summary_csv(summarize(reports), sum);
  }
  if (!regression.empty()) {
    auto out = open_out(out_path(cfg, "regression.csv"));
    write_regression_csv(regression, out);
  }
}

void cmd_generate(const CommandArgs& args) {
  if (args.model_path.empty()) throw ConfigError("generate: --model is required");
  if (!fs::exists(args.model_path)) {
    throw ConfigError("model file '" + args.model_path + "' does not exist");
  }
  const RunConfig cfg = prepare(args);
  const StoredModel stored = load_model(args.model_path);
  const MTResult& m = stored.result;
  const int dl = m.model.lower_basis.latent_dim;
  const int dt = m.model.higher_basis.latent_dim;
  const int dv = stored_dim_visible(stored);
  const GenerateSpec& g = cfg.generate;
  const Matrix Z = latent_points(g.z_list, g.z_grid, dl, "generate.z");
  const bool per_task = m.mode == TransferMode::none;
  Matrix U;
  std::vector<Matrix> coeffs;
  if (per_task) {
    const int task = args.task.value_or(0);
    if (task < 0 || task >= static_cast<int>(m.state.V_stack.size())) {
      throw ConfigError("--task: " + std::to_string(task) + " is not a trained task");
    }
    U = Matrix::Constant(1, 1, task);
    coeffs.push_back(m.state.V_stack[static_cast<std::size_t>(task)]);
  } else {
    U = latent_points(g.u_list, g.u_grid, dt, "generate.u");
    if (g.u_list.empty() && g.u_grid == 0) U = Matrix::Zero(1, dt);
    for (Eigen::Index r = 0; r < U.rows(); ++r) {
      coeffs.push_back(m.model.task_coeff(U.row(r).transpose()));
    }
  }
  if (g.plot_x < 0 || g.plot_x >= dv || g.plot_y < 0 || g.plot_y >= dv) {
    throw ConfigError("generate.plot_x/plot_y: must lie in [0, " + std::to_string(dv - 1) + "]");
  }
  auto out = open_out(out_path(cfg, "generated.csv"));
  for (int k = 0; k < dl; ++k) out << "z_" << k + 1 << ',';
  if (per_task) {
    out << "task,";
  } else {
    for (int k = 0; k < dt; ++k) out << "u_" << k + 1 << ',';
  }
  for (int k = 0; k < dv; ++k) out << "x_" << k + 1 << (k + 1 < dv ? "," : "\n");
  std::vector<svg::Series> series;
  const Matrix phi = Z.rows() > 0 ? eval_basis_rows(m.model.lower_basis, Z) : Matrix(0, 0);
  for (Eigen::Index r = 0; r < U.rows(); ++r) {
    std::ostringstream label;
    if (per_task) {
      label << "task " << static_cast<int>(U(r, 0));
    } else {
      label << "u=(";
      for (int k = 0; k < dt; ++k) label << (k ? "," : "") << csv_double(U(r, k));
      label << ')';
    }
    svg::Series s{label.str(), {}, {}, {}, false};
    if (Z.rows() > 0) {
      const Matrix X = phi * coeffs[static_cast<std::size_t>(r)];
      for (Eigen::Index n = 0; n < Z.rows(); ++n) {
        for (int k = 0; k < dl; ++k) out << csv_double(Z(n, k)) << ',';
        if (per_task) {
          out << static_cast<int>(U(r, 0)) << ',';
        } else {
          for (int k = 0; k < dt; ++k) out << csv_double(U(r, k)) << ',';
        }
        for (int k = 0; k < dv; ++k) out << csv_double(X(n, k)) << (k + 1 < dv ? "," : "\n");
        s.x.push_back(X(n, g.plot_x));
        s.y.push_back(X(n, g.plot_y));
      }
    }
    series.push_back(std::move(s));
  }
  if (args.svg) {
    svg::write(out_path(cfg, "generated.svg"),
               svg::Plot{"Generated samples", "x_" + std::to_string(g.plot_x + 1),
                         "x_" + std::to_string(g.plot_y + 1)},
               series);
  }
}

void cmd_sweep(const CommandArgs& args) {
  const RunConfig cfg = prepare(args);
  const DatasetSpec& spec = cfg.datasets.front();
  if (is_regression(spec)) throw ConfigError("sweep: regression datasets are not supported");
  log("sweeping S/T on " + spec.name);
  const std::vector<MetricReport> reports = compare_methods(spec, cfg.model, cfg.evaluation);
  {
    auto out = open_out(out_path(cfg, "sweep.csv"));
    write_reports_csv(reports, out);
  }
  const std::vector<SummaryRow> rows = summarize(reports);
  {
    auto out = open_out(out_path(cfg, "sweep_summary.csv"));
    write_summary_csv(rows, out);
  }
  struct Metric {
    const char* file;
    const char* label;
    double SummaryRow::*mean;
    double SummaryRow::*sd;
  };
  const Metric metrics[] = {
      {"sweep_rmse_existing.svg", "RMSE (existing tasks)", &SummaryRow::rmse_existing_mean,
       &SummaryRow::rmse_existing_std},
      {"sweep_mi_existing.svg", "MI (existing tasks)", &SummaryRow::mi_existing_mean,
       &SummaryRow::mi_existing_std},
      {"sweep_rmse_new.svg", "RMSE (new tasks)", &SummaryRow::rmse_new_mean,
       &SummaryRow::rmse_new_std},
      {"sweep_mi_new.svg", "MI (new tasks)", &SummaryRow::mi_new_mean, &SummaryRow::mi_new_std},
  };
  for (const Metric& metric : metrics) {
    std::vector<svg::Series> series;
    for (TransferMode mode : cfg.evaluation.modes) {
      svg::Series s{method_name(mode), {}, {}, {}, true};
      for (const SummaryRow& r : rows) {
        if (r.mode != mode) continue;
        s.x.push_back(r.st);
        s.y.push_back(r.*metric.mean);
        s.err.push_back(r.*metric.sd);
      }
      series.push_back(std::move(s));
    }
    svg::write(out_path(cfg, metric.file), svg::Plot{spec.name, "samples per task", metric.label},
               series);
  }
}

void cmd_datagen(const CommandArgs& args) {
  const RunConfig cfg = prepare(args);
  const LabeledMultiTaskDataset ds = make_dataset(cfg.datasets.front(), cfg.seed);
  export_csv(ds, out_path(cfg, "data.csv"));
}

}  // namespace mtksmm::cli
