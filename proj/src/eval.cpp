#include "mtksmm/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <stdexcept>
#include <unordered_map>

namespace mtksmm {

namespace {

// Histogram bin of every entry, per column.
std::vector<std::vector<int>> bin_columns(const Matrix& m, int bins) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(m.cols()),
                                    std::vector<int>(static_cast<std::size_t>(m.rows()), 0));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double lo = m.col(c).minCoeff();
    const double hi = m.col(c).maxCoeff();
    if (!(hi > lo)) continue;
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      int b = static_cast<int>(std::floor((m(r, c) - lo) / (hi - lo) * bins));
      out[c][r] = std::clamp(b, 0, bins - 1);
    }
  }
  return out;
}

std::vector<std::uint64_t> cell_keys(const std::vector<std::vector<int>>& binned, int bins,
                                     std::size_t rows) {
  std::vector<std::uint64_t> keys(rows, 0);
  for (const auto& col : binned) {
    for (std::size_t r = 0; r < rows; ++r) keys[r] = keys[r] * static_cast<std::uint64_t>(bins) + col[r];
  }
  return keys;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

double rmse(const Matrix& predictions, const Matrix& targets) {
  if (predictions.rows() != targets.rows() || predictions.cols() != targets.cols()) {
    throw std::domain_error("rmse: prediction and target shapes differ");
  }
  if (predictions.rows() < 1) throw std::domain_error("rmse: need at least one sample");
  return std::sqrt((predictions - targets).squaredNorm() / static_cast<double>(predictions.rows()));
}

double mutual_information(const Matrix& A, const Matrix& B, int bins_per_dim) {
  if (A.rows() != B.rows()) throw std::domain_error("mutual_information: row counts differ");
  if (A.rows() < 2) throw std::domain_error("mutual_information: need at least two samples");
  if (bins_per_dim < 1) throw std::domain_error("mutual_information: bins_per_dim must be >= 1");
  const double total_dims = static_cast<double>(A.cols() + B.cols());
  if (total_dims * std::log2(static_cast<double>(bins_per_dim)) >= 63.0) {
    throw std::domain_error("mutual_information: too many histogram cells");
  }
  const auto rows = static_cast<std::size_t>(A.rows());
  const auto key_a = cell_keys(bin_columns(A, bins_per_dim), bins_per_dim, rows);
  const auto key_b = cell_keys(bin_columns(B, bins_per_dim), bins_per_dim, rows);
  std::unordered_map<std::uint64_t, double> count_a;
  std::unordered_map<std::uint64_t, double> count_b;
  std::map<std::pair<std::uint64_t, std::uint64_t>, double> joint;
  for (std::size_t r = 0; r < rows; ++r) {
    count_a[key_a[r]] += 1.0;
    count_b[key_b[r]] += 1.0;
    joint[{key_a[r], key_b[r]}] += 1.0;
  }
  const double m = static_cast<double>(rows);
  std::vector<double> terms;
  terms.reserve(joint.size());
  for (const auto& [key, c] : joint) {
    const double expected = count_a[key.first] * count_b[key.second];
    terms.push_back(c / m * std::log(c * m / expected));
  }
  // Summing in value order makes the result independent of argument order.
  std::sort(terms.begin(), terms.end());
  double mi = 0.0;
  for (double t : terms) mi += t;
  return std::max(0.0, mi);
}

Reconstruction reconstruct_existing(const MTResult& trained, const MultiTaskDataset& test,
                                    const EStepParams& params) {
  const int tasks = trained.num_tasks();
  for (int t : test.task_of) {
    if (t < 0 || t >= tasks) {
      throw std::domain_error("reconstruct_existing: task " + std::to_string(t) +
                              " was not seen in training");
    }
  }
  const BasisConfig& basis = trained.model.lower_basis;
  const detail::LatentGrid grid(basis, params.grid_res);
  Reconstruction rec;
  rec.predictions.resize(test.X.rows(), test.X.cols());
  rec.Z.resize(test.X.rows(), basis.latent_dim);
  std::vector<std::vector<int>> members(static_cast<std::size_t>(tasks));
  for (std::size_t n = 0; n < test.task_of.size(); ++n) members[test.task_of[n]].push_back(static_cast<int>(n));
  for (int i = 0; i < tasks; ++i) {
    if (members[i].empty()) continue;
    const Matrix coeff = trained.task_coeff(i);
    const Matrix decoded = grid.phi() * coeff;
    for (int n : members[i]) {
      const Vector x = test.X.row(n).transpose();
      const Vector z0 = grid.points().row(detail::nearest_row(decoded, x)).transpose();
      const Vector z = detail::refine_latent(basis, coeff, x, z0, params.grad_iters);
      rec.Z.row(n) = z.transpose();
      rec.predictions.row(n) = (coeff.transpose() * eval_basis(basis, z)).transpose();
    }
  }
  return rec;
}

Reconstruction reconstruct_new(const MTResult& trained, const MultiTaskDataset& tasks,
                               const NewTaskParams& params) {
  const NewTaskFitter fitter(trained, params);
  const BasisConfig& basis = trained.model.lower_basis;
  Reconstruction rec;
  rec.predictions.resize(tasks.X.rows(), tasks.X.cols());
  rec.Z.resize(tasks.X.rows(), basis.latent_dim);
  const auto members = tasks.members();
  for (const auto& mem : members) {
    if (mem.empty()) continue;
    Matrix X(static_cast<Eigen::Index>(mem.size()), tasks.X.cols());
    for (std::size_t j = 0; j < mem.size(); ++j) X.row(static_cast<Eigen::Index>(j)) = tasks.X.row(mem[j]);
    const NewTaskFit fit = fitter.fit(X);
    const Matrix pred = eval_basis_rows(basis, fit.Z) * fitter.coeff_for(fit);
    for (std::size_t j = 0; j < mem.size(); ++j) {
      rec.Z.row(mem[j]) = fit.Z.row(static_cast<Eigen::Index>(j));
      rec.predictions.row(mem[j]) = pred.row(static_cast<Eigen::Index>(j));
    }
  }
  return rec;
}

LabeledMultiTaskDataset make_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  if (spec.kind == "saddle") return gen_saddle(spec.n_tasks, spec.samples_per_task, spec.sigma, seed);
  if (spec.kind == "convex" || spec.kind == "triangle" || spec.kind == "sine") {
    return gen_shape_family(shape_kind_from_string(spec.kind), spec.n_tasks,
                            spec.samples_per_task, spec.sigma, seed);
  }
  if (spec.kind == "regression_plain" || spec.kind == "regression_shift") {
    RegressionParams p = spec.regression;
    return gen_regression(
        spec.kind == "regression_plain" ? RegressionKind::plain : RegressionKind::domain_shift,
        spec.n_tasks, spec.samples_per_task, p, seed);
  }
  if (spec.kind == "csv") return load_csv(spec.csv_path, spec.csv_schema);
  throw ConfigError("dataset.kind: unknown kind '" + spec.kind + "'");
}

std::string method_name(TransferMode mode) {
  switch (mode) {
    case TransferMode::both: return "MT-KSMM";
    case TransferMode::model_only: return "KSMM2";
    case TransferMode::none: return "KSMM";
  }
  return "MT-KSMM";
}

MetricReport evaluate_trained(const std::string& dataset_name, const DatasetSplit& split,
                              const MTResult& trained, const MTConfig& config, int st,
                              std::uint64_t seed, const EvalOptions& options) {
  MetricReport rep;
  rep.dataset = dataset_name;
  rep.mode = trained.mode;
  rep.method = method_name(trained.mode);
  rep.st = st;
  rep.seed = seed;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rep.rmse_existing = nan;
  rep.mi_existing = nan;
  rep.rmse_new = nan;
  rep.mi_new = nan;
  if (split.existing_test.data.X.rows() > 0) {
    const Reconstruction rec =
        reconstruct_existing(trained, split.existing_test.data, config.lower_estep);
    rep.rmse_existing = rmse(rec.predictions, split.existing_test.data.X);
    if (split.existing_test.has_truth() && rec.Z.rows() >= 2) {
      rep.mi_existing = mutual_information(split.existing_test.true_z, rec.Z, options.bins);
    }
  }
  if (options.evaluate_new && split.new_tasks.data.X.rows() > 0) {
    NewTaskParams np = options.new_task;
    np.lower = config.lower_estep;
    np.higher = config.higher_estep;
    const Reconstruction rec = reconstruct_new(trained, split.new_tasks.data, np);
    rep.rmse_new = rmse(rec.predictions, split.new_tasks.data.X);
    if (split.new_tasks.has_truth() && rec.Z.rows() >= 2) {
      rep.mi_new = mutual_information(split.new_tasks.true_z, rec.Z, options.bins);
    }
  }
  return rep;
}

MetricReport evaluate_split(const std::string& dataset_name, const DatasetSplit& split,
                            const MTConfig& config, int st, std::uint64_t seed,
                            const EvalOptions& options, MTResult* trained_out) {
  const auto start = std::chrono::steady_clock::now();
  const MTResult trained = train(split.train.data, config, seed);
  MetricReport rep = evaluate_trained(dataset_name, split, trained, config, st, seed, options);
  const double elapsed =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  rep.runtime_s = options.record_runtime ? elapsed : 0.0;
  if (trained_out != nullptr) *trained_out = trained;
  return rep;
}

std::vector<MetricReport> compare_methods(const DatasetSpec& dataset, const MTConfig& config,
                                          const EvalOptions& options) {
  config.validate();
  if (options.st_list.empty() || options.seeds.empty() || options.modes.empty()) {
    throw ConfigError("evaluation: st_list, seeds and modes must be non-empty");
  }
  std::vector<MetricReport> out;
  for (int st : options.st_list) {
    for (std::uint64_t seed : options.seeds) {
      const LabeledMultiTaskDataset ds = make_dataset(dataset, seed);
      const DatasetSplit split = split_existing_new(ds, options.n_train_tasks, st, seed);
      for (TransferMode mode : options.modes) {
        MTConfig cfg = config;
        cfg.mode = mode;
        out.push_back(evaluate_split(dataset.name, split, cfg, st, seed, options));
      }
    }
  }
  return out;
}

std::vector<SummaryRow> summarize(const std::vector<MetricReport>& reports) {
  std::vector<SummaryRow> rows;
  std::vector<std::vector<const MetricReport*>> groups;
  for (const MetricReport& r : reports) {
    std::size_t g = 0;
    for (; g < rows.size(); ++g) {
      if (rows[g].dataset == r.dataset && rows[g].mode == r.mode && rows[g].st == r.st) break;
    }
    if (g == rows.size()) {
      SummaryRow row;
      row.dataset = r.dataset;
      row.method = r.method;
      row.mode = r.mode;
      row.st = r.st;
      rows.push_back(row);
      groups.emplace_back();
    }
    groups[g].push_back(&r);
  }
  for (std::size_t g = 0; g < rows.size(); ++g) {
    std::vector<double> re, me, rn, mn;
    for (const MetricReport* r : groups[g]) {
      re.push_back(r->rmse_existing);
      me.push_back(r->mi_existing);
      rn.push_back(r->rmse_new);
      mn.push_back(r->mi_new);
    }
    SummaryRow& row = rows[g];
    row.n_seeds = static_cast<int>(groups[g].size());
    row.rmse_existing_mean = mean_of(re);
    row.rmse_existing_std = std_of(re);
    row.mi_existing_mean = mean_of(me);
    row.mi_existing_std = std_of(me);
    row.rmse_new_mean = mean_of(rn);
    row.rmse_new_std = std_of(rn);
    row.mi_new_mean = mean_of(mn);
    row.mi_new_std = std_of(mn);
  }
  return rows;
}

void write_reports_csv(const std::vector<MetricReport>& reports, std::ostream& out) {
  out << "dataset,mode,st,seed,rmse_existing,mi_existing,rmse_new,mi_new,runtime_s\n";
  for (const MetricReport& r : reports) {
    out << r.dataset << ',' << to_string(r.mode) << ',' << r.st << ',' << r.seed << ','
        << fmt(r.rmse_existing) << ',' << fmt(r.mi_existing) << ',' << fmt(r.rmse_new) << ','
        << fmt(r.mi_new) << ',' << fmt(r.runtime_s) << '\n';
  }
}

void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out) {
  out << "dataset,mode,method,st,n_seeds,rmse_existing_mean,rmse_existing_std,mi_existing_mean,"
         "mi_existing_std,rmse_new_mean,rmse_new_std,mi_new_mean,mi_new_std\n";
  for (const SummaryRow& r : rows) {
    out << r.dataset << ',' << to_string(r.mode) << ',' << r.method << ',' << r.st << ','
        << r.n_seeds << ',' << fmt(r.rmse_existing_mean) << ',' << fmt(r.rmse_existing_std) << ','
        << fmt(r.mi_existing_mean) << ',' << fmt(r.mi_existing_std) << ','
        << fmt(r.rmse_new_mean) << ',' << fmt(r.rmse_new_std) << ',' << fmt(r.mi_new_mean) << ','
        << fmt(r.mi_new_std) << '\n';
  }
}

Vector predict_regression(const MTResult& trained, int task, const Vector& inputs,
                          bool inputs_are_latent) {
  const BasisConfig& basis = trained.model.lower_basis;
  if (basis.latent_dim != 1) throw std::domain_error("predict_regression: needs a 1-D sample latent");
  const Matrix coeff = trained.task_coeff(task);
  Vector out(inputs.size());
  if (inputs_are_latent) {
    Matrix z = inputs.cwiseMax(-1.0).cwiseMin(1.0);
    out = eval_basis_rows(basis, z) * coeff.col(0);
    return out;
  }
  if (coeff.cols() < 2) throw std::domain_error("predict_regression: needs (t, s) outputs");
  const detail::LatentGrid fine(basis, 401);
  const Matrix decoded = fine.phi() * coeff;
  for (Eigen::Index p = 0; p < inputs.size(); ++p) {
    // latent whose decoded input coordinate is closest to t
    Eigen::Index best = 0;
    (decoded.col(0).array() - inputs[p]).abs().minCoeff(&best);
    out[p] = decoded(best, 1);
  }
  return out;
}

Vector regression_inputs(double u, bool domain_shift, int points) {
  const double shift = domain_shift ? 0.5 * u : 0.0;
  return Vector::LinSpaced(points, -1.0 + shift, 1.0 + shift);
}

double regression_mse(const MTResult& trained, const LabeledMultiTaskDataset& train_tasks,
                      const RegressionParams& params, bool inputs_are_latent, bool domain_shift,
                      int points) {
  if (!train_tasks.true_u.size()) throw std::domain_error("regression_mse: task truth missing");
  if (points < 2) throw std::domain_error("regression_mse: need at least two points");
  double total = 0.0;
  int count = 0;
  for (int i = 0; i < train_tasks.data.num_tasks; ++i) {
    const double u = train_tasks.true_u(i, 0);
    const Vector t = regression_inputs(u, domain_shift, points);
    const Vector s_hat = predict_regression(trained, i, t, inputs_are_latent);
    for (Eigen::Index p = 0; p < t.size(); ++p) {
      const double err = s_hat[p] - regression_curve(params, t[p], u);
      total += err * err;
      ++count;
    }
  }
  return total / count;
}

RegressionProblem regression_problem(const LabeledMultiTaskDataset& ds, bool domain_shift) {
  RegressionProblem p;
  p.domain_shift = domain_shift;
  p.data = ds.data;
  if (!domain_shift) {
    p.data.X = ds.data.X.col(1);
    p.initial_Z = ds.data.X.col(0).cwiseMax(-1.0).cwiseMin(1.0);
  }
  return p;
}

MTResult train_regression(const RegressionProblem& problem, MTConfig config, std::uint64_t seed) {
  if (config.lower_basis.latent_dim != 1) {
    throw ConfigError("model.lower_basis.latent_dim: regression needs 1");
  }
  if (problem.domain_shift) return train(problem.data, config, seed);
  config.fix_sample_latents = true;
  return train(problem.data, config, seed, problem.initial_Z);
}

std::vector<RegressionReport> compare_regression(const DatasetSpec& dataset,
                                                 const MTConfig& config,
                                                 const EvalOptions& options) {
  if (dataset.kind != "regression_plain" && dataset.kind != "regression_shift") {
    throw ConfigError("dataset.kind: '" + dataset.kind + "' is not a regression toy");
  }
  const bool shift = dataset.kind == "regression_shift";
  std::vector<RegressionReport> out;
  for (int st : options.st_list) {
    for (std::uint64_t seed : options.seeds) {
      DatasetSpec spec = dataset;
      spec.samples_per_task = st;
      const LabeledMultiTaskDataset ds = make_dataset(spec, seed);
      const RegressionProblem problem = regression_problem(ds, shift);
      for (TransferMode mode : options.modes) {
        MTConfig cfg = config;
        cfg.mode = mode;
        const MTResult trained = train_regression(problem, cfg, seed);
        RegressionReport r;
        r.dataset = dataset.name;
        r.mode = mode;
        r.method = method_name(mode);
        r.st = st;
        r.seed = seed;
        r.mse = regression_mse(trained, ds, dataset.regression, !shift, shift);
        out.push_back(r);
      }
    }
  }
  return out;
}

void write_regression_csv(const std::vector<RegressionReport>& reports, std::ostream& out) {
  out << "dataset,mode,method,st,seed,mse\n";
  for (const RegressionReport& r : reports) {
    out << r.dataset << ',' << to_string(r.mode) << ',' << r.method << ',' << r.st << ','
        << r.seed << ',' << fmt(r.mse) << '\n';
  }
}

}  // namespace mtksmm
