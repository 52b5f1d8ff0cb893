#pragma once

#include "mtksmm/datasets.hpp"
#include "mtksmm/mt_ksmm.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace mtksmm {

/// sqrt((1/M) sum_m |pred_m - target_m|^2), per-sample Euclidean norm.
double rmse(const Matrix& predictions, const Matrix& targets);

/// Plug-in mutual information (nats) of the joint equal-width histogram,
/// `bins_per_dim` bins spanning each column's observed range. A constant
/// column falls into a single bin.
double mutual_information(const Matrix& A, const Matrix& B, int bins_per_dim = 10);

struct Reconstruction {
  Matrix predictions;
  Matrix Z;
};

/// Reconstructs held-out samples of trained tasks with the task latents
/// estimated during training: grid search then gradient refinement in z.
Reconstruction reconstruct_existing(const MTResult& trained, const MultiTaskDataset& test,
                                    const EStepParams& params);

/// Fits each unseen task with the frozen model and reconstructs its samples.
Reconstruction reconstruct_new(const MTResult& trained, const MultiTaskDataset& tasks,
                               const NewTaskParams& params);

/// Where the data for an experiment comes from.
struct DatasetSpec {
  std::string name = "saddle";
  /// saddle, convex, triangle, sine, regression_plain, regression_shift or csv
  std::string kind = "saddle";
  int n_tasks = 300;
  int samples_per_task = 100;
  double sigma = 0.1;
  RegressionParams regression;
  std::string csv_path;
  CsvSchema csv_schema;
};

LabeledMultiTaskDataset make_dataset(const DatasetSpec& spec, std::uint64_t seed);

struct EvalOptions {
  int n_train_tasks = 200;
  std::vector<int> st_list{3};
  std::vector<std::uint64_t> seeds{1};
  std::vector<TransferMode> modes{TransferMode::both, TransferMode::model_only,
                                  TransferMode::none};
  int bins = 10;
  NewTaskParams new_task;
  bool evaluate_new = true;
  /// Write measured wall time into runtime_s; off keeps metric files
  /// byte-reproducible.
  bool record_runtime = false;
};

struct MetricReport {
  std::string dataset;
  std::string method;
  TransferMode mode = TransferMode::both;
  int st = 0;
  std::uint64_t seed = 0;
  double rmse_existing = 0.0;
  double mi_existing = 0.0;
  double rmse_new = 0.0;
  double mi_new = 0.0;
  double runtime_s = 0.0;
};

/// Display name of a transfer mode: MT-KSMM, KSMM2 or KSMM.
std::string method_name(TransferMode mode);

/// Evaluates an already trained model on a split's existing and new tasks;
/// metrics that cannot be computed are NaN.
MetricReport evaluate_trained(const std::string& dataset_name, const DatasetSplit& split,
                              const MTResult& trained, const MTConfig& config, int st,
                              std::uint64_t seed, const EvalOptions& options);

/// Trains one mode on a split and evaluates it on existing and new tasks.
MetricReport evaluate_split(const std::string& dataset_name, const DatasetSplit& split,
                            const MTConfig& config, int st, std::uint64_t seed,
                            const EvalOptions& options, MTResult* trained_out = nullptr);

/// Every (S/T, seed, mode) cell; all modes of a seed share the same split.
std::vector<MetricReport> compare_methods(const DatasetSpec& dataset, const MTConfig& config,
                                          const EvalOptions& options);

struct SummaryRow {
  std::string dataset;
  std::string method;
  TransferMode mode = TransferMode::both;
  int st = 0;
  int n_seeds = 0;
  double rmse_existing_mean = 0.0, rmse_existing_std = 0.0;
  double mi_existing_mean = 0.0, mi_existing_std = 0.0;
  double rmse_new_mean = 0.0, rmse_new_std = 0.0;
  double mi_new_mean = 0.0, mi_new_std = 0.0;
};

/// Mean and sample standard deviation over seeds per (dataset, mode, S/T),
/// in first-appearance order.
std::vector<SummaryRow> summarize(const std::vector<MetricReport>& reports);

void write_reports_csv(const std::vector<MetricReport>& reports, std::ostream& out);
void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& out);

/// Regression toys: mean squared error of predicted s against the true curve
/// on `points` evenly spaced inputs per trained task. With `inputs_are_latent`
/// the model maps z = t directly to s; otherwise x = (t, s) and the latent
/// is found by matching the t coordinate.
double regression_mse(const MTResult& trained, const LabeledMultiTaskDataset& train_tasks,
                      const RegressionParams& params, bool inputs_are_latent,
                      bool domain_shift, int points = 101);

/// Predicted s at the given inputs for trained task `task` (1-D sample
/// latent). Inputs are latents directly, or t values matched against the
/// decoded t coordinate on a 401-point latent lattice.
Vector predict_regression(const MTResult& trained, int task, const Vector& inputs,
                          bool inputs_are_latent);

/// `points` evenly spaced t over the task's input interval.
Vector regression_inputs(double u, bool domain_shift, int points);

/// Training data for a regression toy. Plain: outputs s with z fixed to the
/// observed t. Domain shift: outputs (t, s) with z estimated.
struct RegressionProblem {
  MultiTaskDataset data;
  std::optional<Matrix> initial_Z;
  bool domain_shift = false;
};

RegressionProblem regression_problem(const LabeledMultiTaskDataset& ds, bool domain_shift);
MTResult train_regression(const RegressionProblem& problem, MTConfig config, std::uint64_t seed);

struct RegressionReport {
  std::string dataset;
  std::string method;
  TransferMode mode = TransferMode::both;
  int st = 0;
  std::uint64_t seed = 0;
  double mse = 0.0;
};

/// Every (S/T, seed, mode) cell on all generated tasks; S/T overrides the
/// dataset's samples_per_task.
std::vector<RegressionReport> compare_regression(const DatasetSpec& dataset,
                                                 const MTConfig& config,
                                                 const EvalOptions& options);
void write_regression_csv(const std::vector<RegressionReport>& reports, std::ostream& out);

}  // namespace mtksmm
