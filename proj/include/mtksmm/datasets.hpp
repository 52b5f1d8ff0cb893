#pragma once

#include "mtksmm/mt_ksmm.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtksmm {

/// Multi-task data plus the generating latents, kept for evaluation only.
struct LabeledMultiTaskDataset {
  MultiTaskDataset data;
  /// N x D_L; empty when unknown.
  Matrix true_z;
  /// I x D_T; empty when unknown.
  Matrix true_u;
  /// Original task labels (CSV input) or "0".."I-1" for generated data.
  std::vector<std::string> task_labels;

  [[nodiscard]] bool has_truth() const { return true_z.size() > 0; }
};

/// Thrown for malformed input files; the message names the row and column.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown for infeasible or inconsistent settings.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// x = (z1, z2, z1^2 - z2^2 + u, 0_7) + N(0, sigma^2 I_10).
Vector saddle_point(const Eigen::Ref<const Vector>& z, double u);

LabeledMultiTaskDataset gen_saddle(int n_tasks, int samples_per_task, double sigma,
                                   std::uint64_t seed);

/// Stand-in manifold families, all with 2-D z, 1-D u and 10-D output:
///   convex   x3 = z1^2 + z2^2 + u
///   triangle z folded onto a planar triangle, rotated by u*pi/2 in (x1, x2)
///   sine     x3 = u sin(pi z1); every task passes through x3 = 0 at z1 in {-1,0,1}
enum class ShapeKind { convex, triangle, sine };

ShapeKind shape_kind_from_string(const std::string& name);
Vector shape_point(ShapeKind kind, const Eigen::Ref<const Vector>& z, double u);

LabeledMultiTaskDataset gen_shape_family(ShapeKind kind, int n_tasks, int samples_per_task,
                                         double sigma, std::uint64_t seed);

enum class RegressionKind { plain, domain_shift };

struct RegressionParams {
  double a = 0.5;
  double b = 1.0;
  double c = 0.5;
  double d = 0.5;
  /// Observation noise on s; zero keeps samples on the curves.
  double sigma = 0.0;
};

/// s = (a u) sin(t + b u) + (c u) t + d u.
double regression_curve(const RegressionParams& p, double t, double u);

/// x = (t, s) with t uniform on [-1, 1] (plain) or [-1 + u/2, 1 + u/2]
/// (domain_shift); true_z holds t.
LabeledMultiTaskDataset gen_regression(RegressionKind kind, int n_tasks, int samples_per_task,
                                       const RegressionParams& params, std::uint64_t seed);

struct CsvSchema {
  std::vector<std::string> value_columns;
  std::string task_column;
  std::vector<std::string> truth_z_columns;
  std::vector<std::string> truth_u_columns;
};

LabeledMultiTaskDataset load_csv(const std::string& path, const CsvSchema& schema);

/// Columns task, x_1..x_Dv, true_z_1.., true_u_1.. (truth columns only when known).
void export_csv(const LabeledMultiTaskDataset& ds, const std::string& path);

/// Subset with re-indexed tasks; `task_ids` gives the original task of each
/// new task, `samples[k]` the original sample indices assigned to new task k.
LabeledMultiTaskDataset subset(const LabeledMultiTaskDataset& ds, const std::vector<int>& task_ids,
                               const std::vector<std::vector<int>>& samples);

struct DatasetSplit {
  LabeledMultiTaskDataset train;
  /// Held-out samples of the training tasks; task indices match `train`.
  LabeledMultiTaskDataset existing_test;
  /// Tasks never seen in training, all their samples.
  LabeledMultiTaskDataset new_tasks;
  std::vector<int> train_task_ids;
  std::vector<int> new_task_ids;
};

/// Random partition of tasks into train/new (by seed), then within each train
/// task the first `samples_per_task_train` samples of a seeded shuffle train
/// and the rest become existing-task test data.
DatasetSplit split_existing_new(const LabeledMultiTaskDataset& ds, int n_train_tasks,
                                int samples_per_task_train, std::uint64_t seed);

}  // namespace mtksmm
