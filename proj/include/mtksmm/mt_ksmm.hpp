#pragma once

#include "mtksmm/ksmm.hpp"
#include "mtksmm/numerics.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace mtksmm {

/// Samples pooled over tasks. Task indices are 0-based here; file formats
/// carry their own labels.
struct MultiTaskDataset {
  Matrix X;
  std::vector<int> task_of;
  int num_tasks = 0;

  [[nodiscard]] int size() const { return static_cast<int>(X.rows()); }
  [[nodiscard]] int dim_visible() const { return static_cast<int>(X.cols()); }
  /// Sample indices of each task, in sample order.
  [[nodiscard]] std::vector<std::vector<int>> members() const;
  /// Throws std::invalid_argument on out-of-range indices or empty tasks.
  void validate() const;
};

/// Which information transfer the multi-task learner performs.
///   none       - independent single-task KSMMs
///   model_only - higher KSMM without instance transfer (KSMM^2)
///   both       - instance and model transfer (MT-KSMM)
enum class TransferMode { none, model_only, both };

std::string to_string(TransferMode mode);
TransferMode transfer_mode_from_string(const std::string& name);

/// G(z,u) = sum_k sum_l W[k](l,:) psi_k(u) phi_l(z); W holds K slices of L x D_V.
struct GeneralModel {
  BasisConfig lower_basis;
  BasisConfig higher_basis;
  std::vector<Matrix> W;

  [[nodiscard]] int dim_visible() const { return W.empty() ? 0 : static_cast<int>(W[0].cols()); }
  /// Coefficients of the transferred task model G(., u), shape L x D_V.
  [[nodiscard]] Matrix task_coeff(const Eigen::Ref<const Vector>& u) const;
  [[nodiscard]] Matrix task_coeff_from_psi(const Vector& psi) const;
};

Vector general_decode(const GeneralModel& model, const Eigen::Ref<const Vector>& z,
                      const Eigen::Ref<const Vector>& u);

struct MTFitState {
  Matrix Z;
  Matrix U;
  Matrix rho;
  std::vector<Matrix> V_stack;
  int iteration = 0;
};

struct MTConfig {
  BasisConfig lower_basis{2, 4};
  BasisConfig higher_basis{1, 4};
  int lower_nodes = 16;
  int higher_nodes = 16;
  Schedule schedule;
  TransferMode mode = TransferMode::both;
  EStepParams lower_estep;
  EStepParams higher_estep;
  double grid_fraction = 0.6;
  /// Keep Z at its initial value (Step 5 skipped), e.g. when the sample
  /// latent is an observed regression input.
  bool fix_sample_latents = false;

  void validate() const;
};

struct MTResult {
  TransferMode mode = TransferMode::both;
  /// W is empty in mode none; the per-task models live in state.V_stack.
  GeneralModel model;
  MTFitState state;
  std::vector<double> trace;

  /// Number of trained tasks (rows of the task latents).
  [[nodiscard]] int num_tasks() const { return static_cast<int>(state.U.rows()); }
  /// Coefficients used to explain task i: G(., u_i), or V_i in mode none.
  [[nodiscard]] Matrix task_coeff(int task) const;
};

/// rho[i,n] = exp(-|u_i - u_{i_n}|^2 / (2 lambda_rho^2)); own-task
/// indicator in modes none and model_only.
Matrix instance_transfer(const Matrix& U, const std::vector<int>& task_of, double lambda_rho,
                         TransferMode mode = TransferMode::both);

/// Per task i, the kernel-smoothing M-step with every kernel h(z|z_n)
/// multiplied by rho[i,n].
std::vector<Matrix> lower_m_step(const MultiTaskDataset& data, const Matrix& Z, const Matrix& rho,
                                 const BasisConfig& lower_basis, const QuadratureRule& rule,
                                 double lambda_L);

/// W = V_stack x_1 (C^-1 D): the kernel-smoothing M-step over task latents.
GeneralModel higher_m_step(const std::vector<Matrix>& V_stack, const Matrix& U,
                           const BasisConfig& lower_basis, const BasisConfig& higher_basis,
                           const QuadratureRule& rule_T, double lambda_T);

/// Per task, argmin_u sum_{n in task} |G(z_n, u) - x_n|^2.
Matrix higher_e_step(const MultiTaskDataset& data, const Matrix& Z, const GeneralModel& model,
                     const Matrix& current_U, EStage stage, const EStepParams& params);

/// Per sample, argmin_z |G(z, u_{i_n}) - x_n|^2.
Matrix lower_e_step(const MultiTaskDataset& data, const GeneralModel& model, const Matrix& U,
                    const Matrix& current_Z, EStage stage, const EStepParams& params);

/// Same as lower_e_step with explicit per-task coefficient matrices.
Matrix lower_e_step_coeffs(const MultiTaskDataset& data, const BasisConfig& lower_basis,
                           const std::vector<Matrix>& task_coeffs, const Matrix& current_Z,
                           EStage stage, const EStepParams& params);

/// Runs the five-step loop for schedule.total_iters iterations. Latents are
/// initialized uniformly from `seed` unless `initial_Z` is given.
MTResult train(const MultiTaskDataset& data, const MTConfig& config, std::uint64_t seed,
               const std::optional<Matrix>& initial_Z = std::nullopt);

/// Lower cost summed over tasks for the given state and kernel width.
double lower_cost(const MultiTaskDataset& data, const Matrix& Z, const Matrix& rho,
                  const std::vector<Matrix>& V_stack, const BasisConfig& lower_basis,
                  const QuadratureRule& rule, double lambda_L, double beta = 1.0);

/// Higher cost (beta/2I) sum_i int h_T(u|u_i) |G(.,u) - f_i|^2 du / 2^D_T
/// using the orthonormality of the lower basis.
double higher_cost(const GeneralModel& model, const std::vector<Matrix>& V_stack, const Matrix& U,
                   const QuadratureRule& rule_T, double lambda_T, double beta = 1.0);

/// Distance between two task manifolds, sqrt(int |f1(z) - f2(z)|^2 p(z) dz),
/// evaluated with the quadrature rule under the uniform prior.
double manifold_distance(const BasisConfig& basis, const Matrix& coeff1, const Matrix& coeff2,
                         const QuadratureRule& rule);

struct NewTaskFit {
  Vector u;
  Matrix Z;
  /// Candidate task chosen in mode none; -1 otherwise.
  int task = -1;
  double objective = 0.0;
};

struct NewTaskParams {
  int rounds = 10;
  EStepParams lower;
  EStepParams higher;
};

/// Estimates latents of an unseen task with the trained model frozen.
/// Candidate task models (the task-latent grid, or the trained task models in
/// mode none) are scored by best-response grid search over z; the winner is
/// refined by coordinate descent on Z and u for `rounds` rounds.
class NewTaskFitter {
 public:
  NewTaskFitter(const MTResult& trained, const NewTaskParams& params);

  [[nodiscard]] NewTaskFit fit(const Matrix& X_new) const;
  /// Coefficients of the fitted task model.
  [[nodiscard]] Matrix coeff_for(const NewTaskFit& fit) const;

 private:
  const MTResult& trained_;
  NewTaskParams params_;
  detail::LatentGrid z_grid_;
  Matrix candidate_u_;
  std::vector<Matrix> candidate_decoded_;
  std::vector<Vector> candidate_sq_norms_;
};

NewTaskFit fit_new_task(const Matrix& X_new, const MTResult& trained,
                        const NewTaskParams& params = {});

}  // namespace mtksmm
