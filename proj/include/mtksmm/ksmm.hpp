#pragma once

#include "mtksmm/numerics.hpp"

#include <cstdint>
#include <vector>

namespace mtksmm {

/// Embedding f(z) = coeff^T phi(z) with coeff of shape L x D_V.
struct TaskModel {
  BasisConfig basis;
  Matrix coeff;

  [[nodiscard]] int dim_visible() const { return static_cast<int>(coeff.cols()); }
};

enum class EStage { grid, gradient };

struct EStepParams {
  int grid_res = 20;
  int grad_iters = 5;
};

struct KsmmOptions {
  EStepParams estep;
  /// Fraction of iterations that use the grid-search E-step.
  double grid_fraction = 0.6;
};

struct KsmmResult {
  TaskModel model;
  Matrix Z;
  std::vector<double> trace;
};

Vector decode(const TaskModel& model, const Eigen::Ref<const Vector>& z);

/// Kernel-smoothing M-step, V = A^-1 B X on the quadrature rule.
TaskModel m_step(const Matrix& X, const Matrix& Z, const BasisConfig& basis,
                 const QuadratureRule& rule, double lambda_L);

/// Per-sample latent estimation argmin_z |f(z) - x_n|^2. The gradient stage
/// starts from `current_Z`; the grid stage ignores it.
Matrix e_step(const Matrix& X, const TaskModel& model, EStage stage, const EStepParams& params,
              const Matrix& current_Z);

/// (beta / 2N) sum_n sum_q w_q h(z_q|z_n) |f(z_q) - x_n|^2 / 2^D.
double cost(const Matrix& X, const Matrix& Z, const TaskModel& model, double lambda_L,
            const QuadratureRule& rule, double beta = 1.0);

/// Alternates M and E steps over the annealing schedule. Latents start
/// uniform in the cube, drawn from per-sample streams of `seed`.
KsmmResult train(const Matrix& X, const BasisConfig& basis, const QuadratureRule& rule,
                 const Schedule& schedule, std::uint64_t seed, const KsmmOptions& options = {});

/// Same as train but starting from the given latents.
KsmmResult train_from(const Matrix& X, const BasisConfig& basis, const QuadratureRule& rule,
                      const Schedule& schedule, Matrix initial_Z, const KsmmOptions& options = {});

/// Uniform random latents in [-1,+1]^dim, row n drawn from its own stream.
Matrix random_latents(std::uint64_t seed, std::uint64_t tag, int count, int dim);

/// Stage used at iteration t: grid for the first ceil(fraction * total)
/// iterations, gradient afterwards.
EStage stage_for_iteration(int t, int total_iters, double grid_fraction);

namespace detail {

/// Quadrature-side tables for a fixed (basis, rule) pair, shared by every
/// kernel-smoothing solve over that rule.
class SmootherTables {
 public:
  SmootherTables(const BasisConfig& basis, const QuadratureRule& rule);

  [[nodiscard]] const BasisConfig& basis() const { return basis_; }
  [[nodiscard]] const QuadratureRule& rule() const { return rule_; }
  /// Q x L basis values at the quadrature points.
  [[nodiscard]] const Matrix& phi() const { return phi_; }

  /// L x L matrix sum_q w_q hbar_q phi(z_q) phi(z_q)^T.
  [[nodiscard]] Matrix normal_matrix(const Vector& hbar) const;

  /// L x C matrix sum_q w_q phi(z_q) m_q^T for an Q x C matrix m.
  [[nodiscard]] Matrix project(const Matrix& m) const;

 private:
  BasisConfig basis_;
  QuadratureRule rule_;
  Matrix phi_;
  Matrix weighted_phi_t_;  // L x Q, phi^T diag(w)
  Matrix pair_table_t_;    // P x Q, rows w_q phi_a phi_b for a <= b
};

/// Solves A V = B for symmetric positive semi-definite A, adding a ridge of
/// 1e-8 trace(A)/L to the diagonal when A is numerically singular.
Matrix solve_normal(const Matrix& A, const Matrix& B);

/// Moments of one sample group: hbar (Q) and projected data Phi^T W H X (L x D_V),
/// plus sum_q w_q sum_n h_qn |x_n|^2 for cost evaluation.
struct GroupMoments {
  Vector hbar;
  Matrix projected;
  double weighted_sq_norm = 0.0;
};

GroupMoments group_moments(const SmootherTables& tables, const Matrix& X, const Matrix& Z,
                           double lambda_L);

/// Value of sum_q w_q [hbar |f|^2 - 2 f.m + |x|^2 terms] given the assembled
/// normal matrix and projected data; equals the unnormalized smoothing cost.
double smoothing_residual(const Matrix& A, const Matrix& B, double weighted_sq_norm,
                          const Matrix& coeff);

/// Lattice and basis table for the grid-search stage.
class LatentGrid {
 public:
  LatentGrid(const BasisConfig& basis, int res);

  [[nodiscard]] const Matrix& points() const { return points_; }
  [[nodiscard]] const Matrix& phi() const { return phi_; }
  [[nodiscard]] int size() const { return static_cast<int>(points_.rows()); }

 private:
  Matrix points_;
  Matrix phi_;
};

/// Index of the row of `decoded` (P x D_V) closest to x; strict comparison so
/// the lowest index wins ties.
int nearest_row(const Matrix& decoded, const Eigen::Ref<const Vector>& x);

/// |coeff^T phi(z) - x|^2 and its gradient in z.
double latent_objective(const BasisConfig& basis, const Matrix& coeff,
                        const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z,
                        Vector* gradient);

/// Projected gradient descent with Armijo backtracking, clamped to the cube.
/// Never increases the objective.
Vector refine_latent(const BasisConfig& basis, const Matrix& coeff,
                     const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z0,
                     int iters);

}  // namespace detail

}  // namespace mtksmm
