#include "mtksmm/ksmm.hpp"

#include "mtksmm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mtksmm {

namespace detail {

SmootherTables::SmootherTables(const BasisConfig& basis, const QuadratureRule& rule)
    : basis_(basis), rule_(rule) {
  if (rule.dim() != basis.latent_dim) {
    throw std::domain_error("quadrature dimension does not match basis latent_dim");
  }
  phi_ = eval_basis_rows(basis, rule.points);
  weighted_phi_t_ = phi_.transpose() * rule.weights.asDiagonal();
  const int size = basis.size();
  const int pairs = size * (size + 1) / 2;
  pair_table_t_.resize(pairs, rule.size());
  int p = 0;
  for (int a = 0; a < size; ++a) {
    for (int b = a; b < size; ++b, ++p) {
      pair_table_t_.row(p) = weighted_phi_t_.row(a).cwiseProduct(phi_.col(b).transpose());
    }
  }
}

Matrix SmootherTables::normal_matrix(const Vector& hbar) const {
  const Vector packed = pair_table_t_ * hbar;
  const int size = basis_.size();
  Matrix A(size, size);
  int p = 0;
  for (int a = 0; a < size; ++a) {
    for (int b = a; b < size; ++b, ++p) {
      A(a, b) = packed[p];
      A(b, a) = packed[p];
    }
  }
  return A;
}

Matrix SmootherTables::project(const Matrix& m) const { return weighted_phi_t_ * m; }

Matrix solve_normal(const Matrix& A, const Matrix& B) {
  if (!A.allFinite() || !B.allFinite()) {
    throw std::domain_error("kernel smoothing system has non-finite entries");
  }
  Eigen::LLT<Matrix> llt(A);
  if (llt.info() == Eigen::Success && llt.rcond() > 1e-13) {
    return llt.solve(B);
  }
  const double eps = std::max(1e-8 * A.trace() / static_cast<double>(A.rows()),
                              std::numeric_limits<double>::min());
  Matrix ridged = A;
  ridged.diagonal().array() += eps;
  Eigen::LDLT<Matrix> ldlt(ridged);
  return ldlt.solve(B);
}

GroupMoments group_moments(const SmootherTables& tables, const Matrix& X, const Matrix& Z,
                           double lambda_L) {
  const Matrix H = kernel_matrix(tables.rule().points, Z, lambda_L);
  GroupMoments m;
  m.hbar = H.rowwise().sum();
  m.projected = tables.project(H * X);
  const Vector sq = X.rowwise().squaredNorm();
  m.weighted_sq_norm = tables.rule().weights.dot(H * sq);
  return m;
}

double smoothing_residual(const Matrix& A, const Matrix& B, double weighted_sq_norm,
                          const Matrix& coeff) {
  const double quad = (coeff.transpose() * A * coeff).trace();
  const double cross = (coeff.array() * B.array()).sum();
  return std::max(0.0, quad - 2.0 * cross + weighted_sq_norm);
}

LatentGrid::LatentGrid(const BasisConfig& basis, int res)
    : points_(lattice_grid(basis.latent_dim, res)), phi_(eval_basis_rows(basis, points_)) {}

int nearest_row(const Matrix& decoded, const Eigen::Ref<const Vector>& x) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  const Eigen::Index dim = decoded.cols();
  for (Eigen::Index p = 0; p < decoded.rows(); ++p) {
    double d = 0.0;
    for (Eigen::Index c = 0; c < dim; ++c) {
      const double diff = decoded(p, c) - x[c];
      d += diff * diff;
    }
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(p);
    }
  }
  return best;
}

double latent_objective(const BasisConfig& basis, const Matrix& coeff,
                        const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z,
                        Vector* gradient) {
  Vector phi;
  Matrix jac;
  eval_basis_with_jacobian(basis, z, phi, jac);
  const Vector r = coeff.transpose() * phi - x;
  if (gradient != nullptr) {
    // d/dz |V^T phi - x|^2 = 2 J^T V r
    *gradient = 2.0 * jac.transpose() * (coeff * r);
  }
  return r.squaredNorm();
}

Vector refine_latent(const BasisConfig& basis, const Matrix& coeff,
                     const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& z0,
                     int iters) {
  constexpr double armijo = 1e-4;
  constexpr int max_halvings = 40;
  Vector z = z0.cwiseMax(-1.0).cwiseMin(1.0);
  Vector grad;
  double f = latent_objective(basis, coeff, x, z, &grad);
  double step = 1.0;
  for (int it = 0; it < iters; ++it) {
    bool accepted = false;
    step = std::min(1.0, 2.0 * step);
    for (int h = 0; h < max_halvings; ++h, step *= 0.5) {
      const Vector trial = (z - step * grad).cwiseMax(-1.0).cwiseMin(1.0);
      const double decrease = grad.dot(z - trial);
      if (decrease <= 0.0) break;
      const double f_trial = latent_objective(basis, coeff, x, trial, nullptr);
      if (f_trial <= f - armijo * decrease) {
        z = trial;
        f = latent_objective(basis, coeff, x, z, &grad);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  return z;
}

}  // namespace detail

Vector decode(const TaskModel& model, const Eigen::Ref<const Vector>& z) {
  return model.coeff.transpose() * eval_basis(model.basis, z);
}

TaskModel m_step(const Matrix& X, const Matrix& Z, const BasisConfig& basis,
                 const QuadratureRule& rule, double lambda_L) {
  if (X.rows() < 1) throw std::invalid_argument("m_step: need at least one sample");
  if (Z.rows() != X.rows() || Z.cols() != basis.latent_dim) {
    throw std::invalid_argument("m_step: latent matrix shape does not match data");
  }
  if (!X.allFinite() || !Z.allFinite()) throw std::domain_error("m_step: non-finite input");
  const detail::SmootherTables tables(basis, rule);
  const detail::GroupMoments mom = detail::group_moments(tables, X, Z, lambda_L);
  return TaskModel{basis, detail::solve_normal(tables.normal_matrix(mom.hbar), mom.projected)};
}

Matrix e_step(const Matrix& X, const TaskModel& model, EStage stage, const EStepParams& params,
              const Matrix& current_Z) {
  if (!model.coeff.allFinite()) throw std::domain_error("e_step: model has non-finite entries");
  const int dim = model.basis.latent_dim;
  Matrix Z(X.rows(), dim);
  if (stage == EStage::grid) {
    const detail::LatentGrid grid(model.basis, params.grid_res);
    const Matrix decoded = grid.phi() * model.coeff;
#pragma omp parallel for
    for (Eigen::Index n = 0; n < X.rows(); ++n) {
      Z.row(n) = grid.points().row(detail::nearest_row(decoded, X.row(n).transpose()));
    }
    return Z;
  }
  if (current_Z.rows() != X.rows() || current_Z.cols() != dim) {
    throw std::invalid_argument("e_step: gradient stage needs current latents of matching shape");
  }
#pragma omp parallel for
  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    Z.row(n) = detail::refine_latent(model.basis, model.coeff, X.row(n).transpose(),
                                     current_Z.row(n).transpose(), params.grad_iters)
                   .transpose();
  }
  return Z;
}

double cost(const Matrix& X, const Matrix& Z, const TaskModel& model, double lambda_L,
            const QuadratureRule& rule, double beta) {
  const Matrix decoded = eval_basis_rows(model.basis, rule.points) * model.coeff;
  double total = 0.0;
  for (Eigen::Index n = 0; n < X.rows(); ++n) {
    for (int q = 0; q < rule.size(); ++q) {
      const double h =
          smoothing_kernel(rule.points.row(q).transpose(), Z.row(n).transpose(), lambda_L);
      total += rule.weights[q] * h * (decoded.row(q) - X.row(n)).squaredNorm();
    }
  }
  return beta / (2.0 * static_cast<double>(X.rows())) * total / cube_volume(rule.dim());
}

Matrix random_latents(std::uint64_t seed, std::uint64_t tag, int count, int dim) {
  Matrix Z(count, dim);
  for (int n = 0; n < count; ++n) {
    RandomStream rs(seed, static_cast<StreamTag>(tag), static_cast<std::uint64_t>(n));
    for (int k = 0; k < dim; ++k) Z(n, k) = rs.uniform(-1.0, 1.0);
  }
  return Z;
}

EStage stage_for_iteration(int t, int total_iters, double grid_fraction) {
  const int grid_iters = static_cast<int>(std::ceil(grid_fraction * total_iters - 1e-12));
  return t < grid_iters ? EStage::grid : EStage::gradient;
}

KsmmResult train(const Matrix& X, const BasisConfig& basis, const QuadratureRule& rule,
                 const Schedule& schedule, std::uint64_t seed, const KsmmOptions& options) {
  return train_from(X, basis, rule, schedule,
                    random_latents(seed, static_cast<std::uint64_t>(StreamTag::init_sample_latent),
                                   static_cast<int>(X.rows()), basis.latent_dim),
                    options);
}

KsmmResult train_from(const Matrix& X, const BasisConfig& basis, const QuadratureRule& rule,
                      const Schedule& schedule, Matrix initial_Z, const KsmmOptions& options) {
  schedule.validate();
  if (X.rows() < 1) throw std::invalid_argument("train: need at least one sample");
  const detail::SmootherTables tables(basis, rule);
  const double norm = schedule.beta / (2.0 * static_cast<double>(X.rows())) /
                      cube_volume(basis.latent_dim);
  KsmmResult result;
  result.Z = std::move(initial_Z);
  result.trace.reserve(schedule.total_iters);
  for (int t = 0; t < schedule.total_iters; ++t) {
    const double lambda_L = anneal(schedule, t).lambda_L;
    const detail::GroupMoments mom = detail::group_moments(tables, X, result.Z, lambda_L);
    const Matrix A = tables.normal_matrix(mom.hbar);
    result.model = TaskModel{basis, detail::solve_normal(A, mom.projected)};
    result.trace.push_back(
        norm * detail::smoothing_residual(A, mom.projected, mom.weighted_sq_norm,
                                          result.model.coeff));
    const EStage stage = stage_for_iteration(t, schedule.total_iters, options.grid_fraction);
    result.Z = e_step(X, result.model, stage, options.estep, result.Z);
  }
  return result;
}

}  // namespace mtksmm
