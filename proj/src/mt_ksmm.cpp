#include "mtksmm/mt_ksmm.hpp"

#include "mtksmm/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mtksmm {

namespace {

Matrix gather_rows(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(rows[r]);
  return out;
}

Eigen::Map<const Vector> flat(const Matrix& m) { return {m.data(), m.size()}; }

Matrix unflatten(const Eigen::Ref<const Vector>& v, Eigen::Index rows, Eigen::Index cols) {
  return Eigen::Map<const Matrix>(v.data(), rows, cols);
}

// Task-level transfer weights r(i, j) = exp(-|u_i - u_j|^2 / (2 lambda^2)).
Matrix task_weights(const Matrix& U, double lambda) { return kernel_matrix(U, U, lambda); }

// Normal equations of every task's weighted kernel smoother.
struct LowerSystems {
  std::vector<Matrix> A;
  std::vector<Matrix> B;
  Vector sq_norm;
  Vector weight_sum;
};

// Collapses an I x N weight matrix to I x I when every row is constant over
// each source task's samples.
std::optional<Matrix> collapse_weights(const Matrix& rho,
                                       const std::vector<std::vector<int>>& members) {
  const auto tasks = static_cast<Eigen::Index>(members.size());
  Matrix r(rho.rows(), tasks);
  for (Eigen::Index i = 0; i < rho.rows(); ++i) {
    for (Eigen::Index j = 0; j < tasks; ++j) {
      const auto& mem = members[j];
      const double v = rho(i, mem.front());
      for (int n : mem) {
        if (rho(i, n) != v) return std::nullopt;
      }
      r(i, j) = v;
    }
  }
  return r;
}

bool is_identity(const Matrix& r) {
  return r.rows() == r.cols() && r == Matrix::Identity(r.rows(), r.cols());
}

LowerSystems assemble_lower(const detail::SmootherTables& tables, const MultiTaskDataset& data,
                            const std::vector<std::vector<int>>& members, const Matrix& Z,
                            const Matrix& rho, double lambda_L) {
  const int tasks = data.num_tasks;
  const Eigen::Index size = tables.basis().size();
  const Eigen::Index dv = data.X.cols();
  LowerSystems sys;
  sys.A.resize(tasks);
  sys.B.resize(tasks);
  sys.sq_norm.resize(tasks);
  sys.weight_sum.resize(tasks);

  const std::optional<Matrix> r = collapse_weights(rho, members);
  if (r) {
    std::vector<detail::GroupMoments> moments(tasks);
    for (int j = 0; j < tasks; ++j) {
      moments[j] = detail::group_moments(tables, gather_rows(data.X, members[j]),
                                         gather_rows(Z, members[j]), lambda_L);
    }
    Vector counts(tasks);
    for (int j = 0; j < tasks; ++j) counts[j] = static_cast<double>(members[j].size());
    if (is_identity(*r)) {
      for (int i = 0; i < tasks; ++i) {
        sys.A[i] = tables.normal_matrix(moments[i].hbar);
        sys.B[i] = std::move(moments[i].projected);
        sys.sq_norm[i] = moments[i].weighted_sq_norm;
      }
      sys.weight_sum = counts;
      return sys;
    }
    const Eigen::Index q = tables.rule().size();
    Matrix hbar_src(tasks, q);
    Matrix proj_src(tasks, size * dv);
    Vector sq_src(tasks);
    for (int j = 0; j < tasks; ++j) {
      hbar_src.row(j) = moments[j].hbar.transpose();
      proj_src.row(j) = flat(moments[j].projected).transpose();
      sq_src[j] = moments[j].weighted_sq_norm;
    }
    const Matrix hbar = *r * hbar_src;
    const Matrix proj = *r * proj_src;
    sys.sq_norm = *r * sq_src;
    sys.weight_sum = *r * counts;
    for (int i = 0; i < tasks; ++i) {
      sys.A[i] = tables.normal_matrix(hbar.row(i).transpose());
      sys.B[i] = unflatten(proj.row(i).transpose(), size, dv);
    }
    return sys;
  }

  // Arbitrary per-sample weights.
  const Matrix H = kernel_matrix(tables.rule().points, Z, lambda_L);
  const Vector sq = data.X.rowwise().squaredNorm();
  for (int i = 0; i < tasks; ++i) {
    const Matrix Hw = H * rho.row(i).asDiagonal();
    sys.A[i] = tables.normal_matrix(Hw.rowwise().sum());
    sys.B[i] = tables.project(Hw * data.X);
    sys.sq_norm[i] = tables.rule().weights.dot(Hw * sq);
    sys.weight_sum[i] = rho.row(i).sum();
  }
  return sys;
}

std::vector<Matrix> solve_lower(const LowerSystems& sys) {
  std::vector<Matrix> V(sys.A.size());
  for (std::size_t i = 0; i < sys.A.size(); ++i) {
    if (!(sys.weight_sum[static_cast<Eigen::Index>(i)] > 0.0)) {
      throw std::invalid_argument("lower_m_step: task " + std::to_string(i) +
                                  " has all-zero sample weights");
    }
    V[i] = detail::solve_normal(sys.A[i], sys.B[i]);
  }
  return V;
}

double lower_cost_from(const LowerSystems& sys, const std::vector<Matrix>& V, int latent_dim,
                       double beta) {
  double total = 0.0;
  for (std::size_t i = 0; i < V.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    total += beta / (2.0 * sys.weight_sum[ii]) *
             detail::smoothing_residual(sys.A[i], sys.B[i], sys.sq_norm[ii], V[i]);
  }
  return total / cube_volume(latent_dim);
}

Matrix expand_weights(const Matrix& r, const std::vector<int>& task_of) {
  Matrix rho(r.rows(), static_cast<Eigen::Index>(task_of.size()));
  for (std::size_t n = 0; n < task_of.size(); ++n) {
    rho.col(static_cast<Eigen::Index>(n)) = r.col(task_of[n]);
  }
  return rho;
}

// Per-task stacked responses: column k is flatten(Phi_i W_k), so the
// prediction for all samples of the task at u is Y psi(u).
Matrix stacked_responses(const GeneralModel& model, const Matrix& phi_task) {
  const auto K = static_cast<Eigen::Index>(model.W.size());
  Matrix Y(phi_task.rows() * model.dim_visible(), K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Matrix resp = phi_task * model.W[k];
    Y.col(k) = flat(resp);
  }
  return Y;
}

}  // namespace

std::vector<std::vector<int>> MultiTaskDataset::members() const {
  std::vector<std::vector<int>> m(num_tasks);
  for (std::size_t n = 0; n < task_of.size(); ++n) m[task_of[n]].push_back(static_cast<int>(n));
  return m;
}

void MultiTaskDataset::validate() const {
  if (num_tasks < 1) throw std::invalid_argument("dataset: need at least one task");
  if (static_cast<Eigen::Index>(task_of.size()) != X.rows()) {
    throw std::invalid_argument("dataset: task_of length does not match sample count");
  }
  std::vector<int> counts(num_tasks, 0);
  for (int t : task_of) {
    if (t < 0 || t >= num_tasks) throw std::invalid_argument("dataset: task index out of range");
    ++counts[t];
  }
  for (int i = 0; i < num_tasks; ++i) {
    if (counts[i] == 0) {
      throw std::invalid_argument("dataset: task " + std::to_string(i) + " has no samples");
    }
  }
  if (!X.allFinite()) throw std::domain_error("dataset: non-finite sample values");
}

std::string to_string(TransferMode mode) {
  switch (mode) {
    case TransferMode::none: return "none";
    case TransferMode::model_only: return "model_only";
    case TransferMode::both: return "both";
  }
  return "both";
}

TransferMode transfer_mode_from_string(const std::string& name) {
  if (name == "none") return TransferMode::none;
  if (name == "model_only") return TransferMode::model_only;
  if (name == "both") return TransferMode::both;
  throw std::invalid_argument("unknown transfer mode '" + name +
                              "' (expected none, model_only or both)");
}

Matrix GeneralModel::task_coeff_from_psi(const Vector& psi) const {
  Matrix c = Matrix::Zero(W.front().rows(), W.front().cols());
  for (std::size_t k = 0; k < W.size(); ++k) c += psi[static_cast<Eigen::Index>(k)] * W[k];
  return c;
}

Matrix GeneralModel::task_coeff(const Eigen::Ref<const Vector>& u) const {
  return task_coeff_from_psi(eval_basis(higher_basis, u));
}

Vector general_decode(const GeneralModel& model, const Eigen::Ref<const Vector>& z,
                      const Eigen::Ref<const Vector>& u) {
  const Vector phi = eval_basis(model.lower_basis, z);
  const Vector psi = eval_basis(model.higher_basis, u);
  Vector out = Vector::Zero(model.dim_visible());
  for (std::size_t k = 0; k < model.W.size(); ++k) {
    out += psi[static_cast<Eigen::Index>(k)] * (model.W[k].transpose() * phi);
  }
  return out;
}

void MTConfig::validate() const {
  schedule.validate();
  if (lower_basis.latent_dim < 1 || higher_basis.latent_dim < 1) {
    throw std::invalid_argument("latent_dim: must be >= 1");
  }
  if (lower_basis.max_degree_per_dim < 0 || higher_basis.max_degree_per_dim < 0) {
    throw std::invalid_argument("degree: must be >= 0");
  }
  if (lower_nodes < 1 || higher_nodes < 1) throw std::invalid_argument("nodes: must be >= 1");
  if (lower_estep.grid_res < 1 || higher_estep.grid_res < 1) {
    throw std::invalid_argument("grid_res: must be >= 1");
  }
  if (lower_estep.grad_iters < 0 || higher_estep.grad_iters < 0) {
    throw std::invalid_argument("grad_iters: must be >= 0");
  }
  if (!(grid_fraction >= 0.0 && grid_fraction <= 1.0)) {
    throw std::invalid_argument("grid_fraction: must lie in [0, 1]");
  }
}

Matrix MTResult::task_coeff(int task) const {
  if (task < 0 || task >= num_tasks()) {
    throw std::domain_error("task index " + std::to_string(task) + " was not seen in training");
  }
  if (mode == TransferMode::none) return state.V_stack[task];
  return model.task_coeff(state.U.row(task).transpose());
}

Matrix instance_transfer(const Matrix& U, const std::vector<int>& task_of, double lambda_rho,
                         TransferMode mode) {
  if (!(lambda_rho > 0.0)) throw std::domain_error("instance_transfer: lambda_rho must be positive");
  if (mode != TransferMode::both) {
    return expand_weights(Matrix::Identity(U.rows(), U.rows()), task_of);
  }
  return expand_weights(task_weights(U, lambda_rho), task_of);
}

std::vector<Matrix> lower_m_step(const MultiTaskDataset& data, const Matrix& Z, const Matrix& rho,
                                 const BasisConfig& lower_basis, const QuadratureRule& rule,
                                 double lambda_L) {
  data.validate();
  if (rho.rows() != data.num_tasks || rho.cols() != data.X.rows()) {
    throw std::invalid_argument("lower_m_step: rho must be I x N");
  }
  const detail::SmootherTables tables(lower_basis, rule);
  return solve_lower(assemble_lower(tables, data, data.members(), Z, rho, lambda_L));
}

GeneralModel higher_m_step(const std::vector<Matrix>& V_stack, const Matrix& U,
                           const BasisConfig& lower_basis, const BasisConfig& higher_basis,
                           const QuadratureRule& rule_T, double lambda_T) {
  if (V_stack.empty()) throw std::invalid_argument("higher_m_step: need at least one task");
  if (U.rows() != static_cast<Eigen::Index>(V_stack.size())) {
    throw std::invalid_argument("higher_m_step: U rows must match task count");
  }
  const detail::SmootherTables tables(higher_basis, rule_T);
  const Eigen::Index rows = V_stack.front().rows();
  const Eigen::Index cols = V_stack.front().cols();
  Matrix v_flat(U.rows(), rows * cols);
  for (Eigen::Index i = 0; i < U.rows(); ++i) v_flat.row(i) = flat(V_stack[i]).transpose();
  const Matrix H = kernel_matrix(rule_T.points, U, lambda_T);
  const Vector hbar = H.rowwise().sum();
  const Matrix w_flat = detail::solve_normal(tables.normal_matrix(hbar), tables.project(H * v_flat));
  GeneralModel g{lower_basis, higher_basis, {}};
  g.W.reserve(static_cast<std::size_t>(w_flat.rows()));
  for (Eigen::Index k = 0; k < w_flat.rows(); ++k) {
    g.W.push_back(unflatten(w_flat.row(k).transpose(), rows, cols));
  }
  return g;
}

Matrix higher_e_step(const MultiTaskDataset& data, const Matrix& Z, const GeneralModel& model,
                     const Matrix& current_U, EStage stage, const EStepParams& params) {
  for (const auto& w : model.W) {
    if (!w.allFinite()) throw std::domain_error("higher_e_step: model has non-finite entries");
  }
  const auto members = data.members();
  Matrix U(data.num_tasks, model.higher_basis.latent_dim);
  std::optional<detail::LatentGrid> grid;
  if (stage == EStage::grid) grid.emplace(model.higher_basis, params.grid_res);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < data.num_tasks; ++i) {
    const Matrix phi = eval_basis_rows(model.lower_basis, gather_rows(Z, members[i]));
    const Matrix Y = stacked_responses(model, phi);
    const Matrix Xi = gather_rows(data.X, members[i]);
    const Vector target = flat(Xi);
    if (stage == EStage::grid) {
      const Matrix decoded = grid->phi() * Y.transpose();
      U.row(i) = grid->points().row(detail::nearest_row(decoded, target));
    } else {
      U.row(i) = detail::refine_latent(model.higher_basis, Y.transpose(), target,
                                       current_U.row(i).transpose(), params.grad_iters)
                     .transpose();
    }
  }
  return U;
}

Matrix lower_e_step_coeffs(const MultiTaskDataset& data, const BasisConfig& lower_basis,
                           const std::vector<Matrix>& task_coeffs, const Matrix& current_Z,
                           EStage stage, const EStepParams& params) {
  const auto members = data.members();
  Matrix Z(data.X.rows(), lower_basis.latent_dim);
  std::optional<detail::LatentGrid> grid;
  if (stage == EStage::grid) grid.emplace(lower_basis, params.grid_res);
  for (const Matrix& coeff : task_coeffs) {
    if (!coeff.allFinite()) throw std::domain_error("lower_e_step: model has non-finite entries");
  }
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < data.num_tasks; ++i) {
    const Matrix& coeff = task_coeffs[i];
    if (stage == EStage::grid) {
      const Matrix decoded = grid->phi() * coeff;
      for (int n : members[i]) {
        Z.row(n) = grid->points().row(detail::nearest_row(decoded, data.X.row(n).transpose()));
      }
    } else {
      for (int n : members[i]) {
        Z.row(n) = detail::refine_latent(lower_basis, coeff, data.X.row(n).transpose(),
                                         current_Z.row(n).transpose(), params.grad_iters)
                       .transpose();
      }
    }
  }
  return Z;
}

Matrix lower_e_step(const MultiTaskDataset& data, const GeneralModel& model, const Matrix& U,
                    const Matrix& current_Z, EStage stage, const EStepParams& params) {
  std::vector<Matrix> coeffs(data.num_tasks);
  for (int i = 0; i < data.num_tasks; ++i) coeffs[i] = model.task_coeff(U.row(i).transpose());
  return lower_e_step_coeffs(data, model.lower_basis, coeffs, current_Z, stage, params);
}

MTResult train(const MultiTaskDataset& data, const MTConfig& config, std::uint64_t seed,
               const std::optional<Matrix>& initial_Z) {
  data.validate();
  config.validate();
  const auto members = data.members();
  const int tasks = data.num_tasks;
  const Schedule& sched = config.schedule;
  const detail::SmootherTables lower_tables(
      config.lower_basis, quadrature_grid(config.lower_basis.latent_dim, config.lower_nodes));
  const QuadratureRule rule_T = quadrature_grid(config.higher_basis.latent_dim, config.higher_nodes);

  MTResult res;
  res.mode = config.mode;
  MTFitState& st = res.state;
  if (initial_Z) {
    if (initial_Z->rows() != data.X.rows() || initial_Z->cols() != config.lower_basis.latent_dim) {
      throw std::invalid_argument("train: initial latents have the wrong shape");
    }
    st.Z = *initial_Z;
  } else {
    st.Z = random_latents(seed, static_cast<std::uint64_t>(StreamTag::init_sample_latent),
                          data.size(), config.lower_basis.latent_dim);
  }
  st.U = random_latents(seed, static_cast<std::uint64_t>(StreamTag::init_task_latent), tasks,
                        config.higher_basis.latent_dim);
  res.model.lower_basis = config.lower_basis;
  res.model.higher_basis = config.higher_basis;
  res.trace.reserve(sched.total_iters);

  const Matrix identity = Matrix::Identity(tasks, tasks);
  Matrix r = identity;
  for (int t = 0; t < sched.total_iters; ++t) {
    const KernelWidths widths = anneal(sched, t);
    const EStage stage = stage_for_iteration(t, sched.total_iters, config.grid_fraction);

    // Step 1: instance transfer
    r = config.mode == TransferMode::both ? task_weights(st.U, widths.lambda_rho) : identity;

    // Step 2: lower M-step on the merged sample sets
    const LowerSystems sys =
        assemble_lower(lower_tables, data, members, st.Z, expand_weights(r, data.task_of),
                       widths.lambda_L);
    st.V_stack = solve_lower(sys);
    res.trace.push_back(
        lower_cost_from(sys, st.V_stack, config.lower_basis.latent_dim, sched.beta));

    std::vector<Matrix> coeffs;
    if (config.mode == TransferMode::none) {
      coeffs = st.V_stack;
    } else {
      // Step 3: higher M-step (model transfer)
      res.model = higher_m_step(st.V_stack, st.U, config.lower_basis, config.higher_basis, rule_T,
                                widths.lambda_T);
      // Step 4: higher E-step
      st.U = higher_e_step(data, st.Z, res.model, st.U, stage, config.higher_estep);
      coeffs.resize(tasks);
      for (int i = 0; i < tasks; ++i) coeffs[i] = res.model.task_coeff(st.U.row(i).transpose());
    }

    // Step 5: lower E-step with the transferred task models
    if (!config.fix_sample_latents) {
      st.Z = lower_e_step_coeffs(data, config.lower_basis, coeffs, st.Z, stage, config.lower_estep);
    }
    st.iteration = t + 1;
  }
  st.rho = expand_weights(r, data.task_of);
  return res;
}

double lower_cost(const MultiTaskDataset& data, const Matrix& Z, const Matrix& rho,
                  const std::vector<Matrix>& V_stack, const BasisConfig& lower_basis,
                  const QuadratureRule& rule, double lambda_L, double beta) {
  const detail::SmootherTables tables(lower_basis, rule);
  const LowerSystems sys = assemble_lower(tables, data, data.members(), Z, rho, lambda_L);
  return lower_cost_from(sys, V_stack, lower_basis.latent_dim, beta);
}

double higher_cost(const GeneralModel& model, const std::vector<Matrix>& V_stack, const Matrix& U,
                   const QuadratureRule& rule_T, double lambda_T, double beta) {
  const Matrix psi = eval_basis_rows(model.higher_basis, rule_T.points);
  double total = 0.0;
  for (int q = 0; q < rule_T.size(); ++q) {
    const Matrix g = model.task_coeff_from_psi(psi.row(q).transpose());
    for (std::size_t i = 0; i < V_stack.size(); ++i) {
      const double h = smoothing_kernel(rule_T.points.row(q).transpose(),
                                        U.row(static_cast<Eigen::Index>(i)).transpose(), lambda_T);
      total += rule_T.weights[q] * h * (g - V_stack[i]).squaredNorm();
    }
  }
  return beta / (2.0 * static_cast<double>(V_stack.size())) * total / cube_volume(rule_T.dim());
}

double manifold_distance(const BasisConfig& basis, const Matrix& coeff1, const Matrix& coeff2,
                         const QuadratureRule& rule) {
  const Matrix diff = eval_basis_rows(basis, rule.points) * (coeff1 - coeff2);
  const double sq = rule.weights.dot(diff.rowwise().squaredNorm()) / cube_volume(rule.dim());
  return std::sqrt(std::max(0.0, sq));
}

NewTaskFitter::NewTaskFitter(const MTResult& trained, const NewTaskParams& params)
    : trained_(trained),
      params_(params),
      z_grid_(trained.model.lower_basis, params.lower.grid_res) {
  if (trained.mode == TransferMode::none) {
    candidate_u_ = trained.state.U;
    for (const Matrix& v : trained.state.V_stack) candidate_decoded_.push_back(z_grid_.phi() * v);
  } else {
    const detail::LatentGrid u_grid(trained.model.higher_basis, params.higher.grid_res);
    candidate_u_ = u_grid.points();
    for (Eigen::Index p = 0; p < u_grid.phi().rows(); ++p) {
      candidate_decoded_.push_back(z_grid_.phi() *
                                   trained.model.task_coeff_from_psi(u_grid.phi().row(p).transpose()));
    }
  }
  for (const Matrix& d : candidate_decoded_) candidate_sq_norms_.push_back(d.rowwise().squaredNorm());
}

Matrix NewTaskFitter::coeff_for(const NewTaskFit& fit) const {
  if (trained_.mode == TransferMode::none) return trained_.state.V_stack[fit.task];
  return trained_.model.task_coeff(fit.u);
}

NewTaskFit NewTaskFitter::fit(const Matrix& X_new) const {
  if (X_new.rows() < 1) throw std::invalid_argument("fit_new_task: need at least one sample");
  if (X_new.cols() != trained_.model.dim_visible() &&
      (trained_.state.V_stack.empty() || X_new.cols() != trained_.state.V_stack[0].cols())) {
    throw std::invalid_argument("fit_new_task: sample dimension does not match the model");
  }
  // (a) candidate scoring by best-response grid search, |d|^2 - 2 x.d + |x|^2
  const Vector x_sq = X_new.rowwise().squaredNorm();
  int best = 0;
  double best_err = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < candidate_decoded_.size(); ++p) {
    Matrix dist = -2.0 * (X_new * candidate_decoded_[p].transpose());
    dist.rowwise() += candidate_sq_norms_[p].transpose();
    const double err = dist.rowwise().minCoeff().sum() + x_sq.sum();
    if (err < best_err) {
      best_err = err;
      best = static_cast<int>(p);
    }
  }
  NewTaskFit out;
  out.u = candidate_u_.row(best).transpose();
  out.task = trained_.mode == TransferMode::none ? best : -1;
  const Matrix& decoded = candidate_decoded_[static_cast<std::size_t>(best)];
  out.Z.resize(X_new.rows(), trained_.model.lower_basis.latent_dim);
  for (Eigen::Index j = 0; j < X_new.rows(); ++j) {
    out.Z.row(j) = z_grid_.points().row(detail::nearest_row(decoded, X_new.row(j).transpose()));
  }

  // (b) coordinate descent on Z and u with W frozen
  for (int round = 0; round < params_.rounds; ++round) {
    const Matrix coeff = coeff_for(out);
    for (Eigen::Index j = 0; j < X_new.rows(); ++j) {
      out.Z.row(j) = detail::refine_latent(trained_.model.lower_basis, coeff,
                                           X_new.row(j).transpose(), out.Z.row(j).transpose(),
                                           params_.lower.grad_iters)
                         .transpose();
    }
    if (trained_.mode != TransferMode::none) {
      const Matrix phi = eval_basis_rows(trained_.model.lower_basis, out.Z);
      const Matrix Y = stacked_responses(trained_.model, phi);
      out.u = detail::refine_latent(trained_.model.higher_basis, Y.transpose(), flat(X_new), out.u,
                                    params_.higher.grad_iters);
    }
  }
  const Matrix coeff = coeff_for(out);
  const Matrix pred = eval_basis_rows(trained_.model.lower_basis, out.Z) * coeff;
  out.objective = (pred - X_new).squaredNorm();
  return out;
}

NewTaskFit fit_new_task(const Matrix& X_new, const MTResult& trained, const NewTaskParams& params) {
  return NewTaskFitter(trained, params).fit(X_new);
}

}  // namespace mtksmm
