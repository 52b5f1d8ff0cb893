#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace mtksmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Tensor-product basis of normalized Legendre polynomials on [-1,+1]^D.
///
/// Basis function l corresponds to the multi-index (d_1, ..., d_D), each
/// d_k in [0, max_degree_per_dim], with l = sum_k d_k (deg+1)^(D-1-k); the
/// first coordinate is the most significant digit. Every function is
/// normalized so the Gram matrix under the uniform prior on the cube is the
/// identity.
struct BasisConfig {
  int latent_dim = 1;
  int max_degree_per_dim = 0;

  [[nodiscard]] int size() const;
  friend bool operator==(const BasisConfig&, const BasisConfig&) = default;
};

/// Numerical integration rule over [-1,+1]^D. Points are stored one per row.
struct QuadratureRule {
  Matrix points;
  Vector weights;

  [[nodiscard]] int dim() const { return static_cast<int>(points.cols()); }
  [[nodiscard]] int size() const { return static_cast<int>(points.rows()); }
};

/// Kernel widths annealed over training, plus the noise precision.
struct Schedule {
  double lambda_L_start = 1.0;
  double lambda_L_end = 0.1;
  double lambda_T_start = 1.0;
  double lambda_T_end = 0.2;
  double lambda_rho_start = 1.0;
  double lambda_rho_end = 0.2;
  int total_iters = 150;
  double beta = 1.0;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

struct KernelWidths {
  double lambda_L;
  double lambda_T;
  double lambda_rho;
};

/// Normalized Legendre polynomial sqrt((2d+1)/2) P_d(x) for d = 0..max_degree.
void legendre_normalized(double x, int max_degree, std::span<double> out);

/// Same as legendre_normalized plus the first derivative of each polynomial.
void legendre_normalized_with_derivative(double x, int max_degree, std::span<double> values,
                                         std::span<double> derivatives);

/// Throws std::domain_error if any coordinate is outside [-1,+1] or non-finite.
void check_in_cube(const Eigen::Ref<const Vector>& z, const char* what);

Vector eval_basis(const BasisConfig& cfg, const Eigen::Ref<const Vector>& z);

/// Basis values and the L x D Jacobian d phi_l / d z_k.
void eval_basis_with_jacobian(const BasisConfig& cfg, const Eigen::Ref<const Vector>& z,
                              Vector& values, Matrix& jacobian);

/// Basis evaluated at every row of `points`; returns an (rows x L) matrix.
Matrix eval_basis_rows(const BasisConfig& cfg, const Matrix& points);

/// Tensor product of 1-D Gauss-Legendre rules, lexicographic point order.
QuadratureRule quadrature_grid(int dim, int nodes_per_dim);

/// Regular lattice of res^dim points spanning [-1,+1]^dim including the
/// corners, lexicographic order (first coordinate slowest). res == 1 yields
/// the single point at the origin.
Matrix lattice_grid(int dim, int res);

/// Gram matrix sum_q w_q phi(z_q) phi(z_q)^T; the identity when the rule is exact
/// for the products of basis functions.
Matrix gram_matrix(const BasisConfig& cfg, const QuadratureRule& rule);

/// Unnormalized Gaussian kernel exp(-|a-b|^2 / (2 lambda^2)).
double smoothing_kernel(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b,
                        double lambda);

/// Kernel matrix between each row of `rows` and each row of `cols`.
Matrix kernel_matrix(const Matrix& rows, const Matrix& cols, double lambda);

/// Geometric decay from start to end over schedule.total_iters iterations.
KernelWidths anneal(const Schedule& schedule, int t);

/// Volume of the cube [-1,+1]^dim.
double cube_volume(int dim);

/// Threads used by the per-sample and per-task loops; values < 1 select all
/// available cores. Results do not depend on the thread count.
void set_workers(int workers);
int available_workers();

}  // namespace mtksmm
