#include "mtksmm/numerics.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mtksmm {

namespace {

int ipow(int base, int exp) {
  int r = 1;
  for (int i = 0; i < exp; ++i) r *= base;
  return r;
}

// Gauss-Legendre nodes (ascending) and weights on [-1,1] by Newton iteration
// on P_n, starting from the Tricomi asymptotic guess.
void gauss_legendre_1d(int n, std::vector<double>& nodes, std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  const int half = (n + 1) / 2;
  for (int i = 0; i < half; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      // p1 = P_n(x), p0 = P_{n-1}(x)
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    if (n == 1) {
      x = 0.0;
      dp = 1.0;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    nodes[n - 1 - i] = x;
    nodes[i] = -x;
    weights[i] = w;
    weights[n - 1 - i] = w;
  }
  if (n % 2 == 1) nodes[n / 2] = 0.0;
}

}  // namespace

int BasisConfig::size() const { return ipow(max_degree_per_dim + 1, latent_dim); }

void Schedule::validate() const {
  auto check_pair = [](double start, double end, const std::string& name) {
    if (!(start > 0.0) || !(end > 0.0) || !std::isfinite(start) || !std::isfinite(end)) {
      throw std::invalid_argument(name + ": kernel widths must be positive and finite");
    }
    if (start < end) {
      throw std::invalid_argument(name + ": start must be >= end");
    }
  };
  check_pair(lambda_L_start, lambda_L_end, "lambda_L");
  check_pair(lambda_T_start, lambda_T_end, "lambda_T");
  check_pair(lambda_rho_start, lambda_rho_end, "lambda_rho");
  if (total_iters < 1) throw std::invalid_argument("total_iters: must be >= 1");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta: must be positive");
}

void legendre_normalized(double x, int max_degree, std::span<double> out) {
  double p_prev = 1.0;
  double p = x;
  out[0] = 1.0;
  if (max_degree >= 1) out[1] = x;
  for (int d = 1; d < max_degree; ++d) {
    const double p_next = ((2.0 * d + 1.0) * x * p - d * p_prev) / (d + 1.0);
    p_prev = p;
    p = p_next;
    out[d + 1] = p;
  }
  for (int d = 0; d <= max_degree; ++d) out[d] *= std::sqrt((2.0 * d + 1.0) / 2.0);
}

void legendre_normalized_with_derivative(double x, int max_degree, std::span<double> values,
                                         std::span<double> derivatives) {
  // P'_{d+1} = P'_{d-1} + (2d+1) P_d
  values[0] = 1.0;
  derivatives[0] = 0.0;
  if (max_degree >= 1) {
    values[1] = x;
    derivatives[1] = 1.0;
  }
  for (int d = 1; d < max_degree; ++d) {
    values[d + 1] = ((2.0 * d + 1.0) * x * values[d] - d * values[d - 1]) / (d + 1.0);
    derivatives[d + 1] = derivatives[d - 1] + (2.0 * d + 1.0) * values[d];
  }
  for (int d = 0; d <= max_degree; ++d) {
    const double s = std::sqrt((2.0 * d + 1.0) / 2.0);
    values[d] *= s;
    derivatives[d] *= s;
  }
}

void check_in_cube(const Eigen::Ref<const Vector>& z, const char* what) {
  for (Eigen::Index k = 0; k < z.size(); ++k) {
    if (!std::isfinite(z[k]) || z[k] < -1.0 || z[k] > 1.0) {
      throw std::domain_error(std::string(what) + ": coordinate " + std::to_string(k) + " = " +
                              std::to_string(z[k]) + " outside [-1,+1]");
    }
  }
}

namespace {

// Fill `out` (length L) with the tensor-product basis given per-dimension
// 1-D tables laid out as table[k * (deg+1) + d].
void tensor_product(int dim, int deg, const double* table, double* out) {
  const int per = deg + 1;
  const int size = ipow(per, dim);
  for (int l = 0; l < size; ++l) {
    double v = 1.0;
    int rem = l;
    for (int k = dim - 1; k >= 0; --k) {
      v *= table[k * per + rem % per];
      rem /= per;
    }
    out[l] = v;
  }
}

}  // namespace

Vector eval_basis(const BasisConfig& cfg, const Eigen::Ref<const Vector>& z) {
  if (z.size() != cfg.latent_dim) {
    throw std::domain_error("eval_basis: point dimension does not match basis latent_dim");
  }
  check_in_cube(z, "eval_basis");
  const int per = cfg.max_degree_per_dim + 1;
  std::vector<double> table(static_cast<std::size_t>(per) * cfg.latent_dim);
  for (int k = 0; k < cfg.latent_dim; ++k) {
    legendre_normalized(z[k], cfg.max_degree_per_dim,
                        std::span<double>(table.data() + k * per, per));
  }
  Vector out(cfg.size());
  tensor_product(cfg.latent_dim, cfg.max_degree_per_dim, table.data(), out.data());
  return out;
}

void eval_basis_with_jacobian(const BasisConfig& cfg, const Eigen::Ref<const Vector>& z,
                              Vector& values, Matrix& jacobian) {
  const int dim = cfg.latent_dim;
  const int per = cfg.max_degree_per_dim + 1;
  const int size = cfg.size();
  std::array<double, 64> stack_vals{};
  std::array<double, 64> stack_ders{};
  std::vector<double> heap_vals;
  std::vector<double> heap_ders;
  double* vals = stack_vals.data();
  double* ders = stack_ders.data();
  if (dim * per > 64) {
    heap_vals.resize(static_cast<std::size_t>(dim) * per);
    heap_ders.resize(static_cast<std::size_t>(dim) * per);
    vals = heap_vals.data();
    ders = heap_ders.data();
  }
  for (int k = 0; k < dim; ++k) {
    legendre_normalized_with_derivative(z[k], cfg.max_degree_per_dim,
                                        std::span<double>(vals + k * per, per),
                                        std::span<double>(ders + k * per, per));
  }
  values.resize(size);
  jacobian.resize(size, dim);
  for (int l = 0; l < size; ++l) {
    // digits of l, most significant first
    int digits[16];
    int rem = l;
    for (int k = dim - 1; k >= 0; --k) {
      digits[k] = rem % per;
      rem /= per;
    }
    double v = 1.0;
    for (int k = 0; k < dim; ++k) v *= vals[k * per + digits[k]];
    values[l] = v;
    for (int j = 0; j < dim; ++j) {
      double g = ders[j * per + digits[j]];
      for (int k = 0; k < dim; ++k) {
        if (k != j) g *= vals[k * per + digits[k]];
      }
      jacobian(l, j) = g;
    }
  }
}

Matrix eval_basis_rows(const BasisConfig& cfg, const Matrix& points) {
  if (points.cols() != cfg.latent_dim) {
    throw std::domain_error("eval_basis_rows: point dimension does not match basis latent_dim");
  }
  const int per = cfg.max_degree_per_dim + 1;
  const int size = cfg.size();
  Matrix out(points.rows(), size);
  std::vector<double> table(static_cast<std::size_t>(per) * cfg.latent_dim);
  std::vector<double> row(size);
  for (Eigen::Index r = 0; r < points.rows(); ++r) {
    for (int k = 0; k < cfg.latent_dim; ++k) {
      const double x = points(r, k);
      if (!std::isfinite(x) || x < -1.0 || x > 1.0) {
        throw std::domain_error("eval_basis_rows: coordinate outside [-1,+1]");
      }
      legendre_normalized(x, cfg.max_degree_per_dim,
                          std::span<double>(table.data() + k * per, per));
    }
    tensor_product(cfg.latent_dim, cfg.max_degree_per_dim, table.data(), row.data());
    for (int l = 0; l < size; ++l) out(r, l) = row[l];
  }
  return out;
}

QuadratureRule quadrature_grid(int dim, int nodes_per_dim) {
  if (dim < 1) throw std::invalid_argument("quadrature_grid: dim must be >= 1");
  if (nodes_per_dim < 1) throw std::invalid_argument("quadrature_grid: nodes_per_dim must be >= 1");
  std::vector<double> nodes;
  std::vector<double> weights;
  gauss_legendre_1d(nodes_per_dim, nodes, weights);
  const int count = ipow(nodes_per_dim, dim);
  QuadratureRule rule;
  rule.points.resize(count, dim);
  rule.weights.resize(count);
  for (int q = 0; q < count; ++q) {
    int rem = q;
    double w = 1.0;
    for (int k = dim - 1; k >= 0; --k) {
      const int idx = rem % nodes_per_dim;
      rem /= nodes_per_dim;
      rule.points(q, k) = nodes[idx];
      w *= weights[idx];
    }
    rule.weights[q] = w;
  }
  return rule;
}

Matrix lattice_grid(int dim, int res) {
  if (dim < 1 || res < 1) throw std::invalid_argument("lattice_grid: dim and res must be >= 1");
  const int count = ipow(res, dim);
  Matrix pts(count, dim);
  for (int p = 0; p < count; ++p) {
    int rem = p;
    for (int k = dim - 1; k >= 0; --k) {
      const int idx = rem % res;
      rem /= res;
      pts(p, k) = res == 1 ? 0.0 : -1.0 + 2.0 * idx / (res - 1);
    }
  }
  return pts;
}

Matrix gram_matrix(const BasisConfig& cfg, const QuadratureRule& rule) {
  if (rule.dim() != cfg.latent_dim) {
    throw std::domain_error("gram_matrix: quadrature dimension does not match basis latent_dim");
  }
  const Matrix phi = eval_basis_rows(cfg, rule.points);
  return phi.transpose() * rule.weights.asDiagonal() * phi;
}

double smoothing_kernel(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b,
                        double lambda) {
  if (!(lambda > 0.0)) throw std::domain_error("smoothing_kernel: lambda must be positive");
  return std::exp(-(a - b).squaredNorm() / (2.0 * lambda * lambda));
}

Matrix kernel_matrix(const Matrix& rows, const Matrix& cols, double lambda) {
  if (!(lambda > 0.0)) throw std::domain_error("kernel_matrix: lambda must be positive");
  const double scale = -1.0 / (2.0 * lambda * lambda);
  Matrix k(rows.rows(), cols.rows());
  const Eigen::Index dim = rows.cols();
  for (Eigen::Index j = 0; j < cols.rows(); ++j) {
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
      double d2 = 0.0;
      for (Eigen::Index c = 0; c < dim; ++c) {
        const double diff = rows(i, c) - cols(j, c);
        d2 += diff * diff;
      }
      k(i, j) = std::exp(scale * d2);
    }
  }
  return k;
}

KernelWidths anneal(const Schedule& s, int t) {
  if (t < 0 || t >= s.total_iters) {
    throw std::domain_error("anneal: iteration " + std::to_string(t) + " outside [0, " +
                            std::to_string(s.total_iters) + ")");
  }
  const double frac = s.total_iters == 1 ? 0.0 : static_cast<double>(t) / (s.total_iters - 1);
  auto decay = [frac](double start, double end) {
    if (frac == 0.0) return start;
    if (frac == 1.0) return end;
    return start * std::pow(end / start, frac);
  };
  return {decay(s.lambda_L_start, s.lambda_L_end), decay(s.lambda_T_start, s.lambda_T_end),
          decay(s.lambda_rho_start, s.lambda_rho_end)};
}

double cube_volume(int dim) { return std::ldexp(1.0, dim); }

void set_workers(int workers) {
#ifdef _OPENMP
  omp_set_num_threads(workers < 1 ? omp_get_num_procs() : workers);
#else
  (void)workers;
#endif
}

int available_workers() {
#ifdef _OPENMP
  return omp_get_num_procs();
#else
  return 1;
#endif
}

}  // namespace mtksmm
