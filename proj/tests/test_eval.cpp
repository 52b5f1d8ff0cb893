#include "mtksmm/eval.hpp"
#include "mtksmm/rng.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>

using namespace mtksmm;

namespace {

Matrix random_matrix(int rows, int cols, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  RandomStream rs(seed, StreamTag::sample_draw);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rs.uniform(lo, hi);
  return m;
}

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("rmse examples") {
  const Matrix a = random_matrix(5, 3, 1);
  CHECK(rmse(a, a) == 0.0);
  Matrix p(1, 2);
  p << 3.0, 4.0;
  CHECK(rmse(p, Matrix::Zero(1, 2)) == 5.0);
  Matrix q(2, 2);
  q << 3.0, 4.0, 0.0, 0.0;
  CHECK(rmse(q, Matrix::Zero(2, 2)) == doctest::Approx(std::sqrt(12.5)));
  CHECK_THROWS_AS(rmse(a, Matrix::Zero(5, 2)), std::domain_error);
  CHECK_THROWS_AS(rmse(Matrix(0, 2), Matrix(0, 2)), std::domain_error);
}

TEST_CASE("rmse of pure noise follows the per-sample Euclidean convention") {
  RandomStream rs(2, StreamTag::sample_draw);
  Matrix noise(100000, 10);
  for (Eigen::Index i = 0; i < noise.size(); ++i) noise.data()[i] = 0.1 * rs.normal();
  const double r = rmse(noise, Matrix::Zero(100000, 10));
  CHECK(r == doctest::Approx(0.1 * std::sqrt(10.0)).epsilon(0.003 / 0.3162));
  CHECK(std::abs(r - 0.3162) < 0.003);
}

TEST_CASE("rmse is invariant under a shared row permutation") {
  const Matrix a = random_matrix(30, 4, 3);
  const Matrix b = random_matrix(30, 4, 4);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(30);
  perm.setIdentity();
  RandomStream rs(5, StreamTag::sample_draw);
  for (int i = 29; i > 0; --i) {
    std::swap(perm.indices()[i], perm.indices()[static_cast<int>(rs.next() % (i + 1))]);
  }
  const Matrix pa = perm * a;
  const Matrix pb = perm * b;
  CHECK(rmse(pa, pb) == doctest::Approx(rmse(a, b)).epsilon(1e-14));
}

TEST_CASE("mutual information examples") {
  Matrix a(1000, 1);
  for (int r = 0; r < 1000; ++r) a(r, 0) = r % 10;
  CHECK(std::abs(mutual_information(a, a, 10) - std::log(10.0)) < 1e-12);
  CHECK(mutual_information(a, Matrix::Constant(1000, 1, 2.5), 10) == 0.0);
  CHECK(mutual_information(Matrix::Constant(1000, 2, 1.0), a, 10) == 0.0);

  CHECK_THROWS_AS(mutual_information(a, Matrix::Zero(999, 1)), std::domain_error);
  CHECK_THROWS_AS(mutual_information(Matrix::Zero(1, 1), Matrix::Zero(1, 1)), std::domain_error);
}

TEST_CASE("mutual information of independent uniforms stays below the bias bound") {
  for (std::uint64_t seed : {6, 7, 8}) {
    const Matrix a = random_matrix(10000, 1, seed);
    const Matrix b = random_matrix(10000, 1, seed + 100);
    CHECK(mutual_information(a, b, 10) < 0.05);
  }
}

TEST_CASE("mutual information is exactly symmetric") {
  const Matrix a = random_matrix(500, 2, 9);
  Matrix b = a.col(0) + 0.3 * random_matrix(500, 1, 10);
  CHECK(mutual_information(a, b) == mutual_information(b, a));
  CHECK(mutual_information(a, b) > 0.1);
}

TEST_CASE("mutual information is invariant under increasing affine maps") {
  const Matrix a = random_matrix(800, 2, 11);
  const Matrix b = a.rowwise().sum() + 0.2 * random_matrix(800, 1, 12);
  // Scaling by a power of two and shifting by small dyadic offsets keeps
  // every bin assignment exact in floating point.
  Matrix a2 = 4.0 * a;
  a2.col(0).array() += 0.5;
  a2.col(1).array() -= 2.0;
  const Matrix b2 = (0.25 * b).array() + 1.0;
  CHECK(mutual_information(a2, b2) == doctest::Approx(mutual_information(a, b)).epsilon(1e-12));
}

TEST_CASE("reconstruct_existing on a well fit noiseless model") {
  const LabeledMultiTaskDataset ds = gen_saddle(1, 200, 0.0, 13);
  MTResult trained;
  trained.mode = TransferMode::none;
  trained.model.lower_basis = {2, 2};
  trained.model.higher_basis = {1, 0};
  trained.state.U = Matrix::Zero(1, 1);
  // Exact orthonormal projection of the saddle polynomial onto the basis.
  const QuadratureRule rule = quadrature_grid(2, 8);
  const Matrix phi = eval_basis_rows({2, 2}, rule.points);
  Matrix v = Matrix::Zero(9, 10);
  for (Eigen::Index q = 0; q < rule.size(); ++q) {
    v += rule.weights[q] * phi.row(q).transpose() *
         saddle_point(rule.points.row(q).transpose(), ds.true_u(0, 0)).transpose();
  }
  trained.state.V_stack.push_back(v);
  MultiTaskDataset test = ds.data;
  test.X = ds.data.X.topRows(10);
  test.task_of.resize(10);
  const Reconstruction rec = reconstruct_existing(trained, test, {20, 50});
  for (int n = 0; n < 10; ++n) CHECK((rec.predictions.row(n) - test.X.row(n)).norm() < 1e-3);

  test.task_of[3] = 1;
  CHECK_THROWS_AS(reconstruct_existing(trained, test, {20, 5}), std::domain_error);
}

TEST_CASE("reconstruct_existing with a model constant in z predicts that constant") {
  MTResult trained;
  trained.mode = TransferMode::none;
  trained.model.lower_basis = {2, 2};
  trained.model.higher_basis = {1, 0};
  trained.state.U = Matrix::Zero(1, 1);
  Matrix v = Matrix::Zero(9, 3);
  v.row(0) << 1.0, -2.0, 0.5;
  trained.state.V_stack.push_back(v);
  MultiTaskDataset test;
  test.X = random_matrix(6, 3, 14);
  test.task_of.assign(6, 0);
  test.num_tasks = 1;
  const Reconstruction rec = reconstruct_existing(trained, test, {20, 5});
  for (int n = 0; n < 6; ++n) {
    CHECK((rec.predictions.row(n) - rec.predictions.row(0)).norm() == 0.0);
  }
  CHECK(rec.predictions(0, 0) == doctest::Approx(0.5));
}

TEST_CASE("make_dataset dispatches on kind") {
  DatasetSpec spec;
  spec.n_tasks = 3;
  spec.samples_per_task = 4;
  CHECK(make_dataset(spec, 1).data.X == gen_saddle(3, 4, 0.1, 1).data.X);
  spec.kind = "sine";
  CHECK(make_dataset(spec, 1).data.X == gen_shape_family(ShapeKind::sine, 3, 4, 0.1, 1).data.X);
  spec.kind = "regression_shift";
  CHECK(make_dataset(spec, 1).data.dim_visible() == 2);
  spec.kind = "cube";
  CHECK_THROWS_AS(make_dataset(spec, 1), ConfigError);
}

TEST_CASE("summaries: row count, means and standard deviations") {
  std::vector<MetricReport> reports;
  for (int st : {2, 3}) {
    for (std::uint64_t seed : {1, 2, 3}) {
      for (TransferMode m : {TransferMode::both, TransferMode::model_only, TransferMode::none}) {
        MetricReport r;
        r.dataset = "d";
        r.mode = m;
        r.method = method_name(m);
        r.st = st;
        r.seed = seed;
        r.rmse_existing = static_cast<double>(seed);
        reports.push_back(r);
      }
    }
  }
  const auto rows = summarize(reports);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].n_seeds == 3);
  CHECK(rows[0].rmse_existing_mean == 2.0);
  CHECK(rows[0].rmse_existing_std == 1.0);
  CHECK(rows[0].method == "MT-KSMM");
  CHECK(rows[1].method == "KSMM2");
  CHECK(rows[2].method == "KSMM");

  std::ostringstream a;
  write_reports_csv(reports, a);
  CHECK(count_lines(a.str()) == 19);
  CHECK(a.str().rfind("dataset,mode,st,seed,rmse_existing,mi_existing,rmse_new,mi_new,runtime_s\n", 0) == 0);
  std::ostringstream b;
  write_summary_csv(rows, b);
  CHECK(count_lines(b.str()) == 7);
}

TEST_CASE("compare_methods is deterministic and shares one split across modes") {
  DatasetSpec spec;
  spec.n_tasks = 12;
  spec.samples_per_task = 10;
  MTConfig cfg;
  cfg.schedule.total_iters = 8;
  EvalOptions opt;
  opt.n_train_tasks = 9;
  opt.st_list = {3};
  opt.seeds = {1, 2};
  opt.new_task.rounds = 2;
  const auto a = compare_methods(spec, cfg, opt);
  const auto b = compare_methods(spec, cfg, opt);
  REQUIRE(a.size() == 6);
  std::ostringstream sa;
  std::ostringstream sb;
  write_reports_csv(a, sa);
  write_reports_csv(b, sb);
  CHECK(sa.str() == sb.str());
  for (const MetricReport& r : a) {
    CHECK(r.rmse_existing >= 0.0);
    CHECK(r.mi_existing >= 0.0);
    CHECK(r.rmse_new >= 0.0);
    CHECK(r.mi_new >= 0.0);
    CHECK(r.runtime_s == 0.0);
  }
  CHECK(summarize(a).size() == 3);

  // Each cell is reproducible on its own from the shared split.
  const LabeledMultiTaskDataset ds = make_dataset(spec, 2);
  const DatasetSplit split = split_existing_new(ds, 9, 3, 2);
  MTConfig none = cfg;
  none.mode = TransferMode::none;
  const MetricReport single = evaluate_split(spec.name, split, none, 3, 2, opt);
  CHECK(single.rmse_existing == a[5].rmse_existing);
  CHECK(single.rmse_new == a[5].rmse_new);

  opt.record_runtime = true;
  opt.seeds = {1};
  opt.modes = {TransferMode::none};
  CHECK(compare_methods(spec, cfg, opt)[0].runtime_s > 0.0);
  opt.st_list.clear();
  CHECK_THROWS_AS(compare_methods(spec, cfg, opt), ConfigError);
}

TEST_CASE("evaluate_trained reports NaN for metrics that cannot be computed") {
  DatasetSpec spec;
  spec.n_tasks = 6;
  spec.samples_per_task = 3;
  const DatasetSplit split = split_existing_new(make_dataset(spec, 1), 6, 3, 1);
  MTConfig cfg;
  cfg.schedule.total_iters = 4;
  EvalOptions opt;
  const MetricReport r = evaluate_split(spec.name, split, cfg, 3, 1, opt);
  CHECK(std::isnan(r.rmse_existing));
  CHECK(std::isnan(r.rmse_new));
  std::ostringstream out;
  write_reports_csv({r}, out);
  CHECK(out.str().find(",nan,") != std::string::npos);
}

TEST_CASE("multi-task transfer beats independent models on small saddle data") {
  DatasetSpec spec;
  spec.n_tasks = 100;
  spec.samples_per_task = 20;
  MTConfig cfg;
  cfg.schedule.total_iters = 80;
  const LabeledMultiTaskDataset ds = make_dataset(spec, 1);
  const DatasetSplit split = split_existing_new(ds, 80, 3, 1);
  EvalOptions opt;
  opt.evaluate_new = false;
  cfg.mode = TransferMode::both;
  const MetricReport both = evaluate_split(spec.name, split, cfg, 3, 1, opt);
  cfg.mode = TransferMode::none;
  const MetricReport none = evaluate_split(spec.name, split, cfg, 3, 1, opt);
  CAPTURE(both.rmse_existing);
  CAPTURE(none.rmse_existing);
  CHECK(both.rmse_existing < none.rmse_existing);
  CHECK(both.mi_existing > none.mi_existing);
}

TEST_CASE("regression helpers") {
  const Vector plain = regression_inputs(0.8, false, 5);
  CHECK(plain[0] == -1.0);
  CHECK(plain[4] == 1.0);
  const Vector shifted = regression_inputs(0.8, true, 5);
  CHECK(shifted[0] == doctest::Approx(-0.6));
  CHECK(shifted[4] == doctest::Approx(1.4));

  const LabeledMultiTaskDataset ds =
      gen_regression(RegressionKind::plain, 4, 6, RegressionParams{}, 1);
  const RegressionProblem p = regression_problem(ds, false);
  CHECK(p.data.dim_visible() == 1);
  REQUIRE(p.initial_Z.has_value());
  CHECK(*p.initial_Z == ds.data.X.col(0));
  const RegressionProblem q = regression_problem(ds, true);
  CHECK(q.data.dim_visible() == 2);
  CHECK_FALSE(q.initial_Z.has_value());

  MTConfig cfg;
  CHECK_THROWS_AS(train_regression(p, cfg, 1), ConfigError);
  cfg.lower_basis = {1, 4};
  cfg.schedule.total_iters = 5;
  const MTResult r = train_regression(p, cfg, 1);
  CHECK(r.state.Z == *p.initial_Z);
  const double mse = regression_mse(r, ds, RegressionParams{}, true, false);
  CHECK(std::isfinite(mse));
  CHECK(mse >= 0.0);
}

TEST_CASE("predict_regression matches the decoded curve") {
  // s = t on both coordinates: a model mapping z to (z, z).
  MTResult trained;
  trained.mode = TransferMode::none;
  trained.model.lower_basis = {1, 1};
  trained.model.higher_basis = {1, 0};
  trained.state.U = Matrix::Zero(1, 1);
  Matrix v = Matrix::Zero(2, 2);
  v(1, 0) = 1.0 / std::sqrt(1.5);
  v(1, 1) = 1.0 / std::sqrt(1.5);
  trained.state.V_stack.push_back(v);
  Vector t(3);
  t << -0.5, 0.0, 0.75;
  const Vector s = predict_regression(trained, 0, t, false);
  for (int p = 0; p < 3; ++p) CHECK(std::abs(s[p] - t[p]) <= 2.0 / 400 + 1e-12);
  const Vector sl = predict_regression(trained, 0, t, true);
  for (int p = 0; p < 3; ++p) CHECK(sl[p] == doctest::Approx(t[p]).epsilon(1e-14));
}
