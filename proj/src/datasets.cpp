#include "mtksmm/datasets.hpp"

#include "mtksmm/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <sstream>

namespace mtksmm {

namespace {

constexpr int kShapeVisibleDim = 10;

// Shared generator for the 2-D sample latent, 1-D task latent families.
template <typename Map>
LabeledMultiTaskDataset generate_family(int n_tasks, int samples_per_task, double sigma,
                                        std::uint64_t seed, Map&& map) {
  if (n_tasks < 1 || samples_per_task < 1) {
    throw ConfigError("generator: n_tasks and samples_per_task must be >= 1");
  }
  if (!(sigma >= 0.0)) throw ConfigError("generator: sigma must be >= 0");
  LabeledMultiTaskDataset ds;
  const int total = n_tasks * samples_per_task;
  ds.data.X.resize(total, kShapeVisibleDim);
  ds.data.task_of.resize(total);
  ds.data.num_tasks = n_tasks;
  ds.true_z.resize(total, 2);
  ds.true_u.resize(n_tasks, 1);
  for (int i = 0; i < n_tasks; ++i) {
    RandomStream task_rs(seed, StreamTag::task_truth, static_cast<std::uint64_t>(i));
    const double u = task_rs.uniform(-1.0, 1.0);
    ds.true_u(i, 0) = u;
    ds.task_labels.push_back(std::to_string(i));
    for (int j = 0; j < samples_per_task; ++j) {
      RandomStream rs(seed, StreamTag::sample_draw, static_cast<std::uint64_t>(i),
                      static_cast<std::uint64_t>(j));
      Vector z(2);
      z[0] = rs.uniform(-1.0, 1.0);
      z[1] = rs.uniform(-1.0, 1.0);
      Vector x = map(z, u);
      for (int d = 0; d < kShapeVisibleDim; ++d) x[d] += sigma * rs.normal();
      const int n = i * samples_per_task + j;
      ds.data.X.row(n) = x.transpose();
      ds.data.task_of[n] = i;
      ds.true_z.row(n) = z.transpose();
    }
  }
  return ds;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (char ch : line) {
    if (ch == '"') {
      quoted = !quoted;
    } else if (ch == ',' && !quoted) {
      out.push_back(trim(cell));
      cell.clear();
    } else {
      cell.push_back(ch);
    }
  }
  out.push_back(trim(cell));
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

Vector saddle_point(const Eigen::Ref<const Vector>& z, double u) {
  Vector x = Vector::Zero(kShapeVisibleDim);
  x[0] = z[0];
  x[1] = z[1];
  x[2] = z[0] * z[0] - z[1] * z[1] + u;
  return x;
}

ShapeKind shape_kind_from_string(const std::string& name) {
  if (name == "convex") return ShapeKind::convex;
  if (name == "triangle") return ShapeKind::triangle;
  if (name == "sine") return ShapeKind::sine;
  throw ConfigError("unknown shape kind '" + name + "' (expected convex, triangle or sine)");
}

Vector shape_point(ShapeKind kind, const Eigen::Ref<const Vector>& z, double u) {
  Vector x = Vector::Zero(kShapeVisibleDim);
  switch (kind) {
    case ShapeKind::convex:
      x[0] = z[0];
      x[1] = z[1];
      x[2] = z[0] * z[0] + z[1] * z[1] + u;
      break;
    case ShapeKind::sine:
      x[0] = z[0];
      x[1] = z[1];
      x[2] = u * std::sin(std::numbers::pi * z[0]);
      break;
    case ShapeKind::triangle: {
      // Fold the unit square onto the lower-left triangle, then map it onto an
      // equilateral triangle inscribed in the unit circle.
      double p1 = 0.5 * (z[0] + 1.0);
      double p2 = 0.5 * (z[1] + 1.0);
      if (p1 + p2 > 1.0) {
        const double q1 = 1.0 - p2;
        p2 = 1.0 - p1;
        p1 = q1;
      }
      const double pi = std::numbers::pi;
      const double ax = 0.0;
      const double ay = 1.0;
      const double bx = std::cos(7.0 * pi / 6.0);
      const double by = std::sin(7.0 * pi / 6.0);
      const double cx = std::cos(11.0 * pi / 6.0);
      const double cy = std::sin(11.0 * pi / 6.0);
      const double px = ax + p1 * (bx - ax) + p2 * (cx - ax);
      const double py = ay + p1 * (by - ay) + p2 * (cy - ay);
      const double theta = u * pi / 2.0;
      x[0] = std::cos(theta) * px - std::sin(theta) * py;
      x[1] = std::sin(theta) * px + std::cos(theta) * py;
      break;
    }
  }
  return x;
}

LabeledMultiTaskDataset gen_saddle(int n_tasks, int samples_per_task, double sigma,
                                   std::uint64_t seed) {
  return generate_family(n_tasks, samples_per_task, sigma, seed,
                         [](const Vector& z, double u) { return saddle_point(z, u); });
}

LabeledMultiTaskDataset gen_shape_family(ShapeKind kind, int n_tasks, int samples_per_task,
                                         double sigma, std::uint64_t seed) {
  return generate_family(n_tasks, samples_per_task, sigma, seed,
                         [kind](const Vector& z, double u) { return shape_point(kind, z, u); });
}

double regression_curve(const RegressionParams& p, double t, double u) {
  return p.a * u * std::sin(t + p.b * u) + p.c * u * t + p.d * u;
}

LabeledMultiTaskDataset gen_regression(RegressionKind kind, int n_tasks, int samples_per_task,
                                       const RegressionParams& params, std::uint64_t seed) {
  if (n_tasks < 1 || samples_per_task < 1) {
    throw ConfigError("gen_regression: n_tasks and samples_per_task must be >= 1");
  }
  for (double v : {params.a, params.b, params.c, params.d, params.sigma}) {
    if (!std::isfinite(v)) throw ConfigError("gen_regression: parameters must be finite");
  }
  LabeledMultiTaskDataset ds;
  const int total = n_tasks * samples_per_task;
  ds.data.X.resize(total, 2);
  ds.data.task_of.resize(total);
  ds.data.num_tasks = n_tasks;
  ds.true_z.resize(total, 1);
  ds.true_u.resize(n_tasks, 1);
  for (int i = 0; i < n_tasks; ++i) {
    RandomStream task_rs(seed, StreamTag::task_truth, static_cast<std::uint64_t>(i));
    const double u = task_rs.uniform(-1.0, 1.0);
    ds.true_u(i, 0) = u;
    ds.task_labels.push_back(std::to_string(i));
    const double shift = kind == RegressionKind::domain_shift ? 0.5 * u : 0.0;
    for (int j = 0; j < samples_per_task; ++j) {
      RandomStream rs(seed, StreamTag::sample_draw, static_cast<std::uint64_t>(i),
                      static_cast<std::uint64_t>(j));
      const double t = rs.uniform(-1.0 + shift, 1.0 + shift);
      double s = regression_curve(params, t, u);
      if (params.sigma > 0.0) s += params.sigma * rs.normal();
      const int n = i * samples_per_task + j;
      ds.data.X(n, 0) = t;
      ds.data.X(n, 1) = s;
      ds.data.task_of[n] = i;
      ds.true_z(n, 0) = t;
    }
  }
  return ds;
}

LabeledMultiTaskDataset load_csv(const std::string& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open CSV file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": missing header row");
  const std::vector<std::string> header = split_csv_line(line);
  std::map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < header.size(); ++c) index[header[c]] = c;
  auto column = [&](const std::string& name) {
    const auto it = index.find(name);
    if (it == index.end()) throw ParseError(path + ": unknown column '" + name + "'");
    return it->second;
  };
  if (schema.value_columns.empty()) throw ParseError(path + ": no value columns selected");
  std::vector<std::size_t> value_idx;
  for (const auto& c : schema.value_columns) value_idx.push_back(column(c));
  const std::size_t task_idx = column(schema.task_column);
  std::vector<std::size_t> z_idx;
  std::vector<std::size_t> u_idx;
  for (const auto& c : schema.truth_z_columns) z_idx.push_back(column(c));
  for (const auto& c : schema.truth_u_columns) u_idx.push_back(column(c));

  std::vector<std::vector<double>> values;
  std::vector<std::vector<double>> zs;
  std::vector<std::vector<double>> us;
  std::vector<int> task_of;
  std::map<std::string, int> label_to_task;
  LabeledMultiTaskDataset ds;
  int row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const std::vector<std::string> cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ParseError(path + ": row " + std::to_string(row) + " has " +
                       std::to_string(cells.size()) + " cells, header has " +
                       std::to_string(header.size()));
    }
    auto numeric = [&](std::size_t c) {
      double v = 0.0;
      if (!parse_double(cells[c], v)) {
        throw ParseError(path + ": row " + std::to_string(row) + ", column '" + header[c] +
                         "': non-numeric value '" + cells[c] + "'");
      }
      return v;
    };
    std::vector<double> x;
    for (std::size_t c : value_idx) x.push_back(numeric(c));
    std::vector<double> z;
    for (std::size_t c : z_idx) z.push_back(numeric(c));
    std::vector<double> u;
    for (std::size_t c : u_idx) u.push_back(numeric(c));
    const std::string& label = cells[task_idx];
    auto [it, inserted] = label_to_task.try_emplace(label, static_cast<int>(ds.task_labels.size()));
    if (inserted) {
      ds.task_labels.push_back(label);
      us.push_back(u);
    }
    task_of.push_back(it->second);
    values.push_back(std::move(x));
    zs.push_back(std::move(z));
  }
  const auto n = static_cast<Eigen::Index>(values.size());
  ds.data.X.resize(n, static_cast<Eigen::Index>(value_idx.size()));
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < ds.data.X.cols(); ++c) ds.data.X(r, c) = values[r][c];
  }
  ds.data.task_of = std::move(task_of);
  ds.data.num_tasks = static_cast<int>(ds.task_labels.size());
  if (!z_idx.empty()) {
    ds.true_z.resize(n, static_cast<Eigen::Index>(z_idx.size()));
    for (Eigen::Index r = 0; r < n; ++r) {
      for (Eigen::Index c = 0; c < ds.true_z.cols(); ++c) ds.true_z(r, c) = zs[r][c];
    }
  }
  if (!u_idx.empty()) {
    ds.true_u.resize(ds.data.num_tasks, static_cast<Eigen::Index>(u_idx.size()));
    for (int i = 0; i < ds.data.num_tasks; ++i) {
      for (Eigen::Index c = 0; c < ds.true_u.cols(); ++c) ds.true_u(i, c) = us[i][c];
    }
  }
  return ds;
}

void export_csv(const LabeledMultiTaskDataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write CSV file '" + path + "'");
  out << "task";
  for (Eigen::Index d = 0; d < ds.data.X.cols(); ++d) out << ",x_" << d + 1;
  for (Eigen::Index d = 0; d < ds.true_z.cols(); ++d) out << ",true_z_" << d + 1;
  for (Eigen::Index d = 0; d < ds.true_u.cols(); ++d) out << ",true_u_" << d + 1;
  out << '\n';
  for (Eigen::Index n = 0; n < ds.data.X.rows(); ++n) {
    const int task = ds.data.task_of[n];
    out << (task < static_cast<int>(ds.task_labels.size()) ? ds.task_labels[task]
                                                             : std::to_string(task));
    for (Eigen::Index d = 0; d < ds.data.X.cols(); ++d) out << ',' << format_double(ds.data.X(n, d));
    for (Eigen::Index d = 0; d < ds.true_z.cols(); ++d) out << ',' << format_double(ds.true_z(n, d));
    for (Eigen::Index d = 0; d < ds.true_u.cols(); ++d) out << ',' << format_double(ds.true_u(task, d));
    out << '\n';
  }
}

LabeledMultiTaskDataset subset(const LabeledMultiTaskDataset& ds, const std::vector<int>& task_ids,
                               const std::vector<std::vector<int>>& samples) {
  LabeledMultiTaskDataset out;
  std::size_t total = 0;
  for (const auto& s : samples) total += s.size();
  const auto n = static_cast<Eigen::Index>(total);
  out.data.X.resize(n, ds.data.X.cols());
  out.data.task_of.resize(total);
  out.data.num_tasks = static_cast<int>(task_ids.size());
  if (ds.true_z.size() > 0) out.true_z.resize(n, ds.true_z.cols());
  if (ds.true_u.size() > 0) out.true_u.resize(out.data.num_tasks, ds.true_u.cols());
  Eigen::Index row = 0;
  for (std::size_t k = 0; k < task_ids.size(); ++k) {
    const int orig = task_ids[k];
    out.task_labels.push_back(orig < static_cast<int>(ds.task_labels.size())
                                  ? ds.task_labels[orig]
                                  : std::to_string(orig));
    if (ds.true_u.size() > 0) out.true_u.row(static_cast<Eigen::Index>(k)) = ds.true_u.row(orig);
    for (int s : samples[k]) {
      out.data.X.row(row) = ds.data.X.row(s);
      out.data.task_of[row] = static_cast<int>(k);
      if (ds.true_z.size() > 0) out.true_z.row(row) = ds.true_z.row(s);
      ++row;
    }
  }
  return out;
}

DatasetSplit split_existing_new(const LabeledMultiTaskDataset& ds, int n_train_tasks,
                                int samples_per_task_train, std::uint64_t seed) {
  const int tasks = ds.data.num_tasks;
  if (n_train_tasks < 1 || n_train_tasks > tasks) {
    throw ConfigError("split: n_train_tasks=" + std::to_string(n_train_tasks) +
                      " must lie in [1, " + std::to_string(tasks) + "]");
  }
  if (samples_per_task_train < 1) throw ConfigError("split: samples_per_task_train must be >= 1");
  const auto members = ds.data.members();

  std::vector<int> order(tasks);
  for (int i = 0; i < tasks; ++i) order[i] = i;
  RandomStream rs(seed, StreamTag::task_split);
  for (int i = tasks - 1; i > 0; --i) {
    const int j = static_cast<int>(rs.next() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  DatasetSplit split;
  split.train_task_ids.assign(order.begin(), order.begin() + n_train_tasks);
  split.new_task_ids.assign(order.begin() + n_train_tasks, order.end());
  std::sort(split.train_task_ids.begin(), split.train_task_ids.end());
  std::sort(split.new_task_ids.begin(), split.new_task_ids.end());

  std::vector<std::vector<int>> train_samples;
  std::vector<std::vector<int>> test_samples;
  for (int task : split.train_task_ids) {
    std::vector<int> idx = members[task];
    if (static_cast<int>(idx.size()) < samples_per_task_train) {
      throw ConfigError("split: task " + std::to_string(task) + " has " +
                        std::to_string(idx.size()) + " samples, fewer than samples_per_task_train=" +
                        std::to_string(samples_per_task_train));
    }
    RandomStream trs(seed, StreamTag::task_split, static_cast<std::uint64_t>(task) + 1);
    for (int i = static_cast<int>(idx.size()) - 1; i > 0; --i) {
      const int j = static_cast<int>(trs.next() % static_cast<std::uint64_t>(i + 1));
      std::swap(idx[i], idx[j]);
    }
    std::vector<int> tr(idx.begin(), idx.begin() + samples_per_task_train);
    std::vector<int> te(idx.begin() + samples_per_task_train, idx.end());
    std::sort(tr.begin(), tr.end());
    std::sort(te.begin(), te.end());
    train_samples.push_back(std::move(tr));
    test_samples.push_back(std::move(te));
  }
  std::vector<std::vector<int>> new_samples;
  for (int task : split.new_task_ids) new_samples.push_back(members[task]);
  split.train = subset(ds, split.train_task_ids, train_samples);
  split.existing_test = subset(ds, split.train_task_ids, test_samples);
  split.new_tasks = subset(ds, split.new_task_ids, new_samples);
  return split;
}

}  // namespace mtksmm
