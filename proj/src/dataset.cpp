#include "dualgp/dataset.hpp"

#include "dualgp/error.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

namespace dualgp {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\"");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_row(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

double column_scale(const Eigen::Ref<const VectorXd>& c, double mean) {
  if (c.size() < 2) return 1.0;
  const double sd = std::sqrt((c.array() - mean).square().sum() / static_cast<double>(c.size() - 1));
  return sd > 0.0 ? sd : 1.0;
}

}  // namespace

std::string to_string(Task t) {
  return t == Task::Regression ? "regression" : "classification";
}

Task parse_task(std::string_view name) {
  if (name == "reg" || name == "regression") return Task::Regression;
  if (name == "cls" || name == "classification") return Task::Classification;
  throw InvalidArgument("unknown task '" + std::string(name) + "' (expected reg or cls)");
}

Normalization Normalization::identity(Eigen::Index d) {
  return {VectorXd::Zero(d), VectorXd::Ones(d), 0.0, 1.0};
}

Dataset Dataset::subset(const std::vector<Eigen::Index>& rows) const {
  Dataset out;
  out.name = name;
  out.task = task;
  out.columns = columns;
  out.norm = norm;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (rows[k] < 0 || rows[k] >= X.rows()) throw InvalidArgument("subset: row index out of range");
    out.X.row(static_cast<Eigen::Index>(k)) = X.row(rows[k]);
    out.y(static_cast<Eigen::Index>(k)) = y(rows[k]);
  }
  return out;
}

MatrixXd Dataset::raw_X() const {
  return (X.array().rowwise() * norm.x_scale.transpose().array()).rowwise() +
         norm.x_mean.transpose().array();
}

VectorXd Dataset::raw_y() const {
  return (y.array() * norm.y_scale + norm.y_mean).matrix();
}

void standardize(Dataset& data) {
  const Eigen::Index d = data.dim();
  data.norm = Normalization::identity(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const double mu = data.X.col(j).mean();
    const double sc = column_scale(data.X.col(j), mu);
    data.norm.x_mean(j) = mu;
    data.norm.x_scale(j) = sc;
    data.X.col(j) = (data.X.col(j).array() - mu) / sc;
  }
  if (data.task == Task::Regression && data.size() > 0) {
    const double mu = data.y.mean();
    const double sc = column_scale(data.y, mu);
    data.norm.y_mean = mu;
    data.norm.y_scale = sc;
    data.y = (data.y.array() - mu) / sc;
  }
}

void apply_normalization(Dataset& data, const Normalization& norm) {
  if (norm.x_mean.size() != data.dim()) throw DimensionMismatch("normalization and data disagree in d");
  data.X = ((data.X.rowwise() - norm.x_mean.transpose()).array().rowwise() /
            norm.x_scale.transpose().array())
               .matrix();
  if (data.task == Task::Regression) data.y = ((data.y.array() - norm.y_mean) / norm.y_scale).matrix();
  data.norm = norm;
}

Dataset load_csv(const std::string& path, Task task, bool normalize) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) {
      header = split_row(line);
      break;
    }
  }
  if (header.empty()) throw DataError("'" + path + "' is empty");
  if (header.size() < 2) throw DataError("'" + path + "' needs at least one input and a target column");

  std::vector<std::vector<double>> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_row(line);
    if (cells.size() != header.size()) {
      std::ostringstream os;
      os << path << ": row " << line_no << " has " << cells.size() << " cells, header has "
         << header.size();
      throw DataError(os.str());
    }
    std::vector<double> vals(cells.size());
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (!parse_double(cells[j], vals[j])) {
        std::ostringstream os;
        os << path << ": non-numeric value '" << cells[j] << "' at row " << line_no
           << ", column " << (j + 1) << " (" << header[j] << ")";
        throw DataError(os.str());
      }
    }
    if (task == Task::Classification && vals.back() != 0.0 && vals.back() != 1.0) {
      std::ostringstream os;
      os << path << ": label " << vals.back() << " at row " << line_no
         << " is not in {0,1}";
      throw DataError(os.str());
    }
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw DataError("'" + path + "' has a header but no data rows");

  Dataset data;
  data.name = path;
  data.task = task;
  data.columns = header;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(header.size() - 1);
  data.X.resize(n, d);
  data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < d; ++j) data.X(i, j) = r[static_cast<std::size_t>(j)];
    data.y(i) = r.back();
  }
  data.norm = Normalization::identity(d);
  if (normalize) standardize(data);
  return data;
}

void write_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  std::vector<std::string> cols = data.columns;
  if (cols.size() != static_cast<std::size_t>(data.dim() + 1)) {
    cols.clear();
    for (Eigen::Index j = 0; j < data.dim(); ++j) cols.push_back("x" + std::to_string(j));
    cols.emplace_back("y");
  }
  for (std::size_t j = 0; j < cols.size(); ++j) out << (j ? "," : "") << cols[j];
  out << '\n' << std::setprecision(17);
  const MatrixXd X = data.raw_X();
  const VectorXd y = data.raw_y();
  for (Eigen::Index i = 0; i < data.size(); ++i) {
    for (Eigen::Index j = 0; j < data.dim(); ++j) out << X(i, j) << ',';
    out << y(i) << '\n';
  }
}

Dataset gen_sinc_classification(Eigen::Index n, std::uint64_t seed) {
  if (n < 2) throw InvalidArgument("gen_sinc_classification: n must be at least 2");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-3.0 * std::numbers::pi, 3.0 * std::numbers::pi);
  std::normal_distribution<double> noise(0.0, kSincNoiseStd);
  Dataset data;
  data.name = "sinc";
  data.task = Task::Classification;
  data.columns = {"x", "y"};
  data.X.resize(n, 1);
  data.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = ux(rng);
    const double s = x == 0.0 ? 1.0 : std::sin(x) / x;
    data.X(i, 0) = x;
    data.y(i) = s + noise(rng) > 0.0 ? 1.0 : 0.0;
  }
  data.norm = Normalization::identity(1);
  return data;
}

std::vector<Fold> kfold(Eigen::Index n, int k, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("kfold: need at least 2 folds");
  if (k > n) throw InvalidArgument("kfold: more folds than data points");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Fold> folds(static_cast<std::size_t>(k));
  const Eigen::Index base = n / k;
  const Eigen::Index extra = n % k;
  Eigen::Index start = 0;
  for (int f = 0; f < k; ++f) {
    const Eigen::Index len = base + (f < extra ? 1 : 0);
    auto& fold = folds[static_cast<std::size_t>(f)];
    fold.test.assign(perm.begin() + start, perm.begin() + start + len);
    for (Eigen::Index i = 0; i < n; ++i)
      if (i < start || i >= start + len) fold.train.push_back(perm[static_cast<std::size_t>(i)]);
    std::sort(fold.test.begin(), fold.test.end());
    std::sort(fold.train.begin(), fold.train.end());
    start += len;
  }
  return folds;
}

}  // namespace dualgp
