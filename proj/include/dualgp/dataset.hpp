#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dualgp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Task { Regression, Classification };

std::string to_string(Task t);
/// Accepts "reg"/"regression" and "cls"/"classification".
Task parse_task(std::string_view name);

/// Per-column affine map applied at load time: stored = (raw - mean) / scale.
struct Normalization {
  VectorXd x_mean;
  VectorXd x_scale;
  double y_mean = 0.0;
  double y_scale = 1.0;

  static Normalization identity(Eigen::Index d);
};

struct Dataset {
  std::string name;
  Task task = Task::Regression;
  std::vector<std::string> columns;  // input names, then the target name
  MatrixXd X;
  VectorXd y;
  Normalization norm;

  Eigen::Index size() const { return X.rows(); }
  Eigen::Index dim() const { return X.cols(); }
  Dataset subset(const std::vector<Eigen::Index>& rows) const;
  MatrixXd raw_X() const;
  VectorXd raw_y() const;
};

/// Header row, numeric cells, target in the last column. Inputs are standardized;
/// regression targets too. Throws DataError naming row and column on bad cells.
Dataset load_csv(const std::string& path, Task task, bool normalize = true);

/// Writes raw (de-normalized) values with the dataset's header.
void write_csv(const std::string& path, const Dataset& data);

/// Standardizes X (and y for regression) in place from its own statistics.
void standardize(Dataset& data);

/// Maps raw values through an existing normalization (e.g. the training set's).
void apply_normalization(Dataset& data, const Normalization& norm);

/// x ~ U[-3 pi, 3 pi], y = 1[sinc(x) + eps > 0], eps ~ N(0, 0.1^2). Not normalized.
Dataset gen_sinc_classification(Eigen::Index n, std::uint64_t seed);

inline constexpr double kSincNoiseStd = 0.1;

struct Fold {
  std::vector<Eigen::Index> train;
  std::vector<Eigen::Index> test;
};

/// Seeded shuffle split into k folds whose sizes differ by at most one.
std::vector<Fold> kfold(Eigen::Index n, int k, std::uint64_t seed);

}  // namespace dualgp
