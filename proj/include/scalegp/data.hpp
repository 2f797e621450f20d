// Copyright 2026 The scalegp Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scalegp/types.hpp"

namespace scalegp {

/// Per-column standardization learned from a training set.
struct NormStats {
  Eigen::RowVectorXd x_mean;
  Eigen::RowVectorXd x_std;
  double y_mean{0};
  double y_std{1};
  std::vector<Index> kept_columns;     // columns of the raw input that survive
  std::vector<Index> dropped_columns;  // zero-variance columns removed

  MatrixXd apply(const MatrixXd& raw_x) const;
  VectorXd apply_y(const VectorXd& raw_y) const;
  VectorXd restore_y(const VectorXd& y) const;
  VectorXd restore_variance(const VectorXd& var) const;
};

struct Dataset {
  MatrixXd X;
  VectorXd y;
  std::optional<NormStats> norm;
  std::vector<std::string> column_names;

  Index size() const { return X.rows(); }
  Index dim() const { return X.cols(); }

  /// Throws ContractViolation unless n >= 1, d >= 1, shapes agree and all entries are finite.
  void validate() const;
  Dataset subset(const std::vector<Index>& rows) const;
};

struct CsvTable {
  std::vector<std::string> header;
  MatrixXd values;  // rows x header.size()
};

/// Numeric CSV with a header row and at least one data row.
CsvTable read_csv(const std::string& path);

/// Reads a numeric CSV with a header row; `target_column` becomes y, the rest X.
Dataset load_csv(const std::string& path, const std::string& target_column);

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const MatrixXd& columns);

/// Standardizes every input column and the target with sample (n-1) statistics.
/// Constant input columns are dropped and listed in NormStats::dropped_columns.
Dataset normalize(const Dataset& data);

struct SplitResult {
  Dataset train;
  Dataset test;
  std::vector<Index> train_rows;
  std::vector<Index> test_rows;
};

/// Random disjoint split; when `standardize` is set, statistics come from the
/// training part only and are applied to both parts.
SplitResult split(const Dataset& data, double test_fraction, std::uint64_t seed,
                  bool standardize = true);

struct SincConfig {
  Index n_train{120};
  Index n_test{300};
  double train_lo{-4}, train_hi{4};
  double test_lo{-7}, test_hi{7};
  double noise_var{0.04};
  std::uint64_t seed{0};
};

struct SincData {
  Dataset train;
  Dataset test;          // noisy targets
  VectorXd test_clean;   // noiseless targets at the same inputs
};

/// sin(pi x) / (pi x), equal to 1 at the origin.
double sinc(double x);

/// Training inputs uniform on the training range, test inputs evenly spaced on
/// the test range; both carry Gaussian noise of variance `noise_var`.
SincData generate_sinc(const SincConfig& config);

}  // namespace scalegp
