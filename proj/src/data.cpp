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

#include "scalegp/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace scalegp {

namespace {

// Splits one CSV record; double-quoted fields may contain commas and "" escapes.
std::vector<std::string> split_record(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool parse_double(const std::string& text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), out);
  return ec == std::errc() && ptr == t.data() + t.size() && std::isfinite(out);
}

double sample_std(const Eigen::Ref<const VectorXd>& v, double mean) {
  if (v.size() < 2) return 0.0;
  return std::sqrt((v.array() - mean).square().sum() / static_cast<double>(v.size() - 1));
}

}  // namespace

MatrixXd NormStats::apply(const MatrixXd& raw_x) const {
  MatrixXd out(raw_x.rows(), static_cast<Index>(kept_columns.size()));
  for (std::size_t k = 0; k < kept_columns.size(); ++k) {
    const Index c = kept_columns[k];
    if (c >= raw_x.cols()) throw ContractViolation("NormStats::apply: input has too few columns");
    out.col(k) = (raw_x.col(c).array() - x_mean(k)) / x_std(k);
  }
  return out;
}

VectorXd NormStats::apply_y(const VectorXd& raw_y) const {
  return ((raw_y.array() - y_mean) / y_std).matrix();
}

VectorXd NormStats::restore_y(const VectorXd& y) const {
  return (y.array() * y_std + y_mean).matrix();
}

VectorXd NormStats::restore_variance(const VectorXd& var) const {
  return (var.array() * y_std * y_std).matrix();
}

void Dataset::validate() const {
  if (X.rows() < 1 || X.cols() < 1) throw ContractViolation("dataset needs n >= 1 and d >= 1");
  if (y.size() != X.rows()) throw ContractViolation("dataset: X and y have different row counts");
  if (!X.allFinite() || !y.allFinite()) throw ContractViolation("dataset contains non-finite values");
}

Dataset Dataset::subset(const std::vector<Index>& rows) const {
  Dataset out;
  out.X.resize(static_cast<Index>(rows.size()), X.cols());
  out.y.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.X.row(static_cast<Index>(i)) = X.row(rows[i]);
    out.y(static_cast<Index>(i)) = y(rows[i]);
  }
  out.norm = norm;
  out.column_names = column_names;
  return out;
}

namespace {

// `required` is checked against the header before any row is parsed.
CsvTable read_table(const std::string& path, const std::string* required) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("'" + path + "' is empty");
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  CsvTable table;
  table.header = split_record(line);
  for (auto& h : table.header) h = trim(h);
  const std::size_t width = table.header.size();
  if (required && std::find(table.header.begin(), table.header.end(), *required) == table.header.end())
    throw ContractViolation("target column '" + *required + "' not found in '" + path + "'");

  std::vector<double> cells;
  Index n = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split_record(line);
    if (fields.size() != width)
      throw IoError(path + ": row " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                    " fields, expected " + std::to_string(width));
    for (std::size_t c = 0; c < width; ++c) {
      double v = 0;
      if (!parse_double(fields[c], v))
        throw IoError(path + ": non-numeric cell at row " + std::to_string(line_no) + ", column " +
                      std::to_string(c + 1) + " ('" + table.header[c] + "'): '" + fields[c] + "'");
      cells.push_back(v);
    }
    ++n;
  }
  if (n < 1) throw IoError(path + ": no data rows");
  table.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      cells.data(), n, static_cast<Index>(width));
  return table;
}

}  // namespace

CsvTable read_csv(const std::string& path) { return read_table(path, nullptr); }

Dataset load_csv(const std::string& path, const std::string& target_column) {
  const CsvTable table = read_table(path, &target_column);
  const auto it = std::find(table.header.begin(), table.header.end(), target_column);
  if (table.values.rows() < 2) throw IoError(path + ": need at least 2 data rows");
  const auto target = static_cast<Index>(it - table.header.begin());

  Dataset data;
  data.y = table.values.col(target);
  data.X.resize(table.values.rows(), table.values.cols() - 1);
  Index col = 0;
  for (Index c = 0; c < table.values.cols(); ++c) {
    if (c == target) continue;
    data.X.col(col++) = table.values.col(c);
    data.column_names.push_back(table.header[static_cast<std::size_t>(c)]);
  }
  data.validate();
  return data;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const MatrixXd& columns) {
  if (static_cast<Index>(header.size()) != columns.cols())
    throw ContractViolation("write_csv: header/column count mismatch");
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << '\n' << std::setprecision(17);
  for (Index i = 0; i < columns.rows(); ++i) {
    for (Index c = 0; c < columns.cols(); ++c) out << (c ? "," : "") << columns(i, c);
    out << '\n';
  }
  if (!out) throw IoError("failed while writing '" + path + "'");
}

Dataset normalize(const Dataset& data) {
  data.validate();
  if (data.size() < 2) throw ContractViolation("normalize: need at least two rows");
  NormStats stats;
  stats.y_mean = data.y.mean();
  stats.y_std = sample_std(data.y, stats.y_mean);
  if (!(stats.y_std > 0)) throw ContractViolation("normalize: target has zero variance");

  std::vector<double> means, stds;
  for (Index c = 0; c < data.dim(); ++c) {
    const double mu = data.X.col(c).mean();
    const double sd = sample_std(data.X.col(c), mu);
    if (sd > 0) {
      stats.kept_columns.push_back(c);
      means.push_back(mu);
      stds.push_back(sd);
    } else {
      stats.dropped_columns.push_back(c);
    }
  }
  if (stats.kept_columns.empty()) throw ContractViolation("normalize: every input column is constant");
  stats.x_mean = Eigen::Map<Eigen::RowVectorXd>(means.data(), static_cast<Index>(means.size()));
  stats.x_std = Eigen::Map<Eigen::RowVectorXd>(stds.data(), static_cast<Index>(stds.size()));

  Dataset out;
  out.X = stats.apply(data.X);
  out.y = stats.apply_y(data.y);
  for (Index c : stats.kept_columns)
    if (c < static_cast<Index>(data.column_names.size())) out.column_names.push_back(data.column_names[c]);
  out.norm = std::move(stats);
  return out;
}

SplitResult split(const Dataset& data, double test_fraction, std::uint64_t seed, bool standardize) {
  data.validate();
  if (!(test_fraction > 0 && test_fraction < 1))
    throw ContractViolation("split: test fraction must lie in (0, 1)");
  const Index n = data.size();
  const auto n_test = static_cast<Index>(std::llround(test_fraction * static_cast<double>(n)));
  if (n_test < 1 || n - n_test < 1)
    throw ContractViolation("split: fraction " + std::to_string(test_fraction) + " of " +
                            std::to_string(n) + " rows leaves an empty side");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  SplitResult out;
  out.test_rows.assign(order.begin(), order.begin() + n_test);
  out.train_rows.assign(order.begin() + n_test, order.end());
  std::sort(out.test_rows.begin(), out.test_rows.end());
  std::sort(out.train_rows.begin(), out.train_rows.end());

  Dataset train = data.subset(out.train_rows);
  Dataset test = data.subset(out.test_rows);
  if (standardize) {
    train = normalize(train);
    test.X = train.norm->apply(test.X);
    test.y = train.norm->apply_y(test.y);
    test.norm = train.norm;
    test.column_names = train.column_names;
  }
  out.train = std::move(train);
  out.test = std::move(test);
  return out;
}

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

SincData generate_sinc(const SincConfig& config) {
  if (!(config.train_lo < config.train_hi) || !(config.test_lo < config.test_hi))
    throw ContractViolation("generate_sinc: ranges must be ordered");
  if (config.noise_var < 0) throw ContractViolation("generate_sinc: noise variance must be >= 0");
  if (config.n_train < 1 || config.n_test < 1)
    throw ContractViolation("generate_sinc: need at least one training and one test point");

  std::mt19937_64 rng(config.seed);
  std::uniform_real_distribution<double> uniform(config.train_lo, config.train_hi);
  std::normal_distribution<double> noise(0.0, std::sqrt(config.noise_var));

  SincData out;
  out.train.X.resize(config.n_train, 1);
  out.train.y.resize(config.n_train);
  for (Index i = 0; i < config.n_train; ++i) {
    const double x = uniform(rng);
    out.train.X(i, 0) = x;
    out.train.y(i) = sinc(x) + (config.noise_var > 0 ? noise(rng) : 0.0);
  }
  out.test.X.resize(config.n_test, 1);
  out.test.y.resize(config.n_test);
  out.test_clean.resize(config.n_test);
  for (Index i = 0; i < config.n_test; ++i) {
    const double t = config.n_test == 1 ? 0.5 : static_cast<double>(i) / static_cast<double>(config.n_test - 1);
    const double x = config.test_lo + t * (config.test_hi - config.test_lo);
    out.test.X(i, 0) = x;
    out.test_clean(i) = sinc(x);
    out.test.y(i) = out.test_clean(i) + (config.noise_var > 0 ? noise(rng) : 0.0);
  }
  out.train.column_names = {"x"};
  out.test.column_names = {"x"};
  return out;
}

}  // namespace scalegp
