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

#include "scalegp/metrics.hpp"

#include <cmath>

namespace scalegp {

double smse(const VectorXd& y_true, const VectorXd& mu, double y_train_var) {
  if (y_true.size() != mu.size()) throw ContractViolation("smse: length mismatch");
  if (y_true.size() == 0) throw ContractViolation("smse: empty input");
  if (!(y_train_var > 0)) throw ContractViolation("smse: training variance must be positive");
  return (y_true - mu).squaredNorm() / (static_cast<double>(y_true.size()) * y_train_var);
}

double msll(const VectorXd& y_true, const VectorXd& mu, const VectorXd& var_observed,
            double y_train_mean, double y_train_var) {
  if (y_true.size() != mu.size() || y_true.size() != var_observed.size())
    throw ContractViolation("msll: length mismatch");
  if (y_true.size() == 0) throw ContractViolation("msll: empty input");
  if (!(y_train_var > 0)) throw ContractViolation("msll: training variance must be positive");
  if (!(var_observed.array() > 0).all())
    throw ContractViolation("msll: predictive variances must be positive");
  double total = 0;
  for (Index j = 0; j < y_true.size(); ++j) {
    const double r0 = y_true(j) - y_train_mean;
    const double r = y_true(j) - mu(j);
    const double log_trivial = -0.5 * (std::log(2 * M_PI * y_train_var) + r0 * r0 / y_train_var);
    const double log_model = -0.5 * (std::log(2 * M_PI * var_observed(j)) + r * r / var_observed(j));
    total += log_trivial - log_model;
  }
  return total / static_cast<double>(y_true.size());
}

}  // namespace scalegp
