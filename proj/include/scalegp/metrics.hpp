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

#include "scalegp/types.hpp"

namespace scalegp {

/// Standardized mean squared error: sum (y - mu)^2 / (n* var(y_train)).
double smse(const VectorXd& y_true, const VectorXd& mu, double y_train_var);

/// Mean standardized log loss against the trivial N(train_mean, train_var)
/// predictor. `var_observed` must include the noise variance.
double msll(const VectorXd& y_true, const VectorXd& mu, const VectorXd& var_observed,
            double y_train_mean, double y_train_var);

}  // namespace scalegp
