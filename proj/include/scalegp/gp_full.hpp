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

#include "scalegp/data.hpp"
#include "scalegp/linalg.hpp"
#include "scalegp/optimize.hpp"
#include "scalegp/types.hpp"

namespace scalegp {

inline constexpr Index kDefaultExactCap = 10000;

/// Exact GP conditioned on a dataset at fixed hyperparameters. Immutable once
/// built; prediction only reads it.
struct TrainedFullGP {
  Dataset dataset;
  Hyperparameters hp;
  JitteredCholesky<double> chol;  // of K_nn + sn2 I (+ jitter)
  VectorXd alpha;                 // (K_nn + sn2 I)^{-1} y
  double nlml{0};
  OptTrace trace;
  OptStatus status{OptStatus::gradient_converged};
};

/// Negative log marginal likelihood and its gradient in packed log-parameter
/// order (see Hyperparameters::pack).
ObjectiveEvaluation full_gp_nlml(const Dataset& data, const Hyperparameters& hp,
                                 Index exact_cap = kDefaultExactCap);

/// Factorizes the training covariance at `hp` without optimizing.
TrainedFullGP condition_full_gp(const Dataset& data, const Hyperparameters& hp,
                                Index exact_cap = kDefaultExactCap);

/// Minimizes the NLML from `hp0`; the returned model never has a larger NLML
/// than the start.
TrainedFullGP fit_full_gp(const Dataset& data, const Hyperparameters& hp0,
                          const DeterministicConfig& config = {},
                          Index exact_cap = kDefaultExactCap);

PredictiveDistribution predict(const TrainedFullGP& model, const MatrixXd& x_star,
                               Flavor flavor = Flavor::latent);

}  // namespace scalegp
