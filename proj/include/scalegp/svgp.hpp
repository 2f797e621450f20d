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

#include <optional>

#include "scalegp/data.hpp"
#include "scalegp/linalg.hpp"
#include "scalegp/optimize.hpp"
#include "scalegp/sparse_gp.hpp"
#include "scalegp/types.hpp"

namespace scalegp {

/// q(f_m) = N(mean, L L^T) with L lower triangular and a positive diagonal.
struct VariationalState {
  VectorXd mean;
  MatrixXd cov_factor;

  Index size() const { return mean.size(); }
  MatrixXd covariance() const { return cov_factor * cov_factor.transpose(); }
  void validate(Index m) const;

  /// Unconstrained packing: mean, then the lower triangle column by column
  /// with the diagonal stored as its log.
  VectorXd pack() const;
  static VariationalState unpack(const Eigen::Ref<const VectorXd>& v, Index m);
  static Index packed_size(Index m) { return m + m * (m + 1) / 2; }
};

/*
 * Uncollapsed bound
 *
 *   F_q = (n_total / b) sum_{i in batch} E_q[log N(y_i | f_i, sn2)] - KL(q(f_m) || p(f_m))
 *
 * with the per-point expectation in closed form:
 *
 *   E_q[log N(y_i | f_i, sn2)] = log N(y_i | mu_i, sn2) - v_i / (2 sn2)
 *   mu_i = k_im K_mm^{-1} m,   v_i = k_ii - Q_ii + k_im K_mm^{-1} S K_mm^{-1} k_mi.
 *
 * `batch` holds the minibatch rows; `n_total` is the full training size.
 */
double elbo(const Dataset& batch, Index n_total, const MatrixXd& z, const Hyperparameters& hp,
            const VariationalState& state);

/// Bound and gradient, packed as [hyperparameters, Z row-major (if
/// `z_trainable`), VariationalState::pack()].
ObjectiveEvaluation elbo_with_gradient(const Dataset& batch, Index n_total, const MatrixXd& z,
                                       const Hyperparameters& hp, const VariationalState& state,
                                       bool z_trainable);

/// The bound-maximizing q(f_m) for the full dataset:
/// mean = K_mm Sigma K_mn y / sn2, S = K_mm Sigma K_mm, Sigma = (K_mm + K_mn K_nm / sn2)^{-1}.
VariationalState optimal_variational_state(const Dataset& data, const MatrixXd& z, const Hyperparameters& hp);

struct SvgpModel {
  Dataset data;
  InducingSet inducing;
  Hyperparameters hp;
  VariationalState state;
  JitteredCholesky<double> kmm;
  SvgpConfig config;
  OptTrace trace;
};

/// Wraps fixed parameters into a predictor.
SvgpModel make_svgp_model(const Dataset& data, const InducingSet& inducing, const Hyperparameters& hp,
                          const VariationalState& state);

/// Minibatch stochastic ascent on (hp, Z, q) jointly. Unless an initial state
/// is supplied q starts at the optimum for (hp0, Z0).
SvgpModel fit_svgp(const Dataset& data, const InducingSet& z0, const Hyperparameters& hp0,
                   const SvgpConfig& config, std::optional<VariationalState> initial = std::nullopt);

/// mean = k_*m K_mm^{-1} m, var = k_** - Q_** + k_*m K_mm^{-1} S K_mm^{-1} k_m*.
PredictiveDistribution predict(const SvgpModel& model, const MatrixXd& x_star, Flavor flavor = Flavor::latent);

}  // namespace scalegp
