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

#include "scalegp/gp_full.hpp"

#include <cmath>
#include <limits>

#include "scalegp/kernel.hpp"

namespace scalegp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void check_inputs(const Dataset& data, const Hyperparameters& hp, Index exact_cap) {
  data.validate();
  if (data.dim() != hp.dim())
    throw ContractViolation("hyperparameter dimension " + std::to_string(hp.dim()) +
                            " does not match data dimension " + std::to_string(data.dim()));
  if (!hp.is_valid()) throw ContractViolation("hyperparameters are not finite");
  if (data.size() > exact_cap)
    throw ContractViolation("exact GP limited to " + std::to_string(exact_cap) + " points, got " +
                            std::to_string(data.size()));
}

JitteredCholesky<double> factor_training_covariance(const Dataset& data, const Hyperparameters& hp) {
  MatrixXd k = kernel_matrix(data.X, data.X, hp).values;
  k.diagonal().array() += hp.noise_var();
  return robust_cholesky<double>(k, hp.signal_var(), "K_nn + noise");
}

}  // namespace

ObjectiveEvaluation full_gp_nlml(const Dataset& data, const Hyperparameters& hp, Index exact_cap) {
  check_inputs(data, hp, exact_cap);
  const Index n = data.size();
  const Index d = hp.dim();
  const auto chol = factor_training_covariance(data, hp);
  const VectorXd alpha = chol.solve(data.y);

  ObjectiveEvaluation out;
  out.value = 0.5 * data.y.dot(alpha) + 0.5 * chol.log_det() + 0.5 * static_cast<double>(n) * kLog2Pi;

  // dNLML/dtheta = 0.5 tr((K^{-1} - alpha alpha^T) dK/dtheta)
  MatrixXd w = chol.solve(MatrixXd::Identity(n, n));
  w.noalias() -= alpha * alpha.transpose();
  const auto c = contract_kernel_gradient<double>(data.X, data.X, hp, 0.5 * w, false);
  const double half_trace = 0.5 * w.trace();

  out.gradient.resize(hp.packed_size());
  out.gradient.head(d) = c.log_lengthscales;
  out.gradient(d) = c.log_signal_var + half_trace * chol.jitter;  // jitter scales with sf2
  out.gradient(d + 1) = half_trace * hp.noise_var();
  return out;
}

TrainedFullGP condition_full_gp(const Dataset& data, const Hyperparameters& hp, Index exact_cap) {
  check_inputs(data, hp, exact_cap);
  TrainedFullGP model;
  model.dataset = data;
  model.hp = hp;
  model.chol = factor_training_covariance(data, hp);
  model.alpha = model.chol.solve(data.y);
  model.nlml = 0.5 * data.y.dot(model.alpha) + 0.5 * model.chol.log_det() +
               0.5 * static_cast<double>(data.size()) * kLog2Pi;
  return model;
}

TrainedFullGP fit_full_gp(const Dataset& data, const Hyperparameters& hp0,
                          const DeterministicConfig& config, Index exact_cap) {
  check_inputs(data, hp0, exact_cap);
  const Index d = hp0.dim();
  // Evaluated once outside the optimizer so that a failure at the start
  // surfaces with its jitter trail.
  (void)full_gp_nlml(data, hp0, exact_cap);

  const Objective objective = [&](const VectorXd& x) {
    const Hyperparameters hp = Hyperparameters::unpack(x, d);
    if (!hp.is_valid()) return ObjectiveEvaluation{std::numeric_limits<double>::infinity(), VectorXd::Zero(x.size())};
    try {
      return full_gp_nlml(data, hp, exact_cap);
    } catch (const NumericalFailure&) {
      return ObjectiveEvaluation{std::numeric_limits<double>::infinity(), VectorXd::Zero(x.size())};
    }
  };
  const OptimizeResult opt = minimize_deterministic(objective, hp0.pack(), config);

  TrainedFullGP model = condition_full_gp(data, Hyperparameters::unpack(opt.x, d), exact_cap);
  model.trace = opt.trace;
  model.status = opt.status;
  return model;
}

PredictiveDistribution predict(const TrainedFullGP& model, const MatrixXd& x_star, Flavor flavor) {
  if (x_star.cols() != model.hp.dim())
    throw ContractViolation("predict: test inputs have " + std::to_string(x_star.cols()) +
                            " columns, model expects " + std::to_string(model.hp.dim()));
  const MatrixXd k_sn = kernel_matrix(model.dataset.X, x_star, model.hp).values;  // n x n*
  PredictiveDistribution out;
  out.flavor = flavor;
  out.mean = k_sn.transpose() * model.alpha;
  const MatrixXd v = model.chol.solve_lower(k_sn);
  out.variance = (model.hp.signal_var() - v.colwise().squaredNorm().array()).matrix();
  for (Index i = 0; i < out.variance.size(); ++i) {
    if (out.variance(i) < 0) {
      out.variance(i) = 0;
      ++out.clamped;
    }
  }
  if (flavor == Flavor::observed) out.variance.array() += model.hp.noise_var();
  return out;
}

}  // namespace scalegp
