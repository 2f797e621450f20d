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

#include "scalegp/svgp.hpp"

#include <cmath>
#include <limits>

#include "scalegp/kernel.hpp"

namespace scalegp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void check_svgp_inputs(const Dataset& batch, Index n_total, const MatrixXd& z, const Hyperparameters& hp,
                       const VariationalState& state) {
  batch.validate();
  if (batch.dim() != hp.dim() || z.cols() != hp.dim())
    throw ContractViolation("svgp: dimension mismatch between data, Z and hyperparameters");
  if (z.rows() < 1) throw ContractViolation("svgp: need at least one inducing point");
  if (n_total < batch.size()) throw ContractViolation("svgp: batch larger than the dataset");
  if (!hp.is_valid()) throw ContractViolation("svgp: hyperparameters are not finite");
  state.validate(z.rows());
}

struct BoundTerms {
  JitteredCholesky<double> kmm;
  MatrixXd r;        // K_mm^{-1} K_mb
  VectorXd mu;       // predictive means on the batch
  VectorXd var;      // v_i
  double expected_loglik{0};  // unscaled batch sum
  double kl{0};
};

BoundTerms bound_terms(const Dataset& batch, const MatrixXd& z, const Hyperparameters& hp,
                       const VariationalState& state) {
  const double sf2 = hp.signal_var();
  const double sn2 = hp.noise_var();
  const Index m = z.rows();

  BoundTerms t;
  t.kmm = robust_cholesky<double>(kernel_matrix(z, z, hp).values, sf2, "K_mm");
  const MatrixXd a = t.kmm.solve_lower(kernel_matrix(z, batch.X, hp).values);
  t.r = t.kmm.solve_upper(a);
  // Single triangular solves keep the value accurate when K_mm is poorly conditioned.
  const MatrixXd lm_inv_l = t.kmm.solve_lower(state.cov_factor);
  const VectorXd lm_inv_mean = t.kmm.solve_lower(state.mean);
  t.mu = a.transpose() * lm_inv_mean;
  const MatrixXd ltr = lm_inv_l.transpose() * a;
  t.var = (sf2 - a.colwise().squaredNorm().array() + ltr.colwise().squaredNorm().array()).matrix().transpose();

  const VectorXd resid = batch.y - t.mu;
  t.expected_loglik = -0.5 * static_cast<double>(batch.size()) * (kLog2Pi + std::log(sn2)) -
                      0.5 / sn2 * (resid.squaredNorm() + t.var.sum());

  // KL(N(m, S) || N(0, K_mm)) with S = L L^T.
  const double log_det_s = 2.0 * state.cov_factor.diagonal().array().log().sum();
  t.kl = 0.5 * (lm_inv_l.squaredNorm() + lm_inv_mean.squaredNorm() - static_cast<double>(m) +
                t.kmm.log_det() - log_det_s);
  return t;
}

}  // namespace

void VariationalState::validate(Index m) const {
  if (mean.size() != m || cov_factor.rows() != m || cov_factor.cols() != m)
    throw ContractViolation("variational state does not match the inducing set size");
  if (!mean.allFinite() || !cov_factor.allFinite())
    throw ContractViolation("variational state is not finite");
  for (Index i = 0; i < m; ++i) {
    if (!(cov_factor(i, i) > 0)) throw ContractViolation("variational covariance factor needs a positive diagonal");
    for (Index j = i + 1; j < m; ++j)
      if (cov_factor(i, j) != 0) throw ContractViolation("variational covariance factor must be lower triangular");
  }
}

VectorXd VariationalState::pack() const {
  const Index m = size();
  VectorXd v(packed_size(m));
  v.head(m) = mean;
  Index k = m;
  for (Index j = 0; j < m; ++j)
    for (Index i = j; i < m; ++i) v(k++) = i == j ? std::log(cov_factor(i, j)) : cov_factor(i, j);
  return v;
}

VariationalState VariationalState::unpack(const Eigen::Ref<const VectorXd>& v, Index m) {
  if (v.size() != packed_size(m)) throw ContractViolation("variational parameter vector has the wrong length");
  VariationalState s;
  s.mean = v.head(m);
  s.cov_factor = MatrixXd::Zero(m, m);
  Index k = m;
  for (Index j = 0; j < m; ++j)
    for (Index i = j; i < m; ++i) s.cov_factor(i, j) = i == j ? std::exp(v(k++)) : v(k++);
  return s;
}

double elbo(const Dataset& batch, Index n_total, const MatrixXd& z, const Hyperparameters& hp,
            const VariationalState& state) {
  check_svgp_inputs(batch, n_total, z, hp, state);
  const BoundTerms t = bound_terms(batch, z, hp, state);
  const double scale = static_cast<double>(n_total) / static_cast<double>(batch.size());
  return scale * t.expected_loglik - t.kl;
}

ObjectiveEvaluation elbo_with_gradient(const Dataset& batch, Index n_total, const MatrixXd& z,
                                       const Hyperparameters& hp, const VariationalState& state,
                                       bool z_trainable) {
  check_svgp_inputs(batch, n_total, z, hp, state);
  const BoundTerms t = bound_terms(batch, z, hp, state);
  const Index m = z.rows();
  const Index d = hp.dim();
  const auto b = static_cast<double>(batch.size());
  const double scale = static_cast<double>(n_total) / b;
  const double sf2 = hp.signal_var();
  const double sn2 = hp.noise_var();

  const MatrixXd kmm = kernel_matrix(z, z, hp).values + t.kmm.jitter * MatrixXd::Identity(m, m);
  const MatrixXd kmm_inv = t.kmm.solve(MatrixXd::Identity(m, m));
  const MatrixXd s = state.covariance();

  // Expected log-likelihood part, per unit of `scale`.
  const VectorXd resid = batch.y - t.mu;
  const VectorXd dmu = resid / sn2;  // dE/dmu_i
  const double dv = -0.5 / sn2;      // dE/dv_i
  const MatrixXd rrt = t.r * t.r.transpose();
  const MatrixXd r_bar = state.mean * dmu.transpose() + 2.0 * dv * (s - kmm) * t.r;
  MatrixXd kmm_bar = -dv * rrt - kmm_inv * r_bar * t.r.transpose();
  MatrixXd kmb_bar = kmm_inv * r_bar;
  MatrixXd s_bar = dv * rrt;
  VectorXd mean_bar = t.r * dmu;
  const double sn2_bar_e = -0.5 * b / sn2 + 0.5 / (sn2 * sn2) * (resid.squaredNorm() + t.var.sum());
  const double kdiag_bar = dv * b;

  kmm_bar *= scale;
  kmb_bar *= scale;
  s_bar *= scale;
  mean_bar *= scale;

  // KL part.
  const VectorXd kinv_mean = kmm_inv * state.mean;
  const MatrixXd s_inv = [&] {
    const MatrixXd linv = state.cov_factor.triangularView<Eigen::Lower>().solve(MatrixXd::Identity(m, m));
    return MatrixXd(linv.transpose() * linv);
  }();
  kmm_bar -= 0.5 * (kmm_inv - kmm_inv * s * kmm_inv - kinv_mean * kinv_mean.transpose());
  s_bar -= 0.5 * (kmm_inv - s_inv);
  mean_bar -= kinv_mean;

  const auto c_mb = contract_kernel_gradient<double>(z, batch.X, hp, kmb_bar, z_trainable);
  const auto c_mm = contract_kernel_gradient<double>(z, z, hp, kmm_bar, z_trainable);

  const Index hp_size = hp.packed_size();
  const Index z_size = z_trainable ? m * d : 0;
  ObjectiveEvaluation out;
  out.value = scale * t.expected_loglik - t.kl;
  out.gradient.resize(hp_size + z_size + VariationalState::packed_size(m));
  out.gradient.head(d) = c_mb.log_lengthscales + c_mm.log_lengthscales;
  out.gradient(d) = c_mb.log_signal_var + c_mm.log_signal_var + t.kmm.jitter * kmm_bar.trace() +
                    scale * kdiag_bar * sf2;
  out.gradient(d + 1) = scale * sn2_bar_e * sn2;
  if (z_trainable) {
    const MatrixXd gz = c_mb.inputs_a + c_mm.inputs_a + c_mm.inputs_b;
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        out.gradient.data() + hp_size, m, d) = gz;
  }

  const MatrixXd l_bar = (s_bar + s_bar.transpose()) * state.cov_factor;
  Index k = hp_size + z_size;
  out.gradient.segment(k, m) = mean_bar;
  k += m;
  for (Index j = 0; j < m; ++j)
    for (Index i = j; i < m; ++i)
      out.gradient(k++) = i == j ? l_bar(i, j) * state.cov_factor(i, j) : l_bar(i, j);
  return out;
}

VariationalState optimal_variational_state(const Dataset& data, const MatrixXd& z, const Hyperparameters& hp) {
  data.validate();
  if (z.cols() != hp.dim() || data.dim() != hp.dim()) throw ContractViolation("optimal_variational_state: dimension mismatch");
  const double sf2 = hp.signal_var();
  const double sn2 = hp.noise_var();
  const Index m = z.rows();
  const auto kmm = robust_cholesky<double>(kernel_matrix(z, z, hp).values, sf2, "K_mm");
  const MatrixXd a = kmm.solve_lower(kernel_matrix(z, data.X, hp).values);
  MatrixXd b = a * a.transpose() / sn2;
  b.diagonal().array() += 1.0;
  const auto inner = robust_cholesky<double>(b, 1.0, "inner matrix");

  const MatrixXd lm = kmm.matrixL();
  VariationalState out;
  out.mean = lm * inner.solve(a * data.y) / sn2;
  // S = L_mm B^{-1} L_mm^T
  const MatrixXd half = inner.solve_lower(lm.transpose());
  MatrixXd s = half.transpose() * half;
  s = 0.5 * (s + s.transpose());
  const auto chol = robust_cholesky<double>(s, s.diagonal().maxCoeff(), "optimal covariance");
  out.cov_factor = chol.matrixL();
  (void)m;
  return out;
}

SvgpModel make_svgp_model(const Dataset& data, const InducingSet& inducing, const Hyperparameters& hp,
                          const VariationalState& state) {
  check_svgp_inputs(data, data.size(), inducing.Z, hp, state);
  SvgpModel model;
  model.data = data;
  model.inducing = inducing;
  model.hp = hp;
  model.state = state;
  model.kmm = robust_cholesky<double>(kernel_matrix(inducing.Z, inducing.Z, hp).values, hp.signal_var(), "K_mm");
  return model;
}

SvgpModel fit_svgp(const Dataset& data, const InducingSet& z0, const Hyperparameters& hp0,
                   const SvgpConfig& config, std::optional<VariationalState> initial) {
  data.validate();
  config.validate(data.size());
  const VariationalState start = initial ? *initial : optimal_variational_state(data, z0.Z, hp0);
  check_svgp_inputs(data, data.size(), z0.Z, hp0, start);

  const Index d = hp0.dim();
  const Index m = z0.size();
  const bool with_z = z0.trainable;
  const Index hp_size = hp0.packed_size();
  const Index z_size = with_z ? m * d : 0;

  VectorXd x0(hp_size + z_size + VariationalState::packed_size(m));
  x0.head(hp_size + z_size) = pack_sparse_parameters(hp0, z0.Z, with_z);
  x0.tail(VariationalState::packed_size(m)) = start.pack();

  StochasticObjective objective;
  objective.n_total = data.size();
  objective.evaluate = [&](const VectorXd& x, std::span<const Index> rows) {
    Hyperparameters hp;
    MatrixXd z = z0.Z;
    unpack_sparse_parameters(x.head(hp_size + z_size), d, hp, z, with_z);
    const VariationalState state = VariationalState::unpack(x.tail(VariationalState::packed_size(m)), m);
    const auto fail = ObjectiveEvaluation{std::numeric_limits<double>::quiet_NaN(), VectorXd::Zero(x.size())};
    if (!hp.is_valid() || !z.allFinite() || !state.mean.allFinite() || !state.cov_factor.allFinite()) return fail;
    const Dataset batch = data.subset(std::vector<Index>(rows.begin(), rows.end()));
    try {
      ObjectiveEvaluation e = elbo_with_gradient(batch, data.size(), z, hp, state, with_z);
      e.value = -e.value;
      e.gradient = -e.gradient;
      return e;
    } catch (const NumericalFailure&) {
      return fail;
    } catch (const ContractViolation&) {
      return fail;
    }
  };
  const OptimizeResult opt = minimize_stochastic(objective, x0, config);

  Hyperparameters hp;
  InducingSet inducing = z0;
  unpack_sparse_parameters(opt.x.head(hp_size + z_size), d, hp, inducing.Z, with_z);
  const VariationalState state = VariationalState::unpack(opt.x.tail(VariationalState::packed_size(m)), m);
  SvgpModel model = make_svgp_model(data, inducing, hp, state);
  model.config = config;
  model.trace = opt.trace;
  return model;
}

PredictiveDistribution predict(const SvgpModel& model, const MatrixXd& x_star, Flavor flavor) {
  if (x_star.cols() != model.hp.dim())
    throw ContractViolation("predict: test inputs have " + std::to_string(x_star.cols()) +
                            " columns, model expects " + std::to_string(model.hp.dim()));
  const Hyperparameters& hp = model.hp;
  const MatrixXd a_star = model.kmm.solve_lower(kernel_matrix(model.inducing.Z, x_star, hp).values);
  const MatrixXd r_star = model.kmm.solve_upper(a_star);  // K_mm^{-1} k_m*
  PredictiveDistribution out;
  out.flavor = flavor;
  out.mean = r_star.transpose() * model.state.mean;
  const MatrixXd ltr = model.state.cov_factor.transpose() * r_star;
  out.variance = (hp.signal_var() - a_star.colwise().squaredNorm().array() + ltr.colwise().squaredNorm().array())
                     .matrix()
                     .transpose();
  for (Index i = 0; i < out.variance.size(); ++i) {
    if (out.variance(i) < 0) {
      out.variance(i) = 0;
      ++out.clamped;
    }
  }
  if (flavor == Flavor::observed) out.variance.array() += hp.noise_var();
  return out;
}

}  // namespace scalegp
