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

#include "scalegp/sparse_gp.hpp"

#include <cmath>
#include <limits>

#include "scalegp/kernel.hpp"

namespace scalegp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Lambda = Qtilde + sn2 I, either diagonal or block diagonal (PIC).
struct NoiseOperator {
  bool blocked{false};
  VectorXd diag;
  std::vector<std::vector<Index>> blocks;
  std::vector<JitteredCholesky<double>> chol;

  MatrixXd solve(const MatrixXd& rhs) const {
    if (!blocked) return diag.cwiseInverse().asDiagonal() * rhs;
    MatrixXd out(rhs.rows(), rhs.cols());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const MatrixXd part = rhs(blocks[b], Eigen::all);
      out(blocks[b], Eigen::all) = chol[b].solve(part);
    }
    return out;
  }

  double log_det() const {
    if (!blocked) return diag.array().log().sum();
    double s = 0;
    for (const auto& c : chol) s += c.log_det();
    return s;
  }

  double trace_inverse() const {
    if (!blocked) return diag.cwiseInverse().sum();
    double s = 0;
    for (const auto& c : chol) {
      const MatrixXd linv = c.solve_lower(MatrixXd::Identity(c.size(), c.size()));
      s += linv.squaredNorm();
    }
    return s;
  }
};

struct Core {
  JitteredCholesky<double> kmm;
  MatrixXd a;  // L_mm^{-1} K_mn
  NoiseOperator lambda;
  MatrixXd p;  // Lambda^{-1} A^T
  JitteredCholesky<double> inner;
  VectorXd alpha;
  double residual_trace{0};
  double log_evidence{0};
};

void check_sparse_inputs(SparseMethod method, const Dataset& data, const MatrixXd& z,
                         const Hyperparameters& hp, const Partition* partition) {
  data.validate();
  if (data.dim() != hp.dim()) throw ContractViolation("sparse GP: data/hyperparameter dimension mismatch");
  if (!hp.is_valid()) throw ContractViolation("sparse GP: hyperparameters are not finite");
  if (z.cols() != data.dim()) throw ContractViolation("sparse GP: inducing inputs have the wrong dimension");
  if (!z.allFinite()) throw ContractViolation("sparse GP: inducing inputs are not finite");
  if (z.rows() < 1 && method != SparseMethod::pic)
    throw ContractViolation("sparse GP: need at least one inducing point");
  if (method == SparseMethod::pic) {
    if (partition == nullptr) throw ContractViolation("PIC requires a partition");
    partition->validate(data.size());
    if (partition->centroids.cols() != data.dim())
      throw ContractViolation("PIC partition centroids have the wrong dimension");
  } else if (partition != nullptr) {
    throw ContractViolation(to_string(method) + " does not take a partition");
  }
}

Core build_core(SparseMethod method, const Dataset& data, const MatrixXd& z, const Hyperparameters& hp,
                const Partition* partition) {
  const Index n = data.size();
  const double sf2 = hp.signal_var();
  const double sn2 = hp.noise_var();

  Core c;
  c.kmm = robust_cholesky<double>(kernel_matrix(z, z, hp).values, sf2, "K_mm");
  c.a = c.kmm.solve_lower(kernel_matrix(z, data.X, hp).values);
  const VectorXd q_diag = c.a.colwise().squaredNorm().transpose();
  c.residual_trace = static_cast<double>(n) * sf2 - q_diag.sum();

  if (method == SparseMethod::pic) {
    c.lambda.blocked = true;
    c.lambda.blocks = partition->blocks();
    for (const auto& rows : c.lambda.blocks) {
      const MatrixXd xb = data.X(rows, Eigen::all);
      const MatrixXd ab = c.a(Eigen::all, rows);
      MatrixXd lam = kernel_matrix(xb, xb, hp).values;
      lam.noalias() -= ab.transpose() * ab;
      lam.diagonal().array() += sn2;
      c.lambda.chol.push_back(robust_cholesky<double>(lam, sf2, "PIC block"));
    }
  } else if (method == SparseMethod::fitc) {
    c.lambda.diag = ((sf2 - q_diag.array()).max(0.0) + sn2).matrix();
  } else {
    c.lambda.diag = VectorXd::Constant(n, sn2);
  }

  c.p = c.lambda.solve(c.a.transpose());
  MatrixXd b = c.a * c.p;
  b.diagonal().array() += 1.0;
  c.inner = robust_cholesky<double>(b, 1.0, "inner matrix");

  // With u = A alpha and r = y - A^T u = Lambda alpha, y^T alpha = |u|^2 + r^T alpha.
  const VectorXd u = c.inner.solve(c.p.transpose() * data.y);
  const VectorXd r = data.y - c.a.transpose() * u;
  c.alpha = c.lambda.solve(r);
  const double quad = u.squaredNorm() + r.dot(c.alpha);

  c.log_evidence = -0.5 * quad - 0.5 * (c.lambda.log_det() + c.inner.log_det()) -
                   0.5 * static_cast<double>(n) * kLog2Pi;
  if (method == SparseMethod::vfe) c.log_evidence -= 0.5 / sn2 * c.residual_trace;
  return c;
}

}  // namespace

std::string to_string(SparseMethod method) {
  switch (method) {
    case SparseMethod::sor: return "sor";
    case SparseMethod::dtc: return "dtc";
    case SparseMethod::fitc: return "fitc";
    case SparseMethod::pic: return "pic";
    case SparseMethod::vfe: return "vfe";
  }
  return "unknown";
}

SparseMethod parse_sparse_method(const std::string& name) {
  for (auto m : {SparseMethod::sor, SparseMethod::dtc, SparseMethod::fitc, SparseMethod::pic, SparseMethod::vfe})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown sparse method '" + name + "'");
}

MatrixXd nystrom(const MatrixXd& a, const MatrixXd& b, const MatrixXd& z, const Hyperparameters& hp) {
  const auto kmm = robust_cholesky<double>(kernel_matrix(z, z, hp).values, hp.signal_var(), "K_mm");
  const MatrixXd va = kmm.solve_lower(kernel_matrix(z, a, hp).values);
  const MatrixXd vb = kmm.solve_lower(kernel_matrix(z, b, hp).values);
  return va.transpose() * vb;
}

double nystrom_residual_trace(const Dataset& data, const MatrixXd& z, const Hyperparameters& hp) {
  const auto kmm = robust_cholesky<double>(kernel_matrix(z, z, hp).values, hp.signal_var(), "K_mm");
  const MatrixXd a = kmm.solve_lower(kernel_matrix(z, data.X, hp).values);
  return static_cast<double>(data.size()) * hp.signal_var() - a.squaredNorm();
}

/*
 * Gradient route: with C = Q_nn + Lambda, alpha = C^{-1} y and
 * G = 0.5 (alpha alpha^T - C^{-1}), the evidence differential is tr(G dC).
 * Writing Q = K_nm K_mm^{-1} K_mn and R = K_mm^{-1} K_mn gives
 *
 *   dF/dK_mn = 2 R Gt,   dF/dK_mm = -R Gt R^T,
 *
 * where Gt is G with the blocks absorbed by Qtilde removed (FITC/PIC), or
 * G + 0.5/sn2 I for VFE's trace term. Those blocks of G feed K_nn directly.
 * R Gt is m x n and is assembled from m x m pieces only.
 */
ObjectiveEvaluation sparse_evidence(SparseMethod method, const Dataset& data, const InducingSet& inducing,
                                    const Hyperparameters& hp, const Partition* partition) {
  check_sparse_inputs(method, data, inducing.Z, hp, partition);
  const Core c = build_core(method, data, inducing.Z, hp, partition);
  const Index n = data.size();
  const Index d = hp.dim();
  const Index m = inducing.size();
  const double sf2 = hp.signal_var();
  const double sn2 = hp.noise_var();
  const MatrixXd& z = inducing.Z;

  const MatrixXd r = c.kmm.solve_upper(c.a);                 // m x n
  const MatrixXd v = c.inner.solve_lower(c.p.transpose());   // L_B^{-1} P^T, m x n
  const MatrixXd lam_inv_rt = c.lambda.solve(r.transpose());  // n x m
  const MatrixXd rp = r * c.p;                                // m x m
  // R C^{-1} = (Lambda^{-1} R^T)^T - (R P) B^{-1} P^T
  MatrixXd r_g = lam_inv_rt.transpose() - c.inner.solve(rp.transpose()).transpose() * c.p.transpose();
  r_g = 0.5 * ((r * c.alpha) * c.alpha.transpose() - r_g);

  double sf2_grad = 0;
  VectorXd ls_grad = VectorXd::Zero(d);

  if (method == SparseMethod::fitc) {
    const VectorXd cinv_diag = c.lambda.diag.cwiseInverse() - v.colwise().squaredNorm().transpose();
    const VectorXd g_diag = 0.5 * (c.alpha.array().square().matrix() - cinv_diag);
    r_g -= r * g_diag.asDiagonal();
    sf2_grad += sf2 * g_diag.sum();
  } else if (method == SparseMethod::pic) {
    for (std::size_t b = 0; b < c.lambda.blocks.size(); ++b) {
      const auto& rows = c.lambda.blocks[b];
      const auto nb = static_cast<Index>(rows.size());
      const MatrixXd vb = v(Eigen::all, rows);
      const VectorXd ab = c.alpha(rows);
      MatrixXd g_blk = c.lambda.chol[b].solve(MatrixXd::Identity(nb, nb));
      g_blk.noalias() -= vb.transpose() * vb;
      g_blk = 0.5 * (ab * ab.transpose() - g_blk);
      r_g(Eigen::all, rows) -= r(Eigen::all, rows) * g_blk;
      const MatrixXd xb = data.X(rows, Eigen::all);
      const auto kc = contract_kernel_gradient<double>(xb, xb, hp, g_blk, false);
      ls_grad += kc.log_lengthscales;
      sf2_grad += kc.log_signal_var;
    }
  } else if (method == SparseMethod::vfe) {
    r_g += (0.5 / sn2) * r;
    sf2_grad += sf2 * (-0.5 / sn2) * static_cast<double>(n);
  }

  const double trace_cinv = c.lambda.trace_inverse() - v.squaredNorm();
  double sn2_bar = 0.5 * (c.alpha.squaredNorm() - trace_cinv);
  if (method == SparseMethod::vfe) sn2_bar += 0.5 / (sn2 * sn2) * c.residual_trace;

  const MatrixXd kmn_bar = 2.0 * r_g;
  const MatrixXd kmm_bar = -r_g * r.transpose();
  const bool with_z = inducing.trainable && m > 0;
  const auto c_mn = contract_kernel_gradient<double>(z, data.X, hp, kmn_bar, with_z);
  const auto c_mm = contract_kernel_gradient<double>(z, z, hp, kmm_bar, with_z);

  ObjectiveEvaluation out;
  out.value = c.log_evidence;
  out.gradient.resize(hp.packed_size() + (inducing.trainable ? m * d : 0));
  out.gradient.head(d) = ls_grad + c_mn.log_lengthscales + c_mm.log_lengthscales;
  out.gradient(d) = sf2_grad + c_mn.log_signal_var + c_mm.log_signal_var + c.kmm.jitter * kmm_bar.trace();
  out.gradient(d + 1) = sn2_bar * sn2;
  if (inducing.trainable && m > 0) {
    const MatrixXd gz = c_mn.inputs_a + c_mm.inputs_a + c_mm.inputs_b;
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        out.gradient.data() + hp.packed_size(), m, d) = gz;
  }
  return out;
}

VectorXd pack_sparse_parameters(const Hyperparameters& hp, const MatrixXd& z, bool with_z) {
  VectorXd x(hp.packed_size() + (with_z ? z.size() : 0));
  x.head(hp.packed_size()) = hp.pack();
  if (with_z)
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        x.data() + hp.packed_size(), z.rows(), z.cols()) = z;
  return x;
}

void unpack_sparse_parameters(const VectorXd& x, Index dim, Hyperparameters& hp, MatrixXd& z, bool with_z) {
  hp = Hyperparameters::unpack(x, dim);
  if (with_z) {
    if (x.size() != hp.packed_size() + z.size())
      throw ContractViolation("sparse parameter vector has the wrong length");
    z = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        x.data() + hp.packed_size(), z.rows(), z.cols());
  }
}

SparseModel condition_sparse(SparseMethod method, const Dataset& data, const InducingSet& inducing,
                             const Hyperparameters& hp, const Partition* partition) {
  check_sparse_inputs(method, data, inducing.Z, hp, partition);
  Core c = build_core(method, data, inducing.Z, hp, partition);
  SparseModel model;
  model.method = method;
  model.data = data;
  model.inducing = inducing;
  model.hp = hp;
  if (partition) model.partition = *partition;
  model.kmm = std::move(c.kmm);
  model.inner = std::move(c.inner);
  model.a = std::move(c.a);
  model.alpha = std::move(c.alpha);
  model.a_alpha = model.a * model.alpha;
  model.lambda_blocks = std::move(c.lambda.chol);
  model.evidence = c.log_evidence;
  return model;
}

SparseModel fit_sparse(SparseMethod method, const Dataset& data, const InducingSet& z0,
                       const Hyperparameters& hp0, const DeterministicConfig& config,
                       const Partition* partition) {
  check_sparse_inputs(method, data, z0.Z, hp0, partition);
  (void)sparse_evidence(method, data, z0, hp0, partition);

  const Index d = hp0.dim();
  const bool with_z = z0.trainable && z0.size() > 0;
  const Objective objective = [&](const VectorXd& x) {
    InducingSet inducing = z0;
    Hyperparameters hp;
    unpack_sparse_parameters(x, d, hp, inducing.Z, with_z);
    inducing.trainable = with_z;
    const auto fail = ObjectiveEvaluation{std::numeric_limits<double>::infinity(), VectorXd::Zero(x.size())};
    if (!hp.is_valid() || !inducing.Z.allFinite()) return fail;
    try {
      ObjectiveEvaluation e = sparse_evidence(method, data, inducing, hp, partition);
      e.value = -e.value;
      e.gradient = -e.gradient;
      return e;
    } catch (const NumericalFailure&) {
      return fail;
    }
  };
  const OptimizeResult opt = minimize_deterministic(objective, pack_sparse_parameters(hp0, z0.Z, with_z), config);

  InducingSet inducing = z0;
  Hyperparameters hp;
  unpack_sparse_parameters(opt.x, d, hp, inducing.Z, with_z);
  SparseModel model = condition_sparse(method, data, inducing, hp, partition);
  model.trace = opt.trace;
  model.status = opt.status;
  return model;
}

PredictiveDistribution predict(const SparseModel& model, const MatrixXd& x_star, Flavor flavor) {
  if (x_star.cols() != model.hp.dim())
    throw ContractViolation("predict: test inputs have " + std::to_string(x_star.cols()) +
                            " columns, model expects " + std::to_string(model.hp.dim()));
  const Hyperparameters& hp = model.hp;
  const Index ns = x_star.rows();
  const MatrixXd a_star = model.kmm.solve_lower(kernel_matrix(model.inducing.Z, x_star, hp).values);

  PredictiveDistribution out;
  out.flavor = flavor;
  out.mean = a_star.transpose() * model.a_alpha;
  const VectorXd q_star = a_star.colwise().squaredNorm().transpose();

  if (model.method == SparseMethod::sor) {
    out.variance = model.inner.solve_lower(a_star).colwise().squaredNorm().transpose();
  } else if (model.method != SparseMethod::pic) {
    const VectorXd explained = model.inner.solve_lower(a_star).colwise().squaredNorm().transpose();
    out.variance = (hp.signal_var() - q_star.array() + explained.array()).matrix();
  } else {
    // Each test point sees its own block exactly and the rest through Z:
    //   var = k** - Q** + |L_B^{-1}(a* - t)|^2 - e^T Lambda_j^{-1} e
    // with e = k_j* - A_j^T a* and t = A_j Lambda_j^{-1} e.
    const auto blocks = model.partition->blocks();
    std::vector<std::vector<Index>> members(blocks.size());
    for (Index i = 0; i < ns; ++i) members[model.partition->nearest(x_star.row(i))].push_back(i);

    MatrixXd shifted = a_star;
    VectorXd local_quad = VectorXd::Zero(ns);
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      if (members[b].empty()) continue;
      const auto& rows = blocks[b];
      const MatrixXd xb = model.data.X(rows, Eigen::all);
      const MatrixXd ab = model.a(Eigen::all, rows);
      const MatrixXd as = a_star(Eigen::all, members[b]);
      MatrixXd e = kernel_matrix(xb, MatrixXd(x_star(members[b], Eigen::all)), hp).values;
      e.noalias() -= ab.transpose() * as;
      const MatrixXd lam_inv_e = model.lambda_blocks[b].solve(e);
      const VectorXd mean_local = e.transpose() * model.alpha(rows);
      const VectorXd quad = (e.array() * lam_inv_e.array()).colwise().sum().transpose();
      const MatrixXd t = ab * lam_inv_e;
      for (std::size_t k = 0; k < members[b].size(); ++k) {
        const Index i = members[b][k];
        out.mean(i) += mean_local(static_cast<Index>(k));
        local_quad(i) = quad(static_cast<Index>(k));
        shifted.col(i) -= t.col(static_cast<Index>(k));
      }
    }
    const VectorXd explained = model.inner.solve_lower(shifted).colwise().squaredNorm().transpose();
    out.variance = (hp.signal_var() - q_star.array() + explained.array() - local_quad.array()).matrix();
  }

  for (Index i = 0; i < ns; ++i) {
    if (out.variance(i) < 0) {
      out.variance(i) = 0;
      ++out.clamped;
    }
  }
  if (flavor == Flavor::observed) out.variance.array() += hp.noise_var();
  return out;
}

InducingSet init_inducing_kmeans(const MatrixXd& x, Index m, std::uint64_t seed) {
  return InducingSet{partition_kmeans(x, m, seed).centroids, true};
}

InducingSet init_inducing_grid(double lo, double hi, Index m) {
  if (m < 1) throw ContractViolation("init_inducing_grid: need at least one point");
  InducingSet out;
  out.Z = VectorXd::LinSpaced(m, lo, hi);
  return out;
}

}  // namespace scalegp
