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

#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "scalegp/types.hpp"

namespace scalegp {

/*
 * Squared-exponential kernel with automatic relevance determination:
 *
 *   k(x, x') = sf2 * exp(-0.5 * sum_i (x_i - x'_i)^2 / l_i^2)
 *
 * Everything here is a pure function of its arguments. Distances are always
 * formed pairwise from coordinate differences (no |a|^2 + |b|^2 - 2ab
 * expansion) so results are bit-stable and never slightly negative.
 */

template <typename Scalar>
struct KernelMatrix {
  Matrix<Scalar> values;
  Scalar jitter_applied{0};
};

namespace detail {

inline void check_dims(Index got, Index want, const char* what) {
  if (got != want)
    throw ContractViolation(std::string(what) + ": dimension " + std::to_string(got) +
                            " does not match hyperparameter dimension " + std::to_string(want));
}

}  // namespace detail

template <typename DerivedA, typename DerivedB, typename Scalar>
Scalar se_ard(const Eigen::MatrixBase<DerivedA>& x, const Eigen::MatrixBase<DerivedB>& x_prime,
              const BasicHyperparameters<Scalar>& hp) {
  detail::check_dims(x.size(), hp.dim(), "se_ard(x)");
  detail::check_dims(x_prime.size(), hp.dim(), "se_ard(x')");
  Scalar r2{0};
  for (Index i = 0; i < hp.dim(); ++i) {
    const Scalar diff = (x(i) - x_prime(i)) / std::exp(hp.log_lengthscales(i));
    r2 += diff * diff;
  }
  return hp.signal_var() * std::exp(Scalar(-0.5) * r2);
}

/// Rows of `a` divided by the length-scales.
template <typename Derived, typename Scalar>
Matrix<Scalar> scale_inputs(const Eigen::MatrixBase<Derived>& a, const BasicHyperparameters<Scalar>& hp) {
  const Vector<Scalar> inv_l = (-hp.log_lengthscales.array()).exp().matrix();
  return a * inv_l.asDiagonal();
}

template <typename DerivedA, typename DerivedB, typename Scalar>
KernelMatrix<Scalar> kernel_matrix(const Eigen::MatrixBase<DerivedA>& a,
                                   const Eigen::MatrixBase<DerivedB>& b,
                                   const BasicHyperparameters<Scalar>& hp) {
  detail::check_dims(a.cols(), hp.dim(), "kernel_matrix(A)");
  detail::check_dims(b.cols(), hp.dim(), "kernel_matrix(B)");
  const Matrix<Scalar> as = scale_inputs(a, hp);
  const Matrix<Scalar> bs = scale_inputs(b, hp);
  const Scalar sf2 = hp.signal_var();
  KernelMatrix<Scalar> k;
  k.values.resize(a.rows(), b.rows());
  for (Index j = 0; j < bs.rows(); ++j) {
    for (Index i = 0; i < as.rows(); ++i) {
      Scalar r2{0};
      for (Index c = 0; c < as.cols(); ++c) {
        const Scalar diff = as(i, c) - bs(j, c);
        r2 += diff * diff;
      }
      k.values(i, j) = sf2 * std::exp(Scalar(-0.5) * r2);
    }
  }
  return k;
}

/// Selects a single parameter of K(A, B) to differentiate against.
struct KernelParameter {
  enum class Kind { log_lengthscale, log_signal_var, input };
  Kind kind{Kind::log_signal_var};
  Index index{0};  // length-scale dimension, or row of A for `input`
  Index coord{0};  // coordinate of the row for `input`

  static KernelParameter lengthscale(Index i) { return {Kind::log_lengthscale, i, 0}; }
  static KernelParameter signal_var() { return {Kind::log_signal_var, 0, 0}; }
  /// Row `row` of A, coordinate `coord`. When A and B alias (K(Z, Z)) pass the
  /// same matrix twice; both the row and the column of that point then move.
  static KernelParameter input(Index row, Index coord) { return {Kind::input, row, coord}; }
};

/// dK(A, B)/d(parameter), formed analytically. With `same_inputs` set, A and B
/// are treated as the same point set so an input perturbation moves both sides.
template <typename DerivedA, typename DerivedB, typename Scalar>
Matrix<Scalar> kernel_gradient(const Eigen::MatrixBase<DerivedA>& a,
                               const Eigen::MatrixBase<DerivedB>& b,
                               const BasicHyperparameters<Scalar>& hp, KernelParameter wrt,
                               bool same_inputs = false) {
  Matrix<Scalar> k = kernel_matrix(a, b, hp).values;
  switch (wrt.kind) {
    case KernelParameter::Kind::log_signal_var:
      return k;
    case KernelParameter::Kind::log_lengthscale: {
      if (wrt.index < 0 || wrt.index >= hp.dim())
        throw ContractViolation("kernel_gradient: length-scale index out of range");
      const Scalar inv_l2 = std::exp(Scalar(-2) * hp.log_lengthscales(wrt.index));
      for (Index j = 0; j < b.rows(); ++j)
        for (Index i = 0; i < a.rows(); ++i) {
          const Scalar diff = a(i, wrt.index) - b(j, wrt.index);
          k(i, j) *= diff * diff * inv_l2;
        }
      return k;
    }
    case KernelParameter::Kind::input: {
      if (wrt.index < 0 || wrt.index >= a.rows() || wrt.coord < 0 || wrt.coord >= hp.dim())
        throw ContractViolation("kernel_gradient: input selector out of range");
      if (same_inputs && a.rows() != b.rows())
        throw ContractViolation("kernel_gradient: aliased inputs must have equal row counts");
      const Scalar inv_l2 = std::exp(Scalar(-2) * hp.log_lengthscales(wrt.coord));
      Matrix<Scalar> g = Matrix<Scalar>::Zero(a.rows(), b.rows());
      const Index r = wrt.index;
      const Index c = wrt.coord;
      for (Index j = 0; j < b.rows(); ++j) g(r, j) = -k(r, j) * (a(r, c) - b(j, c)) * inv_l2;
      if (same_inputs)
        for (Index i = 0; i < a.rows(); ++i) g(i, r) += k(i, r) * (a(i, c) - b(r, c)) * inv_l2;
      return g;
    }
  }
  throw ContractViolation("kernel_gradient: unknown selector");
}

/// Gradients of sum_ij weights_ij * K(A, B)_ij with respect to every kernel
/// parameter and both input sets. This is the workhorse behind all model
/// gradients: a model computes dObjective/dK as `weights` and contracts here in
/// O(n_a n_b d).
template <typename Scalar>
struct KernelContraction {
  Vector<Scalar> log_lengthscales;
  Scalar log_signal_var{0};
  Matrix<Scalar> inputs_a;  // n_a x d, empty unless requested
  Matrix<Scalar> inputs_b;  // n_b x d, empty unless requested
};

template <typename Scalar>
KernelContraction<Scalar> contract_kernel_gradient(const Eigen::Ref<const Matrix<Scalar>>& a,
                                                   const Eigen::Ref<const Matrix<Scalar>>& b,
                                                   const BasicHyperparameters<Scalar>& hp,
                                                   const Eigen::Ref<const Matrix<Scalar>>& weights,
                                                   bool want_inputs) {
  detail::check_dims(a.cols(), hp.dim(), "contract_kernel_gradient(A)");
  detail::check_dims(b.cols(), hp.dim(), "contract_kernel_gradient(B)");
  if (weights.rows() != a.rows() || weights.cols() != b.rows())
    throw ContractViolation("contract_kernel_gradient: weight matrix has wrong shape");
  const Index d = hp.dim();
  const Vector<Scalar> inv_l2 = (Scalar(-2) * hp.log_lengthscales.array()).exp().matrix();
  const Matrix<Scalar> as = scale_inputs(a, hp);
  const Matrix<Scalar> bs = scale_inputs(b, hp);
  const Scalar sf2 = hp.signal_var();

  KernelContraction<Scalar> out;
  out.log_lengthscales = Vector<Scalar>::Zero(d);
  if (want_inputs) {
    out.inputs_a = Matrix<Scalar>::Zero(a.rows(), d);
    out.inputs_b = Matrix<Scalar>::Zero(b.rows(), d);
  }
  Vector<Scalar> diff(d);
  for (Index j = 0; j < b.rows(); ++j) {
    for (Index i = 0; i < a.rows(); ++i) {
      const Scalar w = weights(i, j);
      if (w == Scalar(0)) continue;
      Scalar r2{0};
      for (Index c = 0; c < d; ++c) {
        diff(c) = as(i, c) - bs(j, c);
        r2 += diff(c) * diff(c);
      }
      const Scalar wk = w * sf2 * std::exp(Scalar(-0.5) * r2);
      out.log_signal_var += wk;
      for (Index c = 0; c < d; ++c) out.log_lengthscales(c) += wk * diff(c) * diff(c);
      if (want_inputs) {
        for (Index c = 0; c < d; ++c) {
          // diff is already divided by l_c once; one more division gives (a-b)/l^2.
          const Scalar g = wk * diff(c) * std::sqrt(inv_l2(c));
          out.inputs_a(i, c) -= g;
          out.inputs_b(j, c) += g;
        }
      }
    }
  }
  return out;
}

}  // namespace scalegp
