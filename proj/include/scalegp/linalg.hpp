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
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "scalegp/types.hpp"

namespace scalegp {

/// Cholesky factor together with the diagonal jitter that made it succeed.
template <typename Scalar>
struct JitteredCholesky {
  Eigen::LLT<Matrix<Scalar>> llt;
  Scalar jitter{0};
  std::vector<Scalar> trail;  // every jitter tried, including the successful one

  Index size() const { return llt.matrixLLT().rows(); }
  auto matrixL() const { return llt.matrixL(); }

  Scalar log_det() const {
    if (size() == 0) return Scalar(0);
    return Scalar(2) * llt.matrixLLT().diagonal().array().log().sum();
  }

  template <typename Rhs>
  Matrix<Scalar> solve(const Eigen::MatrixBase<Rhs>& rhs) const {
    if (size() == 0) return Matrix<Scalar>(0, rhs.cols());
    return llt.solve(rhs);
  }

  /// L^{-1} rhs
  template <typename Rhs>
  Matrix<Scalar> solve_lower(const Eigen::MatrixBase<Rhs>& rhs) const {
    if (size() == 0) return Matrix<Scalar>(0, rhs.cols());
    return llt.matrixL().solve(rhs);
  }

  /// L^{-T} rhs
  template <typename Rhs>
  Matrix<Scalar> solve_upper(const Eigen::MatrixBase<Rhs>& rhs) const {
    if (size() == 0) return Matrix<Scalar>(0, rhs.cols());
    return llt.matrixU().solve(rhs);
  }
};

namespace detail {

template <typename Scalar>
bool factor_ok(const Eigen::LLT<Matrix<Scalar>>& llt) {
  if (llt.info() != Eigen::Success) return false;
  const auto diag = llt.matrixLLT().diagonal();
  for (Index i = 0; i < diag.size(); ++i)
    if (!(diag(i) > Scalar(0)) || !std::isfinite(diag(i))) return false;
  return true;
}

}  // namespace detail

/*
 * Factorizes a symmetric matrix, escalating diagonal jitter on failure:
 * no jitter first, then 1e-10 * scale growing by x10 up to 1e-4 * scale.
 * `scale` is the signal variance for kernel matrices.
 */
template <typename Scalar>
JitteredCholesky<Scalar> robust_cholesky(const Matrix<Scalar>& a, Scalar scale,
                                         const char* what = "kernel matrix") {
  if (a.rows() != a.cols()) throw ContractViolation("robust_cholesky: matrix is not square");
  JitteredCholesky<Scalar> out;
  if (a.rows() == 0) return out;
  if (!a.allFinite())
    throw NumericalFailure(std::string("non-finite entries in ") + what);

  out.trail.push_back(Scalar(0));
  out.llt.compute(a);
  if (detail::factor_ok(out.llt)) return out;

  for (Scalar rel = Scalar(1e-10); rel <= Scalar(1.0000001e-4); rel *= Scalar(10)) {
    const Scalar jitter = rel * scale;
    out.trail.push_back(jitter);
    Matrix<Scalar> shifted = a;
    shifted.diagonal().array() += jitter;
    out.llt.compute(shifted);
    if (detail::factor_ok(out.llt)) {
      out.jitter = jitter;
      return out;
    }
  }
  std::ostringstream msg;
  msg << "Cholesky factorization of " << what << " (" << a.rows() << "x" << a.cols()
      << ") failed; jitter tried:";
  for (Scalar j : out.trail) msg << ' ' << j;
  throw NumericalFailure(msg.str(), std::vector<double>(out.trail.begin(), out.trail.end()));
}

}  // namespace scalegp
