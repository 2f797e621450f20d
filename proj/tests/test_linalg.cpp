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


#include <cmath>

#include "doctest.h"
#include "scalegp/linalg.hpp"

using namespace scalegp;

TEST_CASE("robust_cholesky factors a well-conditioned matrix without jitter") {
  MatrixXd a(2, 2);
  a << 4, 2, 2, 3;
  const auto c = robust_cholesky<double>(a, 1.0, "test");
  CHECK(c.jitter == 0);
  CHECK(c.trail.size() == 1);
  const MatrixXd l = c.matrixL();
  CHECK((l * l.transpose() - a).norm() < 1e-12);
  CHECK(c.log_det() == doctest::Approx(std::log(8.0)));
  const Eigen::Vector2d rhs(1, 2);
  CHECK((a * c.solve(rhs) - rhs).norm() < 1e-12);
  CHECK((l * c.solve_lower(rhs) - rhs).norm() < 1e-12);
  CHECK((l.transpose() * c.solve_upper(rhs) - rhs).norm() < 1e-12);
}

TEST_CASE("robust_cholesky escalates jitter on a singular matrix") {
  const MatrixXd a = MatrixXd::Ones(3, 3);
  const auto c = robust_cholesky<double>(a, 1.0, "ones");
  CHECK(c.jitter > 0);
  CHECK(c.jitter <= 1e-4);
  CHECK(c.trail.size() >= 2);
  CHECK(c.trail.back() == c.jitter);
}

TEST_CASE("robust_cholesky reports the trail when every jitter fails") {
  MatrixXd a = MatrixXd::Identity(2, 2);
  a(1, 1) = -1;
  try {
    (void)robust_cholesky<double>(a, 1.0, "indefinite");
    FAIL("expected NumericalFailure");
  } catch (const NumericalFailure& e) {
    CHECK(e.jitter_trail().size() == 8);
    CHECK(e.jitter_trail().back() == doctest::Approx(1e-4));
  }
}

TEST_CASE("empty factorization is a no-op") {
  const auto c = robust_cholesky<double>(MatrixXd(0, 0), 1.0, "empty");
  CHECK(c.size() == 0);
  CHECK(c.log_det() == 0);
  CHECK(c.solve(MatrixXd(0, 3)).cols() == 3);
}
