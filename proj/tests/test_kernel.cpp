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
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "scalegp/kernel.hpp"

using namespace scalegp;

namespace {

Hyperparameters make_hp(std::initializer_list<double> ell, double sf2, double sn2 = 0.1) {
  VectorXd l(static_cast<Index>(ell.size()));
  Index i = 0;
  for (double v : ell) l(i++) = v;
  return Hyperparameters::from_natural(l, sf2, sn2);
}

MatrixXd random_matrix(Index r, Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  MatrixXd m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

}  // namespace

TEST_CASE("se_ard hand values") {
  const auto hp1 = make_hp({1.0}, 1.0);
  CHECK(se_ard(Eigen::VectorXd::Constant(1, 0.0), Eigen::VectorXd::Constant(1, 1.0), hp1) ==
        doctest::Approx(0.6065307).epsilon(1e-7));

  const auto hp2 = make_hp({1.0, 2.0}, 4.0);
  Eigen::Vector2d x(0, 0), xp(1, 2);
  CHECK(se_ard(x, xp, hp2) == doctest::Approx(1.4715178).epsilon(1e-7));
  CHECK(se_ard(x, x, hp2) == doctest::Approx(4.0));
}

TEST_CASE("se_ard symmetry and bounds") {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto hp = oracle::random_hp(3, rng);
    const MatrixXd p = random_matrix(2, 3, rng);
    const double k = se_ard(p.row(0), p.row(1), hp);
    CHECK(k == se_ard(p.row(1), p.row(0), hp));
    CHECK(k > 0);
    CHECK(k < hp.signal_var());
  }
}

TEST_CASE("se_ard rejects dimension mismatch") {
  const auto hp = make_hp({1.0, 1.0}, 1.0);
  CHECK_THROWS_AS(se_ard(Eigen::Vector3d::Zero(), Eigen::Vector2d::Zero(), hp), ContractViolation);
  CHECK_THROWS_AS(kernel_matrix(MatrixXd::Zero(2, 3), MatrixXd::Zero(2, 2), hp), ContractViolation);
}

TEST_CASE("kernel_matrix matches elementwise evaluation") {
  std::mt19937_64 rng(11);
  const auto hp = oracle::random_hp(3, rng);
  const MatrixXd a = random_matrix(5, 3, rng);
  const MatrixXd b = random_matrix(4, 3, rng);
  const auto k = kernel_matrix(a, b, hp);
  CHECK(k.jitter_applied == 0);
  const MatrixXd ref = oracle::gram(a, b, hp);
  CHECK((k.values - ref).cwiseAbs().maxCoeff() < 1e-14);

  const auto self = kernel_matrix(a, a, hp);
  CHECK((self.values - self.values.transpose()).cwiseAbs().maxCoeff() == 0.0);
  const auto one = kernel_matrix(a.topRows(1), a.topRows(1), hp);
  CHECK(one.values(0, 0) == doctest::Approx(hp.signal_var()));
}

TEST_CASE("kernel matrix is positive definite after relative jitter") {
  std::mt19937_64 rng(5);
  const auto hp = Hyperparameters::isotropic(2, 2.0, 1.5, 0.1);
  const MatrixXd a = random_matrix(300, 2, rng);
  MatrixXd k = kernel_matrix(a, a, hp).values;
  k.diagonal().array() += 1e-6 * hp.signal_var();
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(k);
  CHECK(eig.eigenvalues().minCoeff() > 0);
}

TEST_CASE("kernel_gradient special cases") {
  std::mt19937_64 rng(8);
  const auto hp = oracle::random_hp(2, rng);
  const MatrixXd a = random_matrix(4, 2, rng);
  const MatrixXd b = random_matrix(3, 2, rng);
  CHECK((kernel_gradient(a, b, hp, KernelParameter::signal_var()) - kernel_matrix(a, b, hp).values).norm() == 0.0);
  const MatrixXd g = kernel_gradient(a, a, hp, KernelParameter::lengthscale(1));
  CHECK(g.diagonal().cwiseAbs().maxCoeff() == 0.0);
  CHECK_THROWS_AS(kernel_gradient(a, b, hp, KernelParameter::lengthscale(2)), ContractViolation);
  CHECK_THROWS_AS(kernel_gradient(a, b, hp, KernelParameter::input(4, 0)), ContractViolation);
}

TEST_CASE("kernel_gradient matches central differences") {
  std::mt19937_64 rng(21);
  const double h = 1e-5;
  double worst = 0;
  auto rel = [](const MatrixXd& x, const MatrixXd& y) { return (x - y).norm() / std::max(1e-8, x.norm() + y.norm()); };
  for (int draw = 0; draw < 100; ++draw) {
    const auto hp = oracle::random_hp(2, rng);
    const MatrixXd a = random_matrix(3, 2, rng);
    const MatrixXd b = random_matrix(2, 2, rng);
    for (Index k = 0; k < 2; ++k) {
      auto hp_p = hp, hp_m = hp;
      hp_p.log_lengthscales(k) += h;
      hp_m.log_lengthscales(k) -= h;
      const MatrixXd fd = (kernel_matrix(a, b, hp_p).values - kernel_matrix(a, b, hp_m).values) / (2 * h);
      const MatrixXd an = kernel_gradient(a, b, hp, KernelParameter::lengthscale(k));
      worst = std::max(worst, rel(an, fd));
    }
    for (Index r = 0; r < 3; ++r)
      for (Index c = 0; c < 2; ++c) {
        for (bool same : {false, true}) {
          const MatrixXd& bb = same ? a : b;
          MatrixXd ap = a, am = a;
          ap(r, c) += h;
          am(r, c) -= h;
          const MatrixXd fd = same ? MatrixXd((kernel_matrix(ap, ap, hp).values - kernel_matrix(am, am, hp).values) / (2 * h))
                                   : MatrixXd((kernel_matrix(ap, bb, hp).values - kernel_matrix(am, bb, hp).values) / (2 * h));
          const MatrixXd an = kernel_gradient(a, bb, hp, KernelParameter::input(r, c), same);
          worst = std::max(worst, rel(an, fd));
        }
      }
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("contract_kernel_gradient agrees with explicit derivative matrices") {
  std::mt19937_64 rng(31);
  const auto hp = oracle::random_hp(3, rng);
  const MatrixXd a = random_matrix(4, 3, rng);
  const MatrixXd b = random_matrix(5, 3, rng);
  const MatrixXd w = random_matrix(4, 5, rng);
  const auto c = contract_kernel_gradient<double>(a, b, hp, w, true);
  for (Index k = 0; k < 3; ++k)
    CHECK(c.log_lengthscales(k) ==
          doctest::Approx(w.cwiseProduct(kernel_gradient(a, b, hp, KernelParameter::lengthscale(k))).sum()));
  CHECK(c.log_signal_var == doctest::Approx(w.cwiseProduct(kernel_matrix(a, b, hp).values).sum()));
  for (Index r = 0; r < 4; ++r)
    for (Index k = 0; k < 3; ++k)
      CHECK(c.inputs_a(r, k) ==
            doctest::Approx(w.cwiseProduct(kernel_gradient(a, b, hp, KernelParameter::input(r, k))).sum()));
  // Moving a row of B: swap roles through the transpose.
  const MatrixXd wt = w.transpose();
  for (Index r = 0; r < 5; ++r)
    for (Index k = 0; k < 3; ++k)
      CHECK(c.inputs_b(r, k) ==
            doctest::Approx(wt.cwiseProduct(kernel_gradient(b, a, hp, KernelParameter::input(r, k))).sum()));
}
