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
#include "scalegp/optimize.hpp"

using namespace scalegp;

namespace {

struct Quadratic {
  MatrixXd a;
  VectorXd b;

  ObjectiveEvaluation operator()(const VectorXd& x) const {
    return {0.5 * x.dot(a * x) - b.dot(x), a * x - b};
  }
};

Quadratic random_quadratic(Index p, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  MatrixXd m(p, p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < p; ++j) m(i, j) = g(rng);
  Quadratic q;
  q.a = m * m.transpose() + MatrixXd::Identity(p, p);
  q.b.resize(p);
  for (Index i = 0; i < p; ++i) q.b(i) = g(rng);
  return q;
}

ObjectiveEvaluation rosenbrock(const VectorXd& x) {
  const double a = 1 - x(0);
  const double b = x(1) - x(0) * x(0);
  VectorXd g(2);
  g << -2 * a - 400 * x(0) * b, 200 * b;
  return {a * a + 100 * b * b, g};
}

}  // namespace

TEST_CASE("deterministic optimizer solves a convex quadratic") {
  const Quadratic q = random_quadratic(5, 1);
  DeterministicConfig cfg;
  cfg.grad_tol = 1e-11;
  cfg.rel_f_tol = 0;
  const auto r = minimize_deterministic(q, VectorXd::Zero(5), cfg);
  const VectorXd sol = q.a.ldlt().solve(q.b);
  CHECK((r.x - sol).norm() < 1e-8);
}

TEST_CASE("deterministic optimizer stops at a stationary start") {
  const Quadratic q = random_quadratic(3, 2);
  const VectorXd sol = q.a.ldlt().solve(q.b);
  const auto r = minimize_deterministic(q, sol);
  CHECK(r.status == OptStatus::gradient_converged);
  CHECK(r.trace.iterations.size() == 1);
  CHECK(r.trace.iterations.front().iter == 0);
  CHECK((r.x - sol).norm() == 0.0);
}

TEST_CASE("Rosenbrock within 100 iterations with a monotone trace") {
  VectorXd x0(2);
  x0 << -1.2, 1.0;
  const auto r = minimize_deterministic(rosenbrock, x0);
  CHECK(r.value < 1e-6);
  const auto v = r.trace.values();
  for (std::size_t i = 1; i < v.size(); ++i) CHECK(v[i] <= v[i - 1] + 1e-12);
  for (std::size_t i = 1; i < r.trace.iterations.size(); ++i)
    CHECK(r.trace.iterations[i].iter > r.trace.iterations[i - 1].iter);
}

TEST_CASE("deterministic optimizer rejects a non-finite start") {
  const Objective bad = [](const VectorXd& x) {
    return ObjectiveEvaluation{std::numeric_limits<double>::quiet_NaN(), VectorXd::Zero(x.size())};
  };
  CHECK_THROWS_AS(minimize_deterministic(bad, VectorXd::Zero(2)), NumericalFailure);
}

TEST_CASE("coordinate permutation gives the permuted result") {
  const Quadratic q = random_quadratic(4, 3);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
  perm.indices() << 2, 0, 3, 1;
  Quadratic qp{perm * q.a * perm.transpose(), perm * q.b};
  VectorXd x0(4);
  x0 << 0.3, -0.2, 0.5, 1.0;
  const auto r = minimize_deterministic(q, x0);
  const auto rp = minimize_deterministic(qp, perm * x0);
  CHECK((perm * r.x - rp.x).norm() < 1e-10);
  CHECK(r.trace.iterations.size() == rp.trace.iterations.size());

  SvgpConfig cfg;
  cfg.batch_size = 1;
  cfg.max_iters = 50;
  StochasticObjective s{1, [&](const VectorXd& x, std::span<const Index>) { return q(x); }};
  StochasticObjective sp{1, [&](const VectorXd& x, std::span<const Index>) { return qp(x); }};
  const auto a = minimize_stochastic(s, x0, cfg);
  const auto b = minimize_stochastic(sp, perm * x0, cfg);
  CHECK((perm * a.x - b.x).norm() < 1e-12);
}

TEST_CASE("stochastic optimizer converges on a quadratic") {
  const Quadratic q = random_quadratic(3, 4);
  StochasticObjective s{10, [&](const VectorXd& x, std::span<const Index>) { return q(x); }};
  SvgpConfig cfg;
  cfg.batch_size = 10;
  const auto r = minimize_stochastic(s, VectorXd::Zero(3), cfg);
  CHECK((r.x - q.a.ldlt().solve(q.b)).norm() < 1e-4);
}

TEST_CASE("zero gradient leaves x unchanged") {
  StochasticObjective s{5, [](const VectorXd& x, std::span<const Index>) {
                          return ObjectiveEvaluation{1.0, VectorXd::Zero(x.size())};
                        }};
  SvgpConfig cfg;
  cfg.batch_size = 2;
  cfg.max_iters = 20;
  const VectorXd x0 = VectorXd::LinSpaced(3, -1, 1);
  CHECK((minimize_stochastic(s, x0, cfg).x - x0).norm() == 0.0);
}

TEST_CASE("full batch with zero momentum is fixed-step descent") {
  const Quadratic q = random_quadratic(3, 5);
  StochasticObjective s{4, [&](const VectorXd& x, std::span<const Index>) { return q(x); }};
  SvgpConfig cfg;
  cfg.batch_size = 4;
  cfg.max_iters = 25;
  cfg.momentum = 0;
  cfg.step_rate = 0.02;
  cfg.rule = StepRule::momentum;
  const auto r = minimize_stochastic(s, VectorXd::Ones(3), cfg);
  VectorXd x = VectorXd::Ones(3);
  for (int i = 0; i < 25; ++i) x -= 0.02 * q(x).gradient;
  CHECK((r.x - x).norm() < 1e-14);
}

TEST_CASE("stochastic traces are reproducible and batches cover each epoch") {
  std::vector<Index> seen;
  StochasticObjective s{7, [&](const VectorXd& x, std::span<const Index> rows) {
                          seen.insert(seen.end(), rows.begin(), rows.end());
                          return ObjectiveEvaluation{x.squaredNorm() + static_cast<double>(rows.front()), 2 * x};
                        }};
  SvgpConfig cfg;
  cfg.batch_size = 3;
  cfg.max_iters = 9;
  cfg.seed = 42;
  const auto a = minimize_stochastic(s, VectorXd::Ones(2), cfg);
  const auto first = seen;
  seen.clear();
  const auto b = minimize_stochastic(s, VectorXd::Ones(2), cfg);
  CHECK(first == seen);
  CHECK(a.trace.values() == b.trace.values());
  // Two full batches fit into an epoch of 7 rows; they never repeat a row.
  std::vector<Index> epoch(first.begin(), first.begin() + 6);
  std::sort(epoch.begin(), epoch.end());
  CHECK(std::adjacent_find(epoch.begin(), epoch.end()) == epoch.end());
}

TEST_CASE("non-finite evaluations are retried then abort") {
  int calls = 0;
  StochasticObjective flaky{4, [&](const VectorXd& x, std::span<const Index>) {
                              ++calls;
                              const double v = calls == 2 ? std::numeric_limits<double>::quiet_NaN() : x.squaredNorm();
                              return ObjectiveEvaluation{v, 2 * x};
                            }};
  SvgpConfig cfg;
  cfg.batch_size = 4;
  cfg.max_iters = 5;
  const auto r = minimize_stochastic(flaky, VectorXd::Ones(2), cfg);
  CHECK(r.rejected_steps == 1);
  CHECK(r.x.allFinite());

  StochasticObjective broken{4, [](const VectorXd& x, std::span<const Index>) {
                               return ObjectiveEvaluation{std::numeric_limits<double>::infinity(), x};
                             }};
  CHECK_THROWS_AS(minimize_stochastic(broken, VectorXd::Ones(2), cfg), NumericalFailure);
}

TEST_CASE("config validation") {
  SvgpConfig cfg;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(10), ContractViolation);
  cfg.batch_size = 11;
  CHECK_THROWS_AS(cfg.validate(10), ContractViolation);
  cfg.batch_size = 10;
  cfg.max_iters = 0;
  CHECK_THROWS_AS(cfg.validate(10), ContractViolation);
}

TEST_CASE("gradient checker") {
  const Quadratic q = random_quadratic(4, 6);
  CHECK(check_gradient(q, VectorXd::LinSpaced(4, -1, 1)) < 1e-9);
  const Objective corrupted = [&](const VectorXd& x) {
    auto e = q(x);
    e.gradient(1) *= 2;
    return e;
  };
  CHECK(check_gradient(corrupted, VectorXd::LinSpaced(4, -1, 1)) > 0.3);
}
