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

#include "scalegp/optimize.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>

namespace scalegp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool finite_eval(const ObjectiveEvaluation& e) {
  return std::isfinite(e.value) && e.gradient.allFinite();
}

struct CurvaturePair {
  VectorXd s;
  VectorXd y;
  double rho;
};

VectorXd two_loop_direction(const VectorXd& g, const std::deque<CurvaturePair>& memory) {
  VectorXd q = g;
  std::vector<double> alpha(memory.size());
  for (std::size_t k = memory.size(); k-- > 0;) {
    alpha[k] = memory[k].rho * memory[k].s.dot(q);
    q -= alpha[k] * memory[k].y;
  }
  if (!memory.empty()) {
    const auto& last = memory.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
  }
  for (std::size_t k = 0; k < memory.size(); ++k) {
    const double beta = memory[k].rho * memory[k].y.dot(q);
    q += (alpha[k] - beta) * memory[k].s;
  }
  return -q;
}

}  // namespace

std::vector<double> OptTrace::values() const {
  std::vector<double> v;
  v.reserve(iterations.size());
  for (const auto& it : iterations) v.push_back(it.value);
  return v;
}

std::string to_string(OptStatus status) {
  switch (status) {
    case OptStatus::gradient_converged: return "gradient_converged";
    case OptStatus::relative_converged: return "relative_converged";
    case OptStatus::max_iterations: return "max_iterations";
    case OptStatus::line_search_failed: return "line_search_failed";
  }
  return "unknown";
}

OptimizeResult minimize_deterministic(const Objective& objective, const VectorXd& x0,
                                      const DeterministicConfig& config) {
  if (!x0.allFinite()) throw NumericalFailure("minimize_deterministic: x0 is not finite");
  const auto start = Clock::now();

  OptimizeResult result;
  result.x = x0;
  ObjectiveEvaluation cur = objective(x0);
  result.evaluations = 1;
  if (!finite_eval(cur))
    throw NumericalFailure("minimize_deterministic: objective is not finite at the starting point");
  if (cur.gradient.size() != x0.size())
    throw ContractViolation("minimize_deterministic: gradient length differs from parameter count");

  result.trace.iterations.push_back({0, cur.value, cur.gradient.norm(), 0.0, seconds_since(start)});
  result.value = cur.value;
  if (cur.gradient.norm() <= config.grad_tol) {
    result.status = OptStatus::gradient_converged;
    return result;
  }

  constexpr double kArmijo = 1e-4;
  constexpr int kMaxBacktracks = 50;
  std::deque<CurvaturePair> memory;
  result.status = OptStatus::max_iterations;

  for (Index iter = 1; iter <= config.max_iters; ++iter) {
    bool accepted = false;
    double step = 0;
    ObjectiveEvaluation next;
    VectorXd x_next;

    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      VectorXd dir = two_loop_direction(cur.gradient, memory);
      double slope = cur.gradient.dot(dir);
      if (!(slope < 0)) {
        memory.clear();
        dir = -cur.gradient;
        slope = -cur.gradient.squaredNorm();
      }
      step = memory.empty() ? std::min(1.0, 1.0 / dir.norm()) : 1.0;
      for (int bt = 0; bt < kMaxBacktracks; ++bt) {
        x_next = result.x + step * dir;
        next = objective(x_next);
        ++result.evaluations;
        if (finite_eval(next) && next.value <= cur.value + kArmijo * step * slope) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) {
        if (memory.empty()) break;
        memory.clear();
      }
    }
    if (!accepted) {
      result.status = OptStatus::line_search_failed;
      break;
    }

    const VectorXd s = x_next - result.x;
    const VectorXd y = next.gradient - cur.gradient;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      memory.push_back({s, y, 1.0 / sy});
      if (static_cast<Index>(memory.size()) > config.history) memory.pop_front();
    }

    const double previous = cur.value;
    result.x = x_next;
    cur = std::move(next);
    result.value = cur.value;
    const double gnorm = cur.gradient.norm();
    result.trace.iterations.push_back({iter, cur.value, gnorm, s.norm(), seconds_since(start)});

    if (gnorm <= config.grad_tol) {
      result.status = OptStatus::gradient_converged;
      break;
    }
    const double scale = std::max({std::abs(previous), std::abs(cur.value), 1.0});
    if (previous - cur.value <= config.rel_f_tol * scale) {
      result.status = OptStatus::relative_converged;
      break;
    }
  }
  return result;
}

void SvgpConfig::validate(Index n) const {
  if (batch_size < 1 || batch_size > n)
    throw ContractViolation("batch size must lie in [1, n]");
  if (max_iters < 1) throw ContractViolation("max_iters must be at least 1");
  if (!(step_rate > 0)) throw ContractViolation("step rate must be positive");
  if (momentum < 0 || momentum >= 1) throw ContractViolation("momentum must lie in [0, 1)");
  if (decay < 0 || decay >= 1) throw ContractViolation("decay must lie in [0, 1)");
}

OptimizeResult minimize_stochastic(const StochasticObjective& objective, const VectorXd& x0,
                                   const SvgpConfig& config) {
  config.validate(objective.n_total);
  if (!x0.allFinite()) throw NumericalFailure("minimize_stochastic: x0 is not finite");
  const auto start = Clock::now();

  const Index p = x0.size();
  OptimizeResult result;
  result.x = x0;
  VectorXd step = VectorXd::Zero(p);
  VectorXd grad_acc = VectorXd::Zero(p);  // decayed mean of g^2
  VectorXd step_acc = VectorXd::Zero(p);  // decayed mean of step^2

  std::mt19937_64 rng(config.seed);
  std::vector<Index> order(objective.n_total);
  std::iota(order.begin(), order.end(), Index{0});
  std::size_t cursor = order.size();

  for (Index iter = 1; iter <= config.max_iters; ++iter) {
    if (cursor + static_cast<std::size_t>(config.batch_size) > order.size()) {
      std::shuffle(order.begin(), order.end(), rng);
      cursor = 0;
    }
    const std::span<const Index> batch(order.data() + cursor, config.batch_size);
    cursor += config.batch_size;

    double rate = config.step_rate;
    bool done = false;
    for (Index retry = 0; retry <= config.max_retries && !done; ++retry) {
      // Momentum part is applied before the gradient is taken (Nesterov style).
      const VectorXd lookahead_step = config.momentum * step;
      const VectorXd x_look = result.x - lookahead_step;
      ObjectiveEvaluation e = objective.evaluate(x_look, batch);
      ++result.evaluations;
      if (!finite_eval(e)) {
        ++result.rejected_steps;
        rate *= 0.5;
        continue;
      }
      VectorXd grad_step;
      if (config.rule == StepRule::adadelta) {
        const VectorXd acc = config.decay * grad_acc.array() +
                             (1 - config.decay) * e.gradient.array().square();
        grad_step = ((step_acc.array() + config.offset).sqrt() /
                     (acc.array() + config.offset).sqrt() * e.gradient.array() * rate)
                        .matrix();
        grad_acc = acc;
      } else {
        grad_step = rate * e.gradient;
      }
      result.x = x_look - grad_step;
      step = lookahead_step + grad_step;
      if (config.rule == StepRule::adadelta)
        step_acc = config.decay * step_acc.array() + (1 - config.decay) * step.array().square();
      result.value = e.value;
      result.trace.iterations.push_back(
          {iter, e.value, e.gradient.norm(), step.norm(), seconds_since(start)});
      done = true;
    }
    if (!done)
      throw NumericalFailure("minimize_stochastic: objective not finite after " +
                             std::to_string(config.max_retries) + " step-rate halvings");
  }
  return result;
}

VectorXd finite_difference_gradient(const Objective& objective, const VectorXd& x0, double step) {
  VectorXd g(x0.size());
  VectorXd x = x0;
  for (Index i = 0; i < x0.size(); ++i) {
    x(i) = x0(i) + step;
    const double fp = objective(x).value;
    x(i) = x0(i) - step;
    const double fm = objective(x).value;
    x(i) = x0(i);
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericalFailure("finite_difference_gradient: objective not finite at a perturbed point");
    g(i) = (fp - fm) / (2 * step);
  }
  return g;
}

double check_gradient(const Objective& objective, const VectorXd& x0, double step) {
  const ObjectiveEvaluation e = objective(x0);
  if (e.gradient.size() != x0.size())
    throw ContractViolation("check_gradient: gradient length differs from parameter count");
  const VectorXd fd = finite_difference_gradient(objective, x0, step);
  double worst = 0;
  for (Index i = 0; i < x0.size(); ++i) {
    const double a = e.gradient(i);
    const double rel = std::abs(a - fd(i)) / std::max(1e-8, std::abs(a) + std::abs(fd(i)));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace scalegp
