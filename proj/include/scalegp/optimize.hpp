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

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "scalegp/types.hpp"

namespace scalegp {

/// Objective to be minimized: returns value and gradient at x.
using Objective = std::function<ObjectiveEvaluation(const VectorXd&)>;

/// Minibatch objective: unbiased value/gradient estimate on the rows in `batch`.
struct StochasticObjective {
  Index n_total{0};
  std::function<ObjectiveEvaluation(const VectorXd&, std::span<const Index> batch)> evaluate;
};

struct OptTraceEntry {
  Index iter{0};
  double value{0};
  double gradient_norm{0};
  double step_size{0};
  double wall_time_s{0};
};

struct OptTrace {
  std::vector<OptTraceEntry> iterations;

  std::vector<double> values() const;
  bool empty() const { return iterations.empty(); }
};

enum class OptStatus {
  gradient_converged,
  relative_converged,
  max_iterations,
  line_search_failed,
};

std::string to_string(OptStatus status);

struct OptimizeResult {
  VectorXd x;
  double value{0};
  OptTrace trace;
  OptStatus status{OptStatus::max_iterations};
  Index evaluations{0};
  Index rejected_steps{0};
};

struct DeterministicConfig {
  Index max_iters{100};
  double grad_tol{1e-6};
  double rel_f_tol{1e-9};
  Index history{10};
};

/*
 * Limited-memory quasi-Newton descent with a backtracking line search that
 * enforces sufficient decrease, so the trace is monotone. A failed line search
 * restarts once from steepest descent before giving up with
 * OptStatus::line_search_failed. Throws NumericalFailure when the objective is
 * not finite at x0.
 */
OptimizeResult minimize_deterministic(const Objective& objective, const VectorXd& x0,
                                      const DeterministicConfig& config = {});

enum class StepRule {
  adadelta,  // decayed squared-gradient/step accumulators plus momentum
  momentum,  // fixed step rate with classical momentum
};

/// Stochastic training configuration; defaults follow the usual SVGP protocol.
struct SvgpConfig {
  Index batch_size{30};
  double step_rate{0.1};
  double momentum{0.9};
  double decay{0.9};
  double offset{1e-4};
  Index max_iters{1000};
  std::uint64_t seed{0};
  StepRule rule{StepRule::adadelta};
  Index max_retries{10};

  void validate(Index n) const;
};

/*
 * Minibatch stochastic descent. Batches are drawn without replacement and
 * reshuffled every epoch from `seed`, so a fixed seed gives a bitwise
 * reproducible trace. A non-finite evaluation rejects the step, leaves the
 * accumulators untouched and retries the same batch at half the step rate;
 * `max_retries` consecutive failures throw NumericalFailure.
 */
OptimizeResult minimize_stochastic(const StochasticObjective& objective, const VectorXd& x0,
                                   const SvgpConfig& config);

/// Largest relative error between the analytic gradient and central
/// differences, |g - g_fd| / max(1e-8, |g| + |g_fd|), over all coordinates.
double check_gradient(const Objective& objective, const VectorXd& x0, double step = 1e-5);

/// Central-difference gradient, exposed for diagnostics and tests.
VectorXd finite_difference_gradient(const Objective& objective, const VectorXd& x0,
                                    double step = 1e-5);

}  // namespace scalegp
