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

#include <optional>
#include <string>
#include <vector>

#include "scalegp/data.hpp"
#include "scalegp/gp_full.hpp"
#include "scalegp/optimize.hpp"
#include "scalegp/partition.hpp"
#include "scalegp/types.hpp"

namespace scalegp {

enum class AggregationMethod { poe, gpoe, bcm, rbcm };

enum class BetaRule {
  constant_one,          // beta_i = 1
  uniform_1_over_m,      // beta_i = 1 / M
  differential_entropy,  // beta_i = 0.5 (log prior_var - log var_i(x))
  normalized_entropy,    // differential entropy rescaled to sum to one
};

enum class ExpertMode { shared_hp, individual_hp };

std::string to_string(AggregationMethod method);
std::string to_string(BetaRule rule);
std::string to_string(ExpertMode mode);
AggregationMethod parse_aggregation_method(const std::string& name);
BetaRule parse_beta_rule(const std::string& name);
ExpertMode parse_expert_mode(const std::string& name);

/// PoE and BCM take beta = 1, GPoE 1/M, RBCM the differential entropy.
BetaRule default_beta_rule(AggregationMethod method);

inline constexpr double kPrecisionFloor = 1e-12;

struct AggregationDiagnostics {
  Index precision_floor_hits{0};
  Index negative_betas{0};
};

/*
 * Pointwise aggregation of latent expert predictions:
 *
 *   precision = sum_i beta_i / var_i  [+ (1 - sum_i beta_i) / prior_var  for BCM, RBCM]
 *   mean      = var * sum_i beta_i mean_i / var_i
 *
 * `prior_vars` holds one prior latent variance per expert; BCM and RBCM
 * require them to agree. For the observed flavor `noise_var` is added after
 * aggregation. Precisions below kPrecisionFloor are raised to it and counted.
 */
PredictiveDistribution aggregate(const std::vector<PredictiveDistribution>& experts, AggregationMethod method,
                                 BetaRule rule, const std::vector<double>& prior_vars, double noise_var,
                                 Flavor flavor = Flavor::observed, AggregationDiagnostics* diagnostics = nullptr);

struct ExpertEnsemble {
  std::vector<TrainedFullGP> experts;  // one per partition block
  std::vector<bool> excluded;          // individual mode: factorization failed
  ExpertMode mode{ExpertMode::shared_hp};
  Hyperparameters hp_shared;           // shared mode only
  std::vector<double> prior_vars;      // sf2 of every expert
  Partition partition;
  std::vector<std::string> warnings;
  double objective{0};  // summed NLML over the active experts
  OptTrace trace;       // shared mode only

  Index num_active() const;
  /// Mean noise variance over the active experts.
  double noise_var() const;
};

/// Shared mode minimizes the summed expert NLML over one set of
/// hyperparameters; individual mode fits every expert on its own (concurrently).
ExpertEnsemble fit_experts(const Dataset& data, const Partition& partition, ExpertMode mode,
                           const Hyperparameters& hp0, const DeterministicConfig& config = {},
                           Index exact_cap = kDefaultExactCap);

/// Summed expert NLML and gradient at a single shared hyperparameter vector.
ObjectiveEvaluation shared_expert_nlml(const Dataset& data, const Partition& partition, const Hyperparameters& hp,
                                       Index exact_cap = kDefaultExactCap);

/// Queries every active expert and aggregates pointwise. The default rule is
/// default_beta_rule(method).
PredictiveDistribution predict_aggregated(const ExpertEnsemble& ensemble, const MatrixXd& x_star,
                                          AggregationMethod method, std::optional<BetaRule> rule = std::nullopt,
                                          Flavor flavor = Flavor::observed,
                                          AggregationDiagnostics* diagnostics = nullptr);

}  // namespace scalegp
