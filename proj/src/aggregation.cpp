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

#include "scalegp/aggregation.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>

namespace scalegp {

namespace {

bool is_committee(AggregationMethod method) {
  return method == AggregationMethod::bcm || method == AggregationMethod::rbcm;
}

std::vector<Dataset> expert_subsets(const Dataset& data, const Partition& partition) {
  std::vector<Dataset> out;
  for (const auto& rows : partition.blocks()) out.push_back(data.subset(rows));
  return out;
}

}  // namespace

std::string to_string(AggregationMethod method) {
  switch (method) {
    case AggregationMethod::poe: return "poe";
    case AggregationMethod::gpoe: return "gpoe";
    case AggregationMethod::bcm: return "bcm";
    case AggregationMethod::rbcm: return "rbcm";
  }
  return "unknown";
}

std::string to_string(BetaRule rule) {
  switch (rule) {
    case BetaRule::constant_one: return "one";
    case BetaRule::uniform_1_over_m: return "uniform";
    case BetaRule::differential_entropy: return "entropy";
    case BetaRule::normalized_entropy: return "normalized_entropy";
  }
  return "unknown";
}

std::string to_string(ExpertMode mode) {
  return mode == ExpertMode::shared_hp ? "shared" : "individual";
}

AggregationMethod parse_aggregation_method(const std::string& name) {
  for (auto m : {AggregationMethod::poe, AggregationMethod::gpoe, AggregationMethod::bcm, AggregationMethod::rbcm})
    if (to_string(m) == name) return m;
  throw ConfigError("unknown aggregation method '" + name + "' (expected poe, gpoe, bcm or rbcm)");
}

BetaRule parse_beta_rule(const std::string& name) {
  for (auto r : {BetaRule::constant_one, BetaRule::uniform_1_over_m, BetaRule::differential_entropy,
                 BetaRule::normalized_entropy})
    if (to_string(r) == name) return r;
  throw ConfigError("unknown beta rule '" + name + "' (expected one, uniform, entropy or normalized_entropy)");
}

ExpertMode parse_expert_mode(const std::string& name) {
  if (name == "shared") return ExpertMode::shared_hp;
  if (name == "individual") return ExpertMode::individual_hp;
  throw ConfigError("unknown expert mode '" + name + "' (expected shared or individual)");
}

BetaRule default_beta_rule(AggregationMethod method) {
  switch (method) {
    case AggregationMethod::poe:
    case AggregationMethod::bcm: return BetaRule::constant_one;
    case AggregationMethod::gpoe: return BetaRule::uniform_1_over_m;
    case AggregationMethod::rbcm: return BetaRule::differential_entropy;
  }
  return BetaRule::constant_one;
}

PredictiveDistribution aggregate(const std::vector<PredictiveDistribution>& experts, AggregationMethod method,
                                 BetaRule rule, const std::vector<double>& prior_vars, double noise_var,
                                 Flavor flavor, AggregationDiagnostics* diagnostics) {
  if (experts.empty()) throw ContractViolation("aggregate: no experts");
  if (prior_vars.size() != experts.size())
    throw ContractViolation("aggregate: need one prior variance per expert");
  const Index n = experts.front().mean.size();
  for (const auto& e : experts) {
    if (e.mean.size() != n || e.variance.size() != n)
      throw ContractViolation("aggregate: expert predictions have different lengths");
    if (e.flavor != Flavor::latent) throw ContractViolation("aggregate: expert predictions must be latent");
    if (!(e.variance.array() > 0).all()) throw ContractViolation("aggregate: expert variances must be positive");
  }
  for (double p : prior_vars)
    if (!(p > 0)) throw ContractViolation("aggregate: prior variances must be positive");
  if (!(noise_var >= 0)) throw ContractViolation("aggregate: noise variance must be non-negative");
  if (is_committee(method)) {
    for (double p : prior_vars)
      if (std::abs(p - prior_vars.front()) > 1e-12 * prior_vars.front())
        throw ContractViolation("aggregate: " + to_string(method) + " needs experts that share one prior");
  }

  const auto m = static_cast<Index>(experts.size());
  AggregationDiagnostics diag;
  PredictiveDistribution out;
  out.flavor = flavor;
  out.mean.resize(n);
  out.variance.resize(n);
  VectorXd beta(m);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < m; ++i) {
      switch (rule) {
        case BetaRule::constant_one: beta(i) = 1.0; break;
        case BetaRule::uniform_1_over_m: beta(i) = 1.0 / static_cast<double>(m); break;
        case BetaRule::differential_entropy:
        case BetaRule::normalized_entropy:
          beta(i) = 0.5 * (std::log(prior_vars[i]) - std::log(experts[i].variance(j)));
          break;
      }
    }
    if (rule == BetaRule::normalized_entropy) {
      const double total = beta.sum();
      if (total > 0) beta /= total;
      else beta.setConstant(1.0 / static_cast<double>(m));
    }
    for (Index i = 0; i < m; ++i)
      if (beta(i) < 0) ++diag.negative_betas;

    double precision = 0;
    double weighted = 0;
    for (Index i = 0; i < m; ++i) {
      const double p = beta(i) / experts[i].variance(j);
      precision += p;
      weighted += p * experts[i].mean(j);
    }
    if (is_committee(method)) precision += (1.0 - beta.sum()) / prior_vars.front();
    if (!(precision >= kPrecisionFloor)) {
      precision = kPrecisionFloor;
      ++diag.precision_floor_hits;
    }
    out.variance(j) = 1.0 / precision;
    out.mean(j) = weighted / precision;
  }
  if (flavor == Flavor::observed) out.variance.array() += noise_var;
  if (diagnostics) {
    diagnostics->precision_floor_hits += diag.precision_floor_hits;
    diagnostics->negative_betas += diag.negative_betas;
  }
  return out;
}

Index ExpertEnsemble::num_active() const {
  Index k = 0;
  for (bool e : excluded)
    if (!e) ++k;
  return k;
}

double ExpertEnsemble::noise_var() const {
  if (mode == ExpertMode::shared_hp) return hp_shared.noise_var();
  double sum = 0;
  Index k = 0;
  for (std::size_t i = 0; i < experts.size(); ++i) {
    if (excluded[i]) continue;
    sum += experts[i].hp.noise_var();
    ++k;
  }
  return k > 0 ? sum / static_cast<double>(k) : std::numeric_limits<double>::quiet_NaN();
}

ObjectiveEvaluation shared_expert_nlml(const Dataset& data, const Partition& partition, const Hyperparameters& hp,
                                       Index exact_cap) {
  partition.validate(data.size());
  ObjectiveEvaluation total{0, VectorXd::Zero(hp.packed_size())};
  for (const Dataset& subset : expert_subsets(data, partition)) {
    const ObjectiveEvaluation e = full_gp_nlml(subset, hp, exact_cap);
    total.value += e.value;
    total.gradient += e.gradient;
  }
  return total;
}

ExpertEnsemble fit_experts(const Dataset& data, const Partition& partition, ExpertMode mode,
                           const Hyperparameters& hp0, const DeterministicConfig& config, Index exact_cap) {
  data.validate();
  partition.validate(data.size());
  if (hp0.dim() != data.dim()) throw ContractViolation("fit_experts: hyperparameter dimension mismatch");
  const std::vector<Dataset> subsets = expert_subsets(data, partition);
  const auto m = subsets.size();

  ExpertEnsemble ens;
  ens.mode = mode;
  ens.partition = partition;
  ens.excluded.assign(m, false);

  if (mode == ExpertMode::shared_hp) {
    const Index d = hp0.dim();
    (void)shared_expert_nlml(data, partition, hp0, exact_cap);
    const Objective objective = [&](const VectorXd& x) {
      const Hyperparameters hp = Hyperparameters::unpack(x, d);
      const ObjectiveEvaluation fail{std::numeric_limits<double>::infinity(), VectorXd::Zero(x.size())};
      if (!hp.is_valid()) return fail;
      try {
        return shared_expert_nlml(data, partition, hp, exact_cap);
      } catch (const NumericalFailure&) {
        return fail;
      }
    };
    const OptimizeResult opt = minimize_deterministic(objective, hp0.pack(), config);
    ens.hp_shared = Hyperparameters::unpack(opt.x, d);
    ens.trace = opt.trace;
    std::vector<std::future<TrainedFullGP>> jobs;
    for (const Dataset& s : subsets)
      jobs.push_back(std::async(std::launch::async, [&s, &ens, exact_cap] {
        return condition_full_gp(s, ens.hp_shared, exact_cap);
      }));
    for (auto& j : jobs) ens.experts.push_back(j.get());
  } else {
    ens.hp_shared = hp0;
    std::vector<std::future<TrainedFullGP>> jobs;
    for (const Dataset& s : subsets)
      jobs.push_back(std::async(std::launch::async, [&s, &hp0, &config, exact_cap] {
        return fit_full_gp(s, hp0, config, exact_cap);
      }));
    for (std::size_t i = 0; i < m; ++i) {
      try {
        ens.experts.push_back(jobs[i].get());
      } catch (const NumericalFailure& e) {
        ens.excluded[i] = true;
        ens.warnings.push_back("expert " + std::to_string(i) + " excluded: " + e.what());
        TrainedFullGP placeholder;
        placeholder.dataset = subsets[i];
        placeholder.hp = hp0;
        ens.experts.push_back(std::move(placeholder));
      }
    }
  }

  for (std::size_t i = 0; i < m; ++i) {
    ens.prior_vars.push_back(ens.experts[i].hp.signal_var());
    if (!ens.excluded[i]) ens.objective += ens.experts[i].nlml;
  }
  return ens;
}

PredictiveDistribution predict_aggregated(const ExpertEnsemble& ensemble, const MatrixXd& x_star,
                                          AggregationMethod method, std::optional<BetaRule> rule, Flavor flavor,
                                          AggregationDiagnostics* diagnostics) {
  if (ensemble.num_active() == 0) throw ContractViolation("predict_aggregated: every expert is excluded");
  if (ensemble.mode == ExpertMode::individual_hp && is_committee(method))
    throw ContractViolation(to_string(method) + " requires shared hyperparameters");

  std::vector<const TrainedFullGP*> active;
  std::vector<double> priors;
  for (std::size_t i = 0; i < ensemble.experts.size(); ++i) {
    if (ensemble.excluded[i]) continue;
    active.push_back(&ensemble.experts[i]);
    priors.push_back(ensemble.prior_vars[i]);
  }
  std::vector<std::future<PredictiveDistribution>> jobs;
  for (const TrainedFullGP* e : active)
    jobs.push_back(std::async(std::launch::async, [e, &x_star] { return predict(*e, x_star, Flavor::latent); }));
  std::vector<PredictiveDistribution> preds;
  for (auto& j : jobs) {
    PredictiveDistribution p = j.get();
    // Clamped expert variances would make the precision infinite.
    p.variance = p.variance.cwiseMax(1e-300);
    preds.push_back(std::move(p));
  }
  return aggregate(preds, method, rule.value_or(default_beta_rule(method)), priors, ensemble.noise_var(), flavor,
                   diagnostics);
}

}  // namespace scalegp
