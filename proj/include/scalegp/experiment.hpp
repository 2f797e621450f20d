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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "scalegp/aggregation.hpp"
#include "scalegp/data.hpp"
#include "scalegp/sparse_gp.hpp"
#include "scalegp/svgp.hpp"
#include "scalegp/types.hpp"

namespace scalegp {

enum class ModelKind { full, sor, dtc, fitc, pic, vfe, svgp, poe, gpoe, bcm, rbcm };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& name);
bool is_sparse(ModelKind kind);
bool is_aggregation(ModelKind kind);

enum class InitMode { protocol, random };

struct ExperimentConfig {
  ModelKind method{ModelKind::full};

  // Data: a CSV file, or the sinc generator when `data_path` is empty.
  std::string data_path;
  std::string target_column{"y"};
  double test_fraction{0.1};
  SincConfig sinc;

  Index inducing{15};          // m
  bool train_inducing{true};
  Index experts{10};           // M
  ExpertMode expert_mode{ExpertMode::shared_hp};
  std::optional<BetaRule> beta_rule;
  Index exact_cap{kDefaultExactCap};

  InitMode init{InitMode::protocol};
  double init_lengthscale{0.5};
  double init_signal_var{1.0};
  double init_noise_var{0.1};
  Index restarts{1};

  DeterministicConfig optimizer;
  SvgpConfig sgd{.batch_size = 30, .max_iters = 1000};

  std::uint64_t seed{0};        // data generation and split
  std::uint64_t model_seed{0};  // k-means, minibatches, random initialization

  std::string report_path;
  std::string predictions_path;
  std::string trace_path;
  std::string snapshot_path;

  /// Cross-field checks; throws ConfigError naming the offending key.
  void validate() const;
};

/// Flat `key = value` text, one entry per line, `#` starts a comment.
/// Unknown keys and malformed values throw ConfigError naming the key.
ExperimentConfig parse_config(std::istream& in);
ExperimentConfig load_config(const std::string& path);
void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value);
std::vector<std::string> config_keys();
nlohmann::json to_json(const ExperimentConfig& config);

struct Diagnostics {
  double jitter{0};                 // largest jitter any final factorization needed
  std::vector<Index> excluded_experts;
  Index precision_floor_hits{0};
  Index negative_betas{0};
  Index clamped_variances{0};
  double noise_var{0};              // estimated, normalized units
  double noise_var_raw{0};          // the same estimate in target units
  std::string optimizer_status;
  std::vector<std::string> warnings;
  std::optional<double> smse_noiseless;  // sinc data only
};

struct MetricsReport {
  ModelKind method{ModelKind::full};
  double smse{0};
  double msll{0};
  double train_time_s{0};
  double predict_time_s{0};
  double nlml_or_bound{0};  // negative log evidence or negative bound, normalized units
  Index n_train{0};
  Index n_test{0};
  Diagnostics diagnostics;
  OptTrace trace;
};

nlohmann::json to_json(const MetricsReport& report, const ExperimentConfig& config);

/// Loads or generates data, normalizes with training statistics, fits, predicts
/// and scores in normalized units. Writes every configured output path; on
/// failure none of them is left behind. Errors carry the failing stage name.
MetricsReport run_experiment(const ExperimentConfig& config);

/// Fitted parameters needed to rebuild a predictor from the training data.
struct ModelSnapshot {
  ExperimentConfig config;
  NormStats norm;
  std::vector<Hyperparameters> hp;  // one entry, or one per expert
  MatrixXd inducing;
  std::vector<Index> excluded;     // experts dropped during fitting
  std::vector<Index> assignments;
  MatrixXd centroids;
  std::optional<VariationalState> state;
};

nlohmann::json to_json(const ModelSnapshot& snapshot);
ModelSnapshot snapshot_from_json(const nlohmann::json& j);
ModelSnapshot load_snapshot(const std::string& path);

/// Rebuilds the training set named in the snapshot, conditions the model at
/// the stored parameters and predicts at raw inputs. Returns observed-flavor
/// predictions in normalized units.
PredictiveDistribution predict_from_snapshot(const ModelSnapshot& snapshot, const MatrixXd& x_raw);

/// Writes x (raw), mean and variance in both raw and normalized units.
void write_predictions(const std::string& path, const MatrixXd& x_raw, const PredictiveDistribution& normalized,
                       const NormStats& norm, const std::vector<std::string>& x_names,
                       const std::optional<VectorXd>& y_raw = std::nullopt);

struct GradcheckResult {
  std::string objective;
  Index draws{0};
  double max_relative_error{0};
};

/// Central-difference check of every analytic gradient (full-GP NLML, the five
/// sparse evidences and the SVGP bound) at `draws` random parameter settings.
std::vector<GradcheckResult> run_gradcheck(Index draws, std::uint64_t seed);

/// l ~ U(0, 1), sf2 ~ U(0, 1), sn2 ~ U(0, 0.5).
Hyperparameters random_initial_hp(Index dim, std::uint64_t seed);

}  // namespace scalegp
