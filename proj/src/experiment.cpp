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


#include "scalegp/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "scalegp/gp_full.hpp"
#include "scalegp/kernel.hpp"
#include "scalegp/metrics.hpp"
#include "scalegp/partition.hpp"
#include "scalegp/svgp.hpp"

namespace scalegp {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected a number, got '" + value + "'");
}

Index parse_index(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long v = std::stoll(value, &used);
    if (used == value.size() && v >= 0) return static_cast<Index>(v);
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + value + "'");
}

std::uint64_t parse_seed(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const unsigned long long v = std::stoull(value, &used);
    if (used == value.size() && value.front() != '-') return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("config key '" + key + "': expected a non-negative integer seed, got '" + value + "'");
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + value + "'");
}

template <typename Parse>
auto rethrow_as_config(const std::string& key, Parse&& parse) {
  try {
    return parse();
  } catch (const ConfigError& e) {
    throw ConfigError("config key '" + key + "': " + e.what());
  }
}

struct Setting {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<nlohmann::json(const ExperimentConfig&)> get;
};

const std::map<std::string, Setting>& settings() {
  using C = ExperimentConfig;
  using J = nlohmann::json;
  static const std::map<std::string, Setting> table = {
      {"method",
       {[](C& c, const std::string& v) { c.method = rethrow_as_config("method", [&] { return parse_model_kind(v); }); },
        [](const C& c) { return J(to_string(c.method)); }}},
      {"data", {[](C& c, const std::string& v) { c.data_path = v; }, [](const C& c) { return J(c.data_path); }}},
      {"target",
       {[](C& c, const std::string& v) { c.target_column = v; }, [](const C& c) { return J(c.target_column); }}},
      {"test_fraction",
       {[](C& c, const std::string& v) { c.test_fraction = parse_double("test_fraction", v); },
        [](const C& c) { return J(c.test_fraction); }}},
      {"sinc_n_train",
       {[](C& c, const std::string& v) { c.sinc.n_train = parse_index("sinc_n_train", v); },
        [](const C& c) { return J(c.sinc.n_train); }}},
      {"sinc_n_test",
       {[](C& c, const std::string& v) { c.sinc.n_test = parse_index("sinc_n_test", v); },
        [](const C& c) { return J(c.sinc.n_test); }}},
      {"sinc_noise_var",
       {[](C& c, const std::string& v) { c.sinc.noise_var = parse_double("sinc_noise_var", v); },
        [](const C& c) { return J(c.sinc.noise_var); }}},
      {"m",
       {[](C& c, const std::string& v) { c.inducing = parse_index("m", v); },
        [](const C& c) { return J(c.inducing); }}},
      {"train_inducing",
       {[](C& c, const std::string& v) { c.train_inducing = parse_bool("train_inducing", v); },
        [](const C& c) { return J(c.train_inducing); }}},
      {"experts",
       {[](C& c, const std::string& v) { c.experts = parse_index("experts", v); },
        [](const C& c) { return J(c.experts); }}},
      {"expert_mode",
       {[](C& c, const std::string& v) {
          c.expert_mode = rethrow_as_config("expert_mode", [&] { return parse_expert_mode(v); });
        },
        [](const C& c) { return J(to_string(c.expert_mode)); }}},
      {"beta",
       {[](C& c, const std::string& v) {
          if (v == "default") c.beta_rule.reset();
          else c.beta_rule = rethrow_as_config("beta", [&] { return parse_beta_rule(v); });
        },
        [](const C& c) { return J(c.beta_rule ? to_string(*c.beta_rule) : "default"); }}},
      {"exact_cap",
       {[](C& c, const std::string& v) { c.exact_cap = parse_index("exact_cap", v); },
        [](const C& c) { return J(c.exact_cap); }}},
      {"init",
       {[](C& c, const std::string& v) {
          if (v == "protocol") c.init = InitMode::protocol;
          else if (v == "random") c.init = InitMode::random;
          else throw ConfigError("config key 'init': expected protocol or random, got '" + v + "'");
        },
        [](const C& c) { return J(c.init == InitMode::protocol ? "protocol" : "random"); }}},
      {"init_lengthscale",
       {[](C& c, const std::string& v) { c.init_lengthscale = parse_double("init_lengthscale", v); },
        [](const C& c) { return J(c.init_lengthscale); }}},
      {"init_signal_var",
       {[](C& c, const std::string& v) { c.init_signal_var = parse_double("init_signal_var", v); },
        [](const C& c) { return J(c.init_signal_var); }}},
      {"init_noise_var",
       {[](C& c, const std::string& v) { c.init_noise_var = parse_double("init_noise_var", v); },
        [](const C& c) { return J(c.init_noise_var); }}},
      {"restarts",
       {[](C& c, const std::string& v) { c.restarts = parse_index("restarts", v); },
        [](const C& c) { return J(c.restarts); }}},
      {"max_iters",
       {[](C& c, const std::string& v) { c.optimizer.max_iters = parse_index("max_iters", v); },
        [](const C& c) { return J(c.optimizer.max_iters); }}},
      {"grad_tol",
       {[](C& c, const std::string& v) { c.optimizer.grad_tol = parse_double("grad_tol", v); },
        [](const C& c) { return J(c.optimizer.grad_tol); }}},
      {"batch_size",
       {[](C& c, const std::string& v) { c.sgd.batch_size = parse_index("batch_size", v); },
        [](const C& c) { return J(c.sgd.batch_size); }}},
      {"sgd_max_iters",
       {[](C& c, const std::string& v) { c.sgd.max_iters = parse_index("sgd_max_iters", v); },
        [](const C& c) { return J(c.sgd.max_iters); }}},
      {"step_rate",
       {[](C& c, const std::string& v) { c.sgd.step_rate = parse_double("step_rate", v); },
        [](const C& c) { return J(c.sgd.step_rate); }}},
      {"momentum",
       {[](C& c, const std::string& v) { c.sgd.momentum = parse_double("momentum", v); },
        [](const C& c) { return J(c.sgd.momentum); }}},
      {"decay",
       {[](C& c, const std::string& v) { c.sgd.decay = parse_double("decay", v); },
        [](const C& c) { return J(c.sgd.decay); }}},
      {"step_rule",
       {[](C& c, const std::string& v) {
          if (v == "adadelta") c.sgd.rule = StepRule::adadelta;
          else if (v == "momentum") c.sgd.rule = StepRule::momentum;
          else throw ConfigError("config key 'step_rule': expected adadelta or momentum, got '" + v + "'");
        },
        [](const C& c) { return J(c.sgd.rule == StepRule::adadelta ? "adadelta" : "momentum"); }}},
      {"seed",
       {[](C& c, const std::string& v) { c.seed = parse_seed("seed", v); }, [](const C& c) { return J(c.seed); }}},
      {"model_seed",
       {[](C& c, const std::string& v) { c.model_seed = parse_seed("model_seed", v); },
        [](const C& c) { return J(c.model_seed); }}},
      {"report", {[](C& c, const std::string& v) { c.report_path = v; }, [](const C& c) { return J(c.report_path); }}},
      {"predictions",
       {[](C& c, const std::string& v) { c.predictions_path = v; },
        [](const C& c) { return J(c.predictions_path); }}},
      {"trace", {[](C& c, const std::string& v) { c.trace_path = v; }, [](const C& c) { return J(c.trace_path); }}},
      {"snapshot",
       {[](C& c, const std::string& v) { c.snapshot_path = v; }, [](const C& c) { return J(c.snapshot_path); }}},
  };
  return table;
}

// Rethrows with the stage name prepended, keeping the error category.
template <typename F>
auto in_stage(const std::string& name, F&& body) {
  const std::string where = "stage '" + name + "': ";
  try {
    return body();
  } catch (const NumericalFailure& e) {
    throw NumericalFailure(where + e.what(), e.jitter_trail());
  } catch (const ConfigError& e) {
    throw ConfigError(where + e.what());
  } catch (const ContractViolation& e) {
    throw ContractViolation(where + e.what());
  } catch (const IoError& e) {
    throw IoError(where + e.what());
  }
}

class OutputGuard {
 public:
  ~OutputGuard() {
    if (committed_) return;
    for (const auto& p : paths_) std::remove(p.c_str());
  }
  void track(const std::string& path) {
    if (!path.empty()) paths_.push_back(path);
  }
  void commit() { committed_ = true; }

 private:
  std::vector<std::string> paths_;
  bool committed_{false};
};

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("failed while writing '" + path + "'");
}

struct PreparedData {
  Dataset train;  // normalized
  Dataset test;   // normalized with the training statistics
  NormStats norm;
  MatrixXd test_x_raw;
  VectorXd test_y_raw;
  std::vector<std::string> x_names;
  std::optional<VectorXd> test_clean;  // normalized, sinc only
  std::vector<std::string> warnings;
};

PreparedData prepare_data(const ExperimentConfig& config) {
  PreparedData out;
  if (config.data_path.empty()) {
    SincConfig sc = config.sinc;
    sc.seed = config.seed;
    const SincData sinc = generate_sinc(sc);
    out.train = normalize(sinc.train);
    out.norm = *out.train.norm;
    out.test = sinc.test;
    out.test.X = out.norm.apply(sinc.test.X);
    out.test.y = out.norm.apply_y(sinc.test.y);
    out.test.norm = out.norm;
    out.test_x_raw = sinc.test.X;
    out.test_y_raw = sinc.test.y;
    out.x_names = sinc.train.column_names;
    out.test_clean = out.norm.apply_y(sinc.test_clean);
  } else {
    const Dataset raw = load_csv(config.data_path, config.target_column);
    SplitResult parts = split(raw, config.test_fraction, config.seed);
    out.train = std::move(parts.train);
    out.test = std::move(parts.test);
    out.norm = *out.train.norm;
    const Dataset raw_test = raw.subset(parts.test_rows);
    out.test_x_raw = raw_test.X;
    out.test_y_raw = raw_test.y;
    out.x_names = raw.column_names;
  }
  for (Index c : out.norm.dropped_columns) {
    const std::string name =
        c < static_cast<Index>(out.x_names.size()) ? out.x_names[c] : "column " + std::to_string(c);
    out.warnings.push_back("dropped constant input column '" + name + "'");
  }
  return out;
}

Hyperparameters initial_hp(const ExperimentConfig& config, Index dim, Index restart) {
  if (restart > 0) return random_initial_hp(dim, config.model_seed + static_cast<std::uint64_t>(restart));
  if (config.init == InitMode::random) return random_initial_hp(dim, config.model_seed);
  return Hyperparameters::isotropic(dim, config.init_lengthscale, config.init_signal_var, config.init_noise_var);
}

AggregationMethod aggregation_method(ModelKind kind) {
  switch (kind) {
    case ModelKind::poe: return AggregationMethod::poe;
    case ModelKind::gpoe: return AggregationMethod::gpoe;
    case ModelKind::bcm: return AggregationMethod::bcm;
    case ModelKind::rbcm: return AggregationMethod::rbcm;
    default: throw ContractViolation(to_string(kind) + " is not an aggregation method");
  }
}

SparseMethod sparse_method(ModelKind kind) {
  switch (kind) {
    case ModelKind::sor: return SparseMethod::sor;
    case ModelKind::dtc: return SparseMethod::dtc;
    case ModelKind::fitc: return SparseMethod::fitc;
    case ModelKind::pic: return SparseMethod::pic;
    case ModelKind::vfe: return SparseMethod::vfe;
    default: throw ContractViolation(to_string(kind) + " is not a sparse method");
  }
}

struct FittedModel {
  ModelKind kind{ModelKind::full};
  std::optional<TrainedFullGP> full;
  std::optional<SparseModel> sparse;
  std::optional<SvgpModel> svgp;
  std::optional<ExpertEnsemble> ensemble;
  std::optional<Partition> partition;
  double objective{0};  // negative log evidence or negative bound
  OptTrace trace;
  std::string status;
};

OptTrace summed_expert_trace(const ExpertEnsemble& ens) {
  std::size_t longest = 0;
  for (std::size_t i = 0; i < ens.experts.size(); ++i)
    if (!ens.excluded[i]) longest = std::max(longest, ens.experts[i].trace.iterations.size());
  OptTrace out;
  for (std::size_t k = 0; k < longest; ++k) {
    OptTraceEntry entry;
    entry.iter = static_cast<Index>(k);
    for (std::size_t i = 0; i < ens.experts.size(); ++i) {
      const auto& it = ens.experts[i].trace.iterations;
      if (ens.excluded[i] || it.empty()) continue;
      entry.value += it[std::min(k, it.size() - 1)].value;
    }
    out.iterations.push_back(entry);
  }
  return out;
}

double jitter_of(const FittedModel& f) {
  double j = 0;
  if (f.full) j = f.full->chol.jitter;
  if (f.sparse) {
    j = std::max(f.sparse->kmm.jitter, f.sparse->inner.jitter);
    for (const auto& b : f.sparse->lambda_blocks) j = std::max(j, b.jitter);
  }
  if (f.svgp) j = f.svgp->kmm.jitter;
  if (f.ensemble)
    for (std::size_t i = 0; i < f.ensemble->experts.size(); ++i)
      if (!f.ensemble->excluded[i]) j = std::max(j, f.ensemble->experts[i].chol.jitter);
  return j;
}

FittedModel fit_once(const ExperimentConfig& config, const Dataset& train, const Hyperparameters& hp0) {
  FittedModel out;
  out.kind = config.method;
  const Index d = train.dim();
  if (config.method == ModelKind::full) {
    out.full = fit_full_gp(train, hp0, config.optimizer, config.exact_cap);
    out.objective = out.full->nlml;
    out.trace = out.full->trace;
    out.status = to_string(out.full->status);
  } else if (is_sparse(config.method)) {
    const SparseMethod method = sparse_method(config.method);
    InducingSet z0 = config.inducing > 0 ? init_inducing_kmeans(train.X, config.inducing, config.model_seed)
                                         : InducingSet{MatrixXd(0, d), true};
    z0.trainable = config.train_inducing;
    if (method == SparseMethod::pic) out.partition = partition_kmeans(train.X, config.experts, config.model_seed);
    out.sparse = fit_sparse(method, train, z0, hp0, config.optimizer, out.partition ? &*out.partition : nullptr);
    out.objective = -out.sparse->evidence;
    out.trace = out.sparse->trace;
    out.status = to_string(out.sparse->status);
  } else if (config.method == ModelKind::svgp) {
    InducingSet z0 = init_inducing_kmeans(train.X, config.inducing, config.model_seed);
    z0.trainable = config.train_inducing;
    SvgpConfig sgd = config.sgd;
    sgd.seed = config.model_seed;
    out.svgp = fit_svgp(train, z0, hp0, sgd);
    out.objective = -elbo(train, train.size(), out.svgp->inducing.Z, out.svgp->hp, out.svgp->state);
    out.trace = out.svgp->trace;
    out.status = "max_iterations";
  } else {
    out.partition = partition_kmeans(train.X, config.experts, config.model_seed);
    out.ensemble = fit_experts(train, *out.partition, config.expert_mode, hp0, config.optimizer, config.exact_cap);
    out.objective = out.ensemble->objective;
    out.trace = config.expert_mode == ExpertMode::shared_hp ? out.ensemble->trace : summed_expert_trace(*out.ensemble);
    out.status = config.expert_mode == ExpertMode::shared_hp && !out.trace.empty() ? "shared" : "individual";
  }
  return out;
}

FittedModel fit_model(const ExperimentConfig& config, const Dataset& train, std::vector<std::string>& warnings) {
  std::optional<FittedModel> best;
  for (Index r = 0; r < std::max<Index>(1, config.restarts); ++r) {
    const Hyperparameters hp0 = initial_hp(config, train.dim(), r);
    try {
      FittedModel f = fit_once(config, train, hp0);
      if (!best || f.objective < best->objective) best = std::move(f);
    } catch (const NumericalFailure& e) {
      if (config.restarts <= 1) throw;
      warnings.push_back("restart " + std::to_string(r) + " failed: " + e.what());
    }
  }
  if (!best) throw NumericalFailure("every restart failed");
  return std::move(*best);
}

PredictiveDistribution predict_fitted(const FittedModel& f, const ExperimentConfig& config, const MatrixXd& x,
                                      AggregationDiagnostics* diag) {
  if (f.full) return predict(*f.full, x, Flavor::observed);
  if (f.sparse) return predict(*f.sparse, x, Flavor::observed);
  if (f.svgp) return predict(*f.svgp, x, Flavor::observed);
  return predict_aggregated(*f.ensemble, x, aggregation_method(f.kind), config.beta_rule, Flavor::observed, diag);
}

double sample_variance(const VectorXd& y) {
  const double n = static_cast<double>(y.size());
  return (y.array() - y.mean()).square().sum() / (n - 1.0);
}

nlohmann::json matrix_json(const MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

MatrixXd matrix_from_json(const nlohmann::json& j, Index cols) {
  MatrixXd m(static_cast<Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (static_cast<Index>(j[i].size()) != cols) throw IoError("snapshot: ragged matrix");
    for (Index c = 0; c < cols; ++c) m(static_cast<Index>(i), c) = j[i][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

std::vector<double> to_std(const VectorXd& v) { return {v.data(), v.data() + v.size()}; }

VectorXd from_std(const std::vector<double>& v) {
  return Eigen::Map<const VectorXd>(v.data(), static_cast<Index>(v.size()));
}

ModelSnapshot make_snapshot(const ExperimentConfig& config, const NormStats& norm, const FittedModel& f) {
  ModelSnapshot s;
  s.config = config;
  s.norm = norm;
  if (f.full) s.hp.push_back(f.full->hp);
  if (f.sparse) {
    s.hp.push_back(f.sparse->hp);
    s.inducing = f.sparse->inducing.Z;
  }
  if (f.svgp) {
    s.hp.push_back(f.svgp->hp);
    s.inducing = f.svgp->inducing.Z;
    s.state = f.svgp->state;
  }
  if (f.ensemble) {
    for (std::size_t i = 0; i < f.ensemble->experts.size(); ++i) {
      s.hp.push_back(f.ensemble->experts[i].hp);
      if (f.ensemble->excluded[i]) s.excluded.push_back(static_cast<Index>(i));
    }
  }
  if (f.partition) {
    s.assignments = f.partition->assignments;
    s.centroids = f.partition->centroids;
  }
  return s;
}

// Conditions the configured model on `train` at the stored parameters.
FittedModel rebuild(const ModelSnapshot& s, const Dataset& train) {
  const ExperimentConfig& config = s.config;
  FittedModel f;
  f.kind = config.method;
  if (s.hp.empty()) throw IoError("snapshot: no hyperparameters");
  std::optional<Partition> partition;
  if (!s.assignments.empty()) {
    partition = Partition{s.assignments, s.centroids};
    partition->validate(train.size());
  }
  if (config.method == ModelKind::full) {
    f.full = condition_full_gp(train, s.hp.front(), config.exact_cap);
  } else if (is_sparse(config.method)) {
    f.partition = partition;
    f.sparse = condition_sparse(sparse_method(config.method), train, InducingSet{s.inducing, config.train_inducing},
                                s.hp.front(), f.partition ? &*f.partition : nullptr);
  } else if (config.method == ModelKind::svgp) {
    if (!s.state) throw IoError("snapshot: SVGP snapshot without a variational state");
    f.svgp = make_svgp_model(train, InducingSet{s.inducing, config.train_inducing}, s.hp.front(), *s.state);
  } else {
    if (!partition) throw IoError("snapshot: aggregation snapshot without a partition");
    const auto blocks = partition->blocks();
    if (s.hp.size() != blocks.size()) throw IoError("snapshot: need one hyperparameter set per expert");
    ExpertEnsemble ens;
    ens.mode = config.expert_mode;
    ens.partition = *partition;
    ens.hp_shared = s.hp.front();
    ens.excluded.assign(blocks.size(), false);
    for (Index i : s.excluded) ens.excluded.at(static_cast<std::size_t>(i)) = true;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const Dataset subset = train.subset(blocks[i]);
      if (ens.excluded[i]) {
        TrainedFullGP placeholder;
        placeholder.dataset = subset;
        placeholder.hp = s.hp[i];
        ens.experts.push_back(std::move(placeholder));
      } else {
        ens.experts.push_back(condition_full_gp(subset, s.hp[i], config.exact_cap));
      }
      ens.prior_vars.push_back(s.hp[i].signal_var());
    }
    f.ensemble = std::move(ens);
  }
  return f;
}

void write_trace(const std::string& path, const OptTrace& trace) {
  std::ostringstream out;
  out.precision(17);
  out << "iteration,objective\n";
  for (const auto& e : trace.iterations) out << e.iter << ',' << e.value << '\n';
  write_text(path, out.str());
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::full: return "full";
    case ModelKind::sor: return "sor";
    case ModelKind::dtc: return "dtc";
    case ModelKind::fitc: return "fitc";
    case ModelKind::pic: return "pic";
    case ModelKind::vfe: return "vfe";
    case ModelKind::svgp: return "svgp";
    case ModelKind::poe: return "poe";
    case ModelKind::gpoe: return "gpoe";
    case ModelKind::bcm: return "bcm";
    case ModelKind::rbcm: return "rbcm";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& name) {
  for (auto k : {ModelKind::full, ModelKind::sor, ModelKind::dtc, ModelKind::fitc, ModelKind::pic, ModelKind::vfe,
                 ModelKind::svgp, ModelKind::poe, ModelKind::gpoe, ModelKind::bcm, ModelKind::rbcm})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown method '" + name +
                    "' (expected full, sor, dtc, fitc, pic, vfe, svgp, poe, gpoe, bcm or rbcm)");
}

bool is_sparse(ModelKind kind) {
  return kind == ModelKind::sor || kind == ModelKind::dtc || kind == ModelKind::fitc || kind == ModelKind::pic ||
         kind == ModelKind::vfe;
}

bool is_aggregation(ModelKind kind) {
  return kind == ModelKind::poe || kind == ModelKind::gpoe || kind == ModelKind::bcm || kind == ModelKind::rbcm;
}

void ExperimentConfig::validate() const {
  if (!(test_fraction > 0 && test_fraction < 1)) throw ConfigError("config key 'test_fraction': must lie in (0, 1)");
  if (data_path.empty()) {
    if (sinc.n_train < 2) throw ConfigError("config key 'sinc_n_train': need at least 2 points");
    if (sinc.n_test < 1) throw ConfigError("config key 'sinc_n_test': need at least 1 point");
    if (!(sinc.noise_var >= 0)) throw ConfigError("config key 'sinc_noise_var': must be non-negative");
  }
  if (inducing < 1 && method != ModelKind::pic && (is_sparse(method) || method == ModelKind::svgp))
    throw ConfigError("config key 'm': " + to_string(method) + " needs at least one inducing point");
  if ((is_aggregation(method) || method == ModelKind::pic) && experts < 1)
    throw ConfigError("config key 'experts': need at least one expert");
  if ((method == ModelKind::bcm || method == ModelKind::rbcm) && expert_mode == ExpertMode::individual_hp)
    throw ConfigError("config key 'expert_mode': " + to_string(method) + " requires shared hyperparameters");
  if (!(init_lengthscale > 0)) throw ConfigError("config key 'init_lengthscale': must be positive");
  if (!(init_signal_var > 0)) throw ConfigError("config key 'init_signal_var': must be positive");
  if (!(init_noise_var > 0)) throw ConfigError("config key 'init_noise_var': must be positive");
  if (restarts < 1) throw ConfigError("config key 'restarts': must be at least 1");
  if (optimizer.max_iters < 1) throw ConfigError("config key 'max_iters': must be at least 1");
  if (method == ModelKind::svgp) {
    if (sgd.batch_size < 1) throw ConfigError("config key 'batch_size': must be at least 1");
    if (sgd.max_iters < 1) throw ConfigError("config key 'sgd_max_iters': must be at least 1");
    if (!(sgd.step_rate > 0)) throw ConfigError("config key 'step_rate': must be positive");
    if (!(sgd.momentum >= 0 && sgd.momentum < 1)) throw ConfigError("config key 'momentum': must lie in [0, 1)");
    if (!(sgd.decay > 0 && sgd.decay < 1)) throw ConfigError("config key 'decay': must lie in (0, 1)");
  }
}

void apply_setting(ExperimentConfig& config, const std::string& key, const std::string& value) {
  const auto& table = settings();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.set(config, value);
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : settings()) keys.push_back(k);
  return keys;
}

ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig config;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(number) + ": expected 'key = value'");
    apply_setting(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  return parse_config(in);
}

nlohmann::json to_json(const ExperimentConfig& config) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, s] : settings()) j[k] = s.get(config);
  return j;
}

nlohmann::json to_json(const MetricsReport& r, const ExperimentConfig& config) {
  nlohmann::json j;
  j["method"] = to_string(r.method);
  j["params"] = to_json(config);
  j["seeds"] = {{"seed", config.seed}, {"model_seed", config.model_seed}};
  j["smse"] = r.smse;
  j["msll"] = r.msll;
  j["times"] = {{"train_s", r.train_time_s}, {"predict_s", r.predict_time_s}};
  j["nlml_or_bound"] = r.nlml_or_bound;
  j["n_train"] = r.n_train;
  j["n_test"] = r.n_test;
  const Diagnostics& d = r.diagnostics;
  nlohmann::json diag;
  diag["jitter"] = d.jitter;
  diag["excluded_experts"] = d.excluded_experts;
  diag["precision_floor_hits"] = d.precision_floor_hits;
  diag["negative_betas"] = d.negative_betas;
  diag["clamped_variances"] = d.clamped_variances;
  diag["noise_var"] = d.noise_var;
  diag["noise_var_raw"] = d.noise_var_raw;
  diag["optimizer_status"] = d.optimizer_status;
  diag["warnings"] = d.warnings;
  diag["smse_noiseless"] = d.smse_noiseless ? nlohmann::json(*d.smse_noiseless) : nlohmann::json(nullptr);
  j["diagnostics"] = diag;
  return j;
}

Hyperparameters random_initial_hp(Index dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto draw = [&](double hi) {
    std::uniform_real_distribution<double> u(0.0, hi);
    double v = 0;
    while (!(v > 0)) v = u(rng);
    return v;
  };
  VectorXd ell(dim);
  for (Index k = 0; k < dim; ++k) ell(k) = draw(1.0);
  const double sf2 = draw(1.0);
  const double sn2 = draw(0.5);
  return Hyperparameters::from_natural(ell, sf2, sn2);
}

MetricsReport run_experiment(const ExperimentConfig& config) {
  in_stage("config", [&] {
    config.validate();
    return 0;
  });
  OutputGuard guard;
  MetricsReport report;
  report.method = config.method;

  const PreparedData data = in_stage("data", [&] { return prepare_data(config); });
  report.n_train = data.train.size();
  report.n_test = data.test.size();
  report.diagnostics.warnings = data.warnings;

  const auto t_fit = Clock::now();
  const FittedModel fitted = in_stage("fit", [&] { return fit_model(config, data.train, report.diagnostics.warnings); });
  report.train_time_s = seconds_since(t_fit);

  AggregationDiagnostics agg;
  const auto t_pred = Clock::now();
  const PredictiveDistribution pred = in_stage("predict", [&] { return predict_fitted(fitted, config, data.test.X, &agg); });
  report.predict_time_s = seconds_since(t_pred);

  in_stage("metrics", [&] {
    const double train_mean = data.train.y.mean();
    const double train_var = sample_variance(data.train.y);
    report.smse = smse(data.test.y, pred.mean, train_var);
    report.msll = msll(data.test.y, pred.mean, pred.variance, train_mean, train_var);
    if (data.test_clean) {
      std::vector<Index> inside;
      for (Index i = 0; i < data.test_x_raw.rows(); ++i)
        if (data.test_x_raw(i, 0) >= config.sinc.train_lo && data.test_x_raw(i, 0) <= config.sinc.train_hi)
          inside.push_back(i);
      if (!inside.empty())
        report.diagnostics.smse_noiseless =
            smse((*data.test_clean)(inside), pred.mean(inside), train_var);
    }
    return 0;
  });

  Diagnostics& d = report.diagnostics;
  report.nlml_or_bound = fitted.objective;
  report.trace = fitted.trace;
  d.optimizer_status = fitted.status;
  d.jitter = jitter_of(fitted);
  d.precision_floor_hits = agg.precision_floor_hits;
  d.negative_betas = agg.negative_betas;
  d.clamped_variances = pred.clamped;
  if (fitted.full) d.noise_var = fitted.full->hp.noise_var();
  if (fitted.sparse) d.noise_var = fitted.sparse->hp.noise_var();
  if (fitted.svgp) d.noise_var = fitted.svgp->hp.noise_var();
  if (fitted.ensemble) {
    d.noise_var = fitted.ensemble->noise_var();
    for (std::size_t i = 0; i < fitted.ensemble->excluded.size(); ++i)
      if (fitted.ensemble->excluded[i]) d.excluded_experts.push_back(static_cast<Index>(i));
    d.warnings.insert(d.warnings.end(), fitted.ensemble->warnings.begin(), fitted.ensemble->warnings.end());
  }
  d.noise_var_raw = d.noise_var * data.norm.y_std * data.norm.y_std;

  in_stage("output", [&] {
    if (!config.predictions_path.empty()) {
      guard.track(config.predictions_path);
      write_predictions(config.predictions_path, data.test_x_raw, pred, data.norm, data.x_names, data.test_y_raw);
    }
    if (!config.trace_path.empty()) {
      guard.track(config.trace_path);
      write_trace(config.trace_path, report.trace);
    }
    if (!config.snapshot_path.empty()) {
      guard.track(config.snapshot_path);
      write_text(config.snapshot_path, to_json(make_snapshot(config, data.norm, fitted)).dump(2) + "\n");
    }
    if (!config.report_path.empty()) {
      guard.track(config.report_path);
      write_text(config.report_path, to_json(report, config).dump(2) + "\n");
    }
    return 0;
  });
  guard.commit();
  return report;
}

nlohmann::json to_json(const ModelSnapshot& s) {
  nlohmann::json j;
  j["config"] = to_json(s.config);
  j["norm"] = {{"x_mean", to_std(s.norm.x_mean.transpose())},
               {"x_std", to_std(s.norm.x_std.transpose())},
               {"y_mean", s.norm.y_mean},
               {"y_std", s.norm.y_std},
               {"kept_columns", s.norm.kept_columns},
               {"dropped_columns", s.norm.dropped_columns}};
  nlohmann::json hps = nlohmann::json::array();
  for (const auto& hp : s.hp)
    hps.push_back({{"log_lengthscales", to_std(hp.log_lengthscales)},
                   {"log_signal_var", hp.log_signal_var},
                   {"log_noise_var", hp.log_noise_var}});
  j["hyperparameters"] = hps;
  j["excluded_experts"] = s.excluded;
  j["inducing"] = matrix_json(s.inducing);
  j["assignments"] = s.assignments;
  j["centroids"] = matrix_json(s.centroids);
  if (s.state) j["variational_state"] = {{"mean", to_std(s.state->mean)}, {"cov_factor", matrix_json(s.state->cov_factor)}};
  return j;
}

ModelSnapshot snapshot_from_json(const nlohmann::json& j) {
  try {
    ModelSnapshot s;
    for (const auto& [k, v] : j.at("config").items())
      apply_setting(s.config, k, v.is_string() ? v.get<std::string>() : v.dump());
    const auto& n = j.at("norm");
    s.norm.x_mean = from_std(n.at("x_mean").get<std::vector<double>>()).transpose();
    s.norm.x_std = from_std(n.at("x_std").get<std::vector<double>>()).transpose();
    s.norm.y_mean = n.at("y_mean").get<double>();
    s.norm.y_std = n.at("y_std").get<double>();
    s.norm.kept_columns = n.at("kept_columns").get<std::vector<Index>>();
    s.norm.dropped_columns = n.at("dropped_columns").get<std::vector<Index>>();
    const Index d = s.norm.x_mean.size();
    for (const auto& h : j.at("hyperparameters")) {
      Hyperparameters hp;
      hp.log_lengthscales = from_std(h.at("log_lengthscales").get<std::vector<double>>());
      hp.log_signal_var = h.at("log_signal_var").get<double>();
      hp.log_noise_var = h.at("log_noise_var").get<double>();
      if (hp.dim() != d) throw IoError("snapshot: hyperparameter dimension mismatch");
      s.hp.push_back(hp);
    }
    s.excluded = j.at("excluded_experts").get<std::vector<Index>>();
    s.inducing = matrix_from_json(j.at("inducing"), d);
    s.assignments = j.at("assignments").get<std::vector<Index>>();
    s.centroids = matrix_from_json(j.at("centroids"), d);
    if (j.contains("variational_state")) {
      VariationalState st;
      st.mean = from_std(j["variational_state"].at("mean").get<std::vector<double>>());
      st.cov_factor = matrix_from_json(j["variational_state"].at("cov_factor"), st.mean.size());
      s.state = st;
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("malformed snapshot: ") + e.what());
  }
}

ModelSnapshot load_snapshot(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open snapshot '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("snapshot '" + path + "' is not valid JSON: " + e.what());
  }
  return snapshot_from_json(j);
}

PredictiveDistribution predict_from_snapshot(const ModelSnapshot& snapshot, const MatrixXd& x_raw) {
  const PreparedData data = in_stage("data", [&] { return prepare_data(snapshot.config); });
  if ((data.norm.x_mean - snapshot.norm.x_mean).cwiseAbs().maxCoeff() > 1e-9 * (1 + snapshot.norm.x_mean.norm()) ||
      std::abs(data.norm.y_mean - snapshot.norm.y_mean) > 1e-9 * (1 + std::abs(snapshot.norm.y_mean)))
    throw IoError("training data no longer matches the snapshot's normalization");
  const FittedModel f = in_stage("rebuild", [&] { return rebuild(snapshot, data.train); });
  return in_stage("predict", [&] { return predict_fitted(f, snapshot.config, snapshot.norm.apply(x_raw), nullptr); });
}

void write_predictions(const std::string& path, const MatrixXd& x_raw, const PredictiveDistribution& normalized,
                       const NormStats& norm, const std::vector<std::string>& x_names,
                       const std::optional<VectorXd>& y_raw) {
  const Index n = x_raw.rows();
  if (normalized.mean.size() != n) throw ContractViolation("write_predictions: row count mismatch");
  std::vector<std::string> header;
  for (Index c = 0; c < x_raw.cols(); ++c)
    header.push_back(c < static_cast<Index>(x_names.size()) ? x_names[c] : "x" + std::to_string(c));
  const Index extra = y_raw ? 6 : 4;
  MatrixXd cols(n, x_raw.cols() + extra);
  cols.leftCols(x_raw.cols()) = x_raw;
  Index k = x_raw.cols();
  if (y_raw) {
    header.push_back("y");
    cols.col(k++) = *y_raw;
  }
  header.insert(header.end(), {"mean", "variance"});
  cols.col(k++) = norm.restore_y(normalized.mean);
  cols.col(k++) = norm.restore_variance(normalized.variance);
  if (y_raw) {
    header.push_back("y_normalized");
    cols.col(k++) = norm.apply_y(*y_raw);
  }
  header.insert(header.end(), {"mean_normalized", "variance_normalized"});
  cols.col(k++) = normalized.mean;
  cols.col(k++) = normalized.variance;
  write_csv(path, header, cols);
}

std::vector<GradcheckResult> run_gradcheck(Index draws, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const auto dataset = [&](Index n) {
    Dataset out;
    out.X.resize(n, 2);
    out.y.resize(n);
    for (Index i = 0; i < n; ++i) {
      out.X(i, 0) = g(rng);
      out.X(i, 1) = g(rng);
      out.y(i) = std::sin(1.3 * out.X(i, 0)) + std::sin(1.3 * out.X(i, 1) + 1.0) + 0.1 * g(rng);
    }
    return out;
  };
  const auto random_hp = [&] {
    Hyperparameters hp;
    hp.log_lengthscales = VectorXd(2);
    for (Index k = 0; k < 2; ++k) hp.log_lengthscales(k) = 0.3 * u(rng);
    hp.log_signal_var = 0.5 * u(rng);
    hp.log_noise_var = std::log(0.05) + 0.8 * u(rng);
    return hp;
  };
  const auto random_z = [&](Index m) {
    MatrixXd z(m, 2);
    for (Index i = 0; i < m; ++i)
      for (Index k = 0; k < 2; ++k) z(i, k) = g(rng);
    return z;
  };

  std::vector<GradcheckResult> out;
  const Dataset d30 = dataset(30);
  GradcheckResult full{"full_nlml", draws, 0};
  for (Index t = 0; t < draws; ++t) {
    const Objective f = [&](const VectorXd& x) { return full_gp_nlml(d30, Hyperparameters::unpack(x, 2)); };
    full.max_relative_error = std::max(full.max_relative_error, check_gradient(f, random_hp().pack()));
  }
  out.push_back(full);

  const Dataset d40 = dataset(40);
  const Partition part = partition_kmeans(d40.X, 4, seed);
  for (SparseMethod method :
       {SparseMethod::sor, SparseMethod::dtc, SparseMethod::fitc, SparseMethod::pic, SparseMethod::vfe}) {
    GradcheckResult r{to_string(method) + "_evidence", draws, 0};
    const Partition* p = method == SparseMethod::pic ? &part : nullptr;
    for (Index t = 0; t < draws; ++t) {
      const Hyperparameters hp = random_hp();
      const MatrixXd z0 = random_z(7);
      const Objective f = [&](const VectorXd& x) {
        Hyperparameters h;
        MatrixXd z = z0;
        unpack_sparse_parameters(x, 2, h, z, true);
        return sparse_evidence(method, d40, InducingSet{z, true}, h, p);
      };
      r.max_relative_error = std::max(r.max_relative_error, check_gradient(f, pack_sparse_parameters(hp, z0, true)));
    }
    out.push_back(r);
  }

  // Variational states are drawn on the scale of the prior: mean = L xi and
  // factor = L R with K_mm = L L^T.
  std::vector<Index> rows(15);
  for (Index i = 0; i < 15; ++i) rows[static_cast<std::size_t>(i)] = i;
  const Dataset batch = d40.subset(rows);
  GradcheckResult sv{"svgp_elbo", draws, 0};
  const Index m = 7;
  for (Index t = 0; t < draws; ++t) {
    const Hyperparameters hp = random_hp();
    const MatrixXd z0 = random_z(m);
    const auto kmm = robust_cholesky<double>(kernel_matrix(z0, z0, hp).values, hp.signal_var(), "K_mm");
    const MatrixXd l = kmm.matrixL();
    VectorXd xi(m);
    MatrixXd r = MatrixXd::Zero(m, m);
    std::uniform_real_distribution<double> diag(0.1, 1.0);
    for (Index i = 0; i < m; ++i) {
      xi(i) = g(rng);
      r(i, i) = diag(rng);
      for (Index j = 0; j < i; ++j) r(i, j) = 0.2 * g(rng);
    }
    VariationalState q{l * xi, l * r};
    const Index head = hp.packed_size() + z0.size();
    const Objective f = [&](const VectorXd& x) {
      Hyperparameters h;
      MatrixXd z = z0;
      unpack_sparse_parameters(x.head(head), 2, h, z, true);
      return elbo_with_gradient(batch, d40.size(), z, h, VariationalState::unpack(x.tail(x.size() - head), m), true);
    };
    VectorXd x0(head + VariationalState::packed_size(m));
    x0.head(head) = pack_sparse_parameters(hp, z0, true);
    x0.tail(VariationalState::packed_size(m)) = q.pack();
    sv.max_relative_error = std::max(sv.max_relative_error, check_gradient(f, x0));
  }
  out.push_back(sv);
  return out;
}

}  // namespace scalegp
