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


// Command-line front end: fit, predict, bench, gradcheck, gen-sinc.
// Exit codes: 0 success, 1 config error, 2 numerical failure, 3 I/O error.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "scalegp/data.hpp"
#include "scalegp/experiment.hpp"

namespace fs = std::filesystem;
using namespace scalegp;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitNumerical = 2;
constexpr int kExitIo = 3;

ExperimentConfig config_from(const std::string& path, const std::vector<std::string>& overrides) {
  ExperimentConfig config = path.empty() ? ExperimentConfig{} : load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    apply_setting(config, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return config;
}

int run_fit(const std::string& config_path, const std::vector<std::string>& overrides) {
  const ExperimentConfig config = config_from(config_path, overrides);
  const MetricsReport report = run_experiment(config);
  std::cout << to_json(report, config).dump(2) << '\n';
  return 0;
}

int run_predict(const std::string& snapshot_path, const std::string& input, const std::string& output,
                const std::string& target) {
  const ModelSnapshot snapshot = load_snapshot(snapshot_path);
  const CsvTable table = read_csv(input);
  std::vector<std::string> names;
  std::vector<Index> feature_cols;
  std::optional<VectorXd> y;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (!target.empty() && table.header[c] == target) {
      y = table.values.col(static_cast<Index>(c));
      continue;
    }
    names.push_back(table.header[c]);
    feature_cols.push_back(static_cast<Index>(c));
  }
  if (!target.empty() && !y) throw ConfigError("target column '" + target + "' not found in '" + input + "'");
  const auto expected = snapshot.norm.kept_columns.size() + snapshot.norm.dropped_columns.size();
  if (feature_cols.size() != expected)
    throw ConfigError("'" + input + "' has " + std::to_string(feature_cols.size()) + " input columns, the model expects " +
                      std::to_string(expected));
  const MatrixXd x = table.values(Eigen::all, feature_cols);
  const PredictiveDistribution pred = predict_from_snapshot(snapshot, x);
  write_predictions(output, x, pred, snapshot.norm, names, y);
  return 0;
}

int run_bench(const std::string& config_path, const std::vector<std::string>& overrides, Index seeds,
              const std::string& out_dir, Index jobs) {
  const ExperimentConfig base = config_from(config_path, overrides);
  base.validate();
  if (seeds < 1) throw ConfigError("--seeds must be at least 1");
  fs::create_directories(out_dir);

  std::vector<ExperimentConfig> runs;
  for (Index k = 0; k < seeds; ++k) {
    ExperimentConfig c = base;
    c.seed = base.seed + static_cast<std::uint64_t>(k);
    c.model_seed = base.model_seed + static_cast<std::uint64_t>(k);
    const std::string stem = (fs::path(out_dir) / ("seed" + std::to_string(c.seed))).string();
    c.report_path = stem + "_report.json";
    c.predictions_path = stem + "_predictions.csv";
    c.trace_path = stem + "_trace.csv";
    c.snapshot_path = stem + "_snapshot.json";
    runs.push_back(c);
  }

  nlohmann::json summary;
  summary["method"] = to_string(base.method);
  summary["runs"] = nlohmann::json::array();
  std::vector<double> smse_values, msll_values;
  int worst = 0;
  for (std::size_t start = 0; start < runs.size(); start += static_cast<std::size_t>(std::max<Index>(1, jobs))) {
    std::vector<std::future<MetricsReport>> batch;
    const std::size_t stop = std::min(runs.size(), start + static_cast<std::size_t>(std::max<Index>(1, jobs)));
    for (std::size_t i = start; i < stop; ++i)
      batch.push_back(std::async(std::launch::async, [&runs, i] { return run_experiment(runs[i]); }));
    for (std::size_t i = start; i < stop; ++i) {
      nlohmann::json entry = {{"seed", runs[i].seed}};
      try {
        const MetricsReport r = batch[i - start].get();
        entry["smse"] = r.smse;
        entry["msll"] = r.msll;
        entry["train_s"] = r.train_time_s;
        entry["nlml_or_bound"] = r.nlml_or_bound;
        smse_values.push_back(r.smse);
        msll_values.push_back(r.msll);
      } catch (const NumericalFailure& e) {
        entry["error"] = e.what();
        worst = std::max(worst, kExitNumerical);
      }
      summary["runs"].push_back(entry);
      std::cerr << "seed " << runs[i].seed << (entry.contains("error") ? " failed" : " done") << '\n';
    }
  }
  const auto stats = [](const std::vector<double>& v) {
    if (v.empty()) return nlohmann::json(nullptr);
    double mean = 0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0;
    for (double x : v) var += (x - mean) * (x - mean);
    const double sd = v.size() > 1 ? std::sqrt(var / static_cast<double>(v.size() - 1)) : 0.0;
    return nlohmann::json{{"mean", mean}, {"std", sd}, {"count", v.size()}};
  };
  summary["smse"] = stats(smse_values);
  summary["msll"] = stats(msll_values);
  const std::string summary_path = (fs::path(out_dir) / "summary.json").string();
  std::ofstream out(summary_path);
  if (!out) throw IoError("cannot write '" + summary_path + "'");
  out << summary.dump(2) << '\n';
  std::cout << summary.dump(2) << '\n';
  return worst;
}

int run_gradcheck_cmd(Index draws, std::uint64_t seed, double tol) {
  bool ok = true;
  for (const auto& r : run_gradcheck(draws, seed)) {
    const bool pass = r.max_relative_error < tol;
    ok = ok && pass;
    std::cout << (pass ? "PASS " : "FAIL ") << r.objective << " draws=" << r.draws
              << " max_rel_err=" << r.max_relative_error << '\n';
  }
  return ok ? 0 : kExitNumerical;
}

int run_gen_sinc(const std::string& out_dir, const SincConfig& config) {
  fs::create_directories(out_dir);
  const SincData data = generate_sinc(config);
  const std::string train = (fs::path(out_dir) / "sinc_train.csv").string();
  const std::string test = (fs::path(out_dir) / "sinc_test.csv").string();
  MatrixXd tr(data.train.size(), 2);
  tr << data.train.X, data.train.y;
  write_csv(train, {"x", "y"}, tr);
  MatrixXd te(data.test.size(), 3);
  te << data.test.X, data.test.y, data.test_clean;
  write_csv(test, {"x", "y", "y_clean"}, te);
  std::cout << train << '\n' << test << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scalable Gaussian-process regression toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;

  auto* fit = app.add_subcommand("fit", "Train one model and write its report");
  fit->add_option("-c,--config", config_path, "Config file (key = value lines)");
  fit->add_option("-s,--set", overrides, "Override a config key: key=value");

  std::string snapshot_path, input_path, output_path, target;
  auto* pred = app.add_subcommand("predict", "Predict with a saved snapshot");
  pred->add_option("--snapshot", snapshot_path, "Snapshot JSON written by fit")->required();
  pred->add_option("--input", input_path, "CSV of raw inputs")->required();
  pred->add_option("--output", output_path, "Prediction CSV to write")->required();
  pred->add_option("--target", target, "Optional target column carried into the output");

  Index seeds = 10;
  Index jobs = 1;
  std::string out_dir = "bench_out";
  auto* bench = app.add_subcommand("bench", "Repeat one config over consecutive seeds");
  bench->add_option("-c,--config", config_path, "Config file");
  bench->add_option("-s,--set", overrides, "Override a config key: key=value");
  bench->add_option("--seeds", seeds, "Number of seeds")->capture_default_str();
  bench->add_option("--jobs", jobs, "Experiments run concurrently")->capture_default_str();
  bench->add_option("--out", out_dir, "Output directory")->capture_default_str();

  Index draws = 50;
  std::uint64_t gc_seed = 0;
  double tol = 1e-5;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference check of every analytic gradient");
  gc->add_option("--draws", draws, "Random points per objective")->capture_default_str();
  gc->add_option("--seed", gc_seed, "Random seed")->capture_default_str();
  gc->add_option("--tol", tol, "Relative error threshold")->capture_default_str();

  SincConfig sinc;
  std::string sinc_dir = ".";
  auto* gen = app.add_subcommand("gen-sinc", "Write the sinc toy train/test CSVs");
  gen->add_option("--out", sinc_dir, "Output directory")->capture_default_str();
  gen->add_option("--seed", sinc.seed, "Random seed")->capture_default_str();
  gen->add_option("--n-train", sinc.n_train, "Training points")->capture_default_str();
  gen->add_option("--n-test", sinc.n_test, "Test points")->capture_default_str();
  gen->add_option("--noise-var", sinc.noise_var, "Noise variance")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*fit) return run_fit(config_path, overrides);
    if (*pred) return run_predict(snapshot_path, input_path, output_path, target);
    if (*bench) return run_bench(config_path, overrides, seeds, out_dir, jobs);
    if (*gc) return run_gradcheck_cmd(draws, gc_seed, tol);
    if (*gen) return run_gen_sinc(sinc_dir, sinc);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const ContractViolation& e) {
    std::cerr << "invalid input: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericalFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    if (!e.jitter_trail().empty()) {
      std::cerr << "jitter tried:";
      for (double j : e.jitter_trail()) std::cerr << ' ' << j;
      std::cerr << '\n';
    }
    return kExitNumerical;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  }
  return 0;
}
