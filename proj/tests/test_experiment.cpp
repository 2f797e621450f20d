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


#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "scalegp/data.hpp"
#include "scalegp/experiment.hpp"

using namespace scalegp;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  return (fs::temp_directory_path() / ("scalegp_exp_" + name)).string();
}

ExperimentConfig sinc_config(ModelKind method, std::uint64_t seed = 1) {
  ExperimentConfig c;
  c.method = method;
  c.seed = seed;
  return c;
}

nlohmann::json without_times(nlohmann::json j) {
  j.erase("times");
  return j;
}

}  // namespace

TEST_CASE("config text parsing") {
  std::istringstream in(
      "# comment\n"
      "method = vfe   # trailing comment\n"
      "\n"
      "m=20\n"
      "beta = entropy\n"
      "train_inducing = false\n"
      "seed = 7\n");
  const ExperimentConfig c = parse_config(in);
  CHECK(c.method == ModelKind::vfe);
  CHECK(c.inducing == 20);
  CHECK(c.beta_rule == BetaRule::differential_entropy);
  CHECK_FALSE(c.train_inducing);
  CHECK(c.seed == 7);
}

TEST_CASE("config errors name the field") {
  ExperimentConfig c;
  const auto message = [&](const std::string& key, const std::string& value) {
    try {
      apply_setting(c, key, value);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("method", "kriging").find("method") != std::string::npos);
  CHECK(message("m", "-3").find("'m'") != std::string::npos);
  CHECK(message("step_rate", "fast").find("step_rate") != std::string::npos);
  CHECK(message("colour", "red").find("colour") != std::string::npos);
  std::istringstream no_equals("method full\n");
  CHECK_THROWS_AS(parse_config(no_equals), ConfigError);

  ExperimentConfig bad = sinc_config(ModelKind::rbcm);
  bad.expert_mode = ExpertMode::individual_hp;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(run_experiment(bad), ConfigError);
  ExperimentConfig no_z = sinc_config(ModelKind::vfe);
  no_z.inducing = 0;
  CHECK_THROWS_AS(no_z.validate(), ConfigError);
  no_z.method = ModelKind::pic;
  CHECK_NOTHROW(no_z.validate());
}

TEST_CASE("config round-trips through json") {
  ExperimentConfig c = sinc_config(ModelKind::svgp, 11);
  c.sgd.batch_size = 7;
  c.beta_rule = BetaRule::uniform_1_over_m;
  c.init = InitMode::random;
  c.sinc.noise_var = 0.01;
  ExperimentConfig back;
  const nlohmann::json saved = to_json(c);
  for (const auto& [k, v] : saved.items()) apply_setting(back, k, v.is_string() ? v.get<std::string>() : v.dump());
  CHECK(to_json(back) == to_json(c));
  CHECK(config_keys().size() == to_json(c).size());
}

TEST_CASE("sinc with a full GP fits the noiseless function inside the training range") {
  const MetricsReport r = run_experiment(sinc_config(ModelKind::full));
  REQUIRE(r.diagnostics.smse_noiseless.has_value());
  CHECK(*r.diagnostics.smse_noiseless < 0.05);
  CHECK(r.smse >= 0);
  CHECK(r.train_time_s >= 0);
  CHECK(r.n_train == 120);
  CHECK(r.n_test == 300);
  CHECK(r.diagnostics.noise_var_raw > 0.02);
  CHECK(r.diagnostics.noise_var_raw < 0.08);
}

TEST_CASE("sinc VFE bound lands within two nats of the full GP") {
  const MetricsReport full = run_experiment(sinc_config(ModelKind::full));
  const MetricsReport vfe = run_experiment(sinc_config(ModelKind::vfe));
  CHECK(vfe.nlml_or_bound >= full.nlml_or_bound - 1e-6);
  CHECK(vfe.nlml_or_bound - full.nlml_or_bound < 2.0);
}

TEST_CASE("outputs are written and reports are deterministic") {
  ExperimentConfig c = sinc_config(ModelKind::rbcm, 4);
  c.report_path = temp_path("report.json");
  c.predictions_path = temp_path("pred.csv");
  c.trace_path = temp_path("trace.csv");
  c.snapshot_path = temp_path("snap.json");
  const MetricsReport r = run_experiment(c);
  for (const auto& p : {c.report_path, c.predictions_path, c.trace_path, c.snapshot_path}) CHECK(fs::exists(p));

  nlohmann::json first;
  std::ifstream(c.report_path) >> first;
  CHECK(first["method"] == "rbcm");
  CHECK(first["seeds"]["seed"] == 4);
  CHECK(first["smse"].get<double>() == doctest::Approx(r.smse));

  run_experiment(c);
  nlohmann::json second;
  std::ifstream(c.report_path) >> second;
  CHECK(without_times(first) == without_times(second));

  const CsvTable pred = read_csv(c.predictions_path);
  CHECK(pred.values.rows() == 300);
  CHECK(pred.header.front() == "x");
  const CsvTable trace = read_csv(c.trace_path);
  CHECK(trace.header == std::vector<std::string>{"iteration", "objective"});
  for (const auto& p : {c.report_path, c.predictions_path, c.trace_path, c.snapshot_path}) fs::remove(p);
}

TEST_CASE("a failing stage leaves no partial outputs") {
  ExperimentConfig c = sinc_config(ModelKind::full);
  c.predictions_path = temp_path("partial_pred.csv");
  c.report_path = (fs::temp_directory_path() / "scalegp_missing_dir" / "report.json").string();
  fs::remove_all(fs::temp_directory_path() / "scalegp_missing_dir");
  try {
    run_experiment(c);
    FAIL("expected an I/O error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("stage 'output'") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(c.predictions_path));

  ExperimentConfig missing = sinc_config(ModelKind::full);
  missing.data_path = temp_path("does_not_exist.csv");
  try {
    run_experiment(missing);
    FAIL("expected an I/O error");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("stage 'data'") != std::string::npos);
  }
}

TEST_CASE("snapshots reproduce the reported predictions") {
  for (ModelKind m : {ModelKind::full, ModelKind::fitc, ModelKind::pic, ModelKind::vfe, ModelKind::svgp,
                      ModelKind::gpoe, ModelKind::rbcm}) {
    CAPTURE(to_string(m));
    ExperimentConfig c = sinc_config(m, 2);
    c.sinc.n_train = 60;
    c.sgd.max_iters = 50;
    c.experts = 4;
    c.inducing = 8;
    c.predictions_path = temp_path("snap_pred.csv");
    c.snapshot_path = temp_path("snap_model.json");
    run_experiment(c);
    const ModelSnapshot snap = load_snapshot(c.snapshot_path);
    const CsvTable written = read_csv(c.predictions_path);
    const MatrixXd x = written.values.leftCols(1);
    const PredictiveDistribution again = predict_from_snapshot(snap, x);
    const Index mean_col = static_cast<Index>(written.header.size()) - 2;
    CHECK((again.mean - written.values.col(mean_col)).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((again.variance - written.values.col(mean_col + 1)).cwiseAbs().maxCoeff() < 1e-9);
    fs::remove(c.predictions_path);
    fs::remove(c.snapshot_path);
  }
}

TEST_CASE("csv data source with a split") {
  const std::string path = temp_path("data.csv");
  {
    std::ofstream out(path);
    out << "a,const,b,target\n";
    for (int i = 0; i < 50; ++i) {
      const double a = 0.1 * i, b = std::cos(0.3 * i);
      out << a << ",2.5," << b << ',' << std::sin(a) + b << '\n';
    }
  }
  ExperimentConfig c;
  c.method = ModelKind::full;
  c.data_path = path;
  c.target_column = "target";
  c.test_fraction = 0.2;
  const MetricsReport r = run_experiment(c);
  CHECK(r.n_train == 40);
  CHECK(r.n_test == 10);
  CHECK(r.smse < 0.1);
  REQUIRE(r.diagnostics.warnings.size() == 1);
  CHECK(r.diagnostics.warnings.front().find("const") != std::string::npos);

  c.target_column = "missing";
  CHECK_THROWS_AS(run_experiment(c), ContractViolation);
  fs::remove(path);
}

TEST_CASE("random initialization draws from the documented ranges") {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Hyperparameters hp = random_initial_hp(3, s);
    CHECK((hp.lengthscales().array() > 0).all());
    CHECK((hp.lengthscales().array() < 1).all());
    CHECK(hp.signal_var() < 1);
    CHECK(hp.noise_var() < 0.5);
  }
  CHECK(random_initial_hp(2, 5).pack() == random_initial_hp(2, 5).pack());
}

TEST_CASE("restarts keep the best objective") {
  ExperimentConfig one = sinc_config(ModelKind::full, 3);
  ExperimentConfig many = one;
  many.restarts = 4;
  CHECK(run_experiment(many).nlml_or_bound <= run_experiment(one).nlml_or_bound + 1e-9);
}

TEST_CASE("gradient certification helper") {
  const auto results = run_gradcheck(3, 5);
  CHECK(results.size() == 7);
  for (const auto& r : results) {
    CAPTURE(r.objective);
    CHECK(r.draws == 3);
    CHECK(r.max_relative_error < 1e-5);
  }
}
