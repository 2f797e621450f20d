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

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace scalegp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Error taxonomy. Everything derives from std::exception so callers can
// catch broadly; the CLI maps each kind onto its own exit code.

/// A caller broke a documented precondition (shapes, ranges, enum values).
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A factorization or objective evaluation failed numerically.
class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, std::vector<double> jitter_trail = {})
      : std::runtime_error(what), jitter_trail_(std::move(jitter_trail)) {}

  /// Jitter values attempted before giving up (empty when not a factorization).
  const std::vector<double>& jitter_trail() const { return jitter_trail_; }

 private:
  std::vector<double> jitter_trail_;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// SE-ARD hyperparameters, all stored as logs so that unconstrained
/// optimizers can move them freely.
template <typename Scalar>
struct BasicHyperparameters {
  Vector<Scalar> log_lengthscales;
  Scalar log_signal_var{0};
  Scalar log_noise_var{0};

  static BasicHyperparameters from_natural(const Vector<Scalar>& lengthscales,
                                           Scalar signal_var, Scalar noise_var) {
    BasicHyperparameters hp;
    hp.log_lengthscales = lengthscales.array().log().matrix();
    hp.log_signal_var = std::log(signal_var);
    hp.log_noise_var = std::log(noise_var);
    return hp;
  }

  /// Isotropic initialization, e.g. (d, 0.5, 1.0, 0.1) for the standard protocol.
  static BasicHyperparameters isotropic(Index dim, Scalar lengthscale, Scalar signal_var,
                                        Scalar noise_var) {
    return from_natural(Vector<Scalar>::Constant(dim, lengthscale), signal_var, noise_var);
  }

  Index dim() const { return log_lengthscales.size(); }
  Scalar signal_var() const { return std::exp(log_signal_var); }
  Scalar noise_var() const { return std::exp(log_noise_var); }
  Vector<Scalar> lengthscales() const { return log_lengthscales.array().exp().matrix(); }

  /// Packed parameter vector: [log l_1..log l_d, log sf2, log sn2].
  Index packed_size() const { return dim() + 2; }

  Vector<Scalar> pack() const {
    Vector<Scalar> v(packed_size());
    v.head(dim()) = log_lengthscales;
    v(dim()) = log_signal_var;
    v(dim() + 1) = log_noise_var;
    return v;
  }

  static BasicHyperparameters unpack(const Eigen::Ref<const Vector<Scalar>>& v, Index dim) {
    if (v.size() < dim + 2) throw ContractViolation("hyperparameter vector too short");
    BasicHyperparameters hp;
    hp.log_lengthscales = v.head(dim);
    hp.log_signal_var = v(dim);
    hp.log_noise_var = v(dim + 1);
    return hp;
  }

  bool is_valid() const {
    if (dim() < 1) return false;
    auto ok = [](Scalar s) { return std::isfinite(s) && std::isfinite(std::exp(s)) && std::exp(s) > 0; };
    for (Index i = 0; i < dim(); ++i)
      if (!ok(log_lengthscales(i))) return false;
    return ok(log_signal_var) && ok(log_noise_var);
  }
};

using Hyperparameters = BasicHyperparameters<double>;

enum class Flavor { latent, observed };

struct PredictiveDistribution {
  VectorXd mean;
  VectorXd variance;
  Flavor flavor{Flavor::latent};
  // Number of latent variances that came out slightly negative and were clamped.
  Index clamped{0};
};

/// Value and gradient of a scalar objective.
struct ObjectiveEvaluation {
  double value{0};
  VectorXd gradient;
  Index eval_count{1};
};

}  // namespace scalegp
