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
#include "scalegp/linalg.hpp"
#include "scalegp/optimize.hpp"
#include "scalegp/partition.hpp"
#include "scalegp/types.hpp"

namespace scalegp {

/*
 * Inducing-point approximations sharing one Nystrom core.
 *
 * With Q_ab = K_am K_mm^{-1} K_mb every prior approximation has the evidence
 *
 *   log q(y) = log N(y | 0, Q_nn + Lambda),   Lambda = Qtilde_nn + sn2 I
 *
 * and differs only in the correction Qtilde_nn:
 *
 *   SoR, DTC, VFE : 0
 *   FITC          : diag[K_nn - Q_nn]
 *   PIC           : blockdiag[K_nn - Q_nn] over the partition blocks
 *
 * VFE subtracts 0.5 / sn2 * Tr(K_nn - Q_nn) from the DTC evidence. All
 * evaluations go through an m x m inner matrix B = I + A Lambda^{-1} A^T with
 * A = L_mm^{-1} K_mn, so nothing n x n is ever formed (block-sized pieces for
 * PIC aside).
 */

enum class SparseMethod { sor, dtc, fitc, pic, vfe };

std::string to_string(SparseMethod method);
SparseMethod parse_sparse_method(const std::string& name);

struct InducingSet {
  MatrixXd Z;  // m x d
  bool trainable{true};

  Index size() const { return Z.rows(); }
};

/// Nystrom cross-covariance Q_ab computed with triangular solves.
MatrixXd nystrom(const MatrixXd& a, const MatrixXd& b, const MatrixXd& z, const Hyperparameters& hp);

/// Log evidence (the VFE bound for SparseMethod::vfe) and its gradient in
/// packed order: hyperparameters, then Z row-major when the set is trainable.
/// `partition` is required for PIC and rejected otherwise.
ObjectiveEvaluation sparse_evidence(SparseMethod method, const Dataset& data,
                                    const InducingSet& inducing, const Hyperparameters& hp,
                                    const Partition* partition = nullptr);

/// Tr(K_nn - Q_nn): the variance of f not explained by the inducing variables.
double nystrom_residual_trace(const Dataset& data, const MatrixXd& z, const Hyperparameters& hp);

struct SparseModel {
  SparseMethod method{SparseMethod::vfe};
  Dataset data;
  InducingSet inducing;
  Hyperparameters hp;
  std::optional<Partition> partition;  // present iff method == pic

  // Cached factors, fixed once the model is built.
  JitteredCholesky<double> kmm;    // K_mm (+ jitter)
  JitteredCholesky<double> inner;  // B = I + A Lambda^{-1} A^T
  MatrixXd a;                      // L_mm^{-1} K_mn
  VectorXd alpha;                  // (Q_nn + Lambda)^{-1} y
  VectorXd a_alpha;                // A alpha
  std::vector<JitteredCholesky<double>> lambda_blocks;  // PIC only
  double evidence{0};

  OptTrace trace;
  OptStatus status{OptStatus::gradient_converged};
};

/// Builds the cached factors at fixed hyperparameters and inducing inputs.
SparseModel condition_sparse(SparseMethod method, const Dataset& data, const InducingSet& inducing,
                             const Hyperparameters& hp, const Partition* partition = nullptr);

/// Maximizes the evidence jointly over hyperparameters and (if trainable) Z.
SparseModel fit_sparse(SparseMethod method, const Dataset& data, const InducingSet& z0,
                       const Hyperparameters& hp0, const DeterministicConfig& config = {},
                       const Partition* partition = nullptr);

/// Method-specific predictive equations. PIC routes each test point to the
/// block with the nearest centroid.
PredictiveDistribution predict(const SparseModel& model, const MatrixXd& x_star,
                               Flavor flavor = Flavor::latent);

/// k-means centroids of the training inputs.
InducingSet init_inducing_kmeans(const MatrixXd& x, Index m, std::uint64_t seed);

/// m points evenly spaced on [lo, hi] (one-dimensional inputs).
InducingSet init_inducing_grid(double lo, double hi, Index m);

/// Packs hyperparameters and (optionally) Z into one optimizer vector.
VectorXd pack_sparse_parameters(const Hyperparameters& hp, const MatrixXd& z, bool with_z);
void unpack_sparse_parameters(const VectorXd& x, Index dim, Hyperparameters& hp, MatrixXd& z,
                              bool with_z);

}  // namespace scalegp
