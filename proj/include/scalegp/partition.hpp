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
#include <vector>

#include "scalegp/types.hpp"

namespace scalegp {

/// Disjoint assignment of training rows to M blocks (experts).
struct Partition {
  std::vector<Index> assignments;  // one entry per row, in [0, M)
  MatrixXd centroids;              // M x d

  Index num_blocks() const { return centroids.rows(); }

  /// Row indices of every block, in ascending row order.
  std::vector<std::vector<Index>> blocks() const;

  /// Block whose centroid is nearest (Euclidean) to `x`; ties go to the lower index.
  Index nearest(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;

  /// Throws ContractViolation unless every block is non-empty and the
  /// assignments cover exactly `n` rows.
  void validate(Index n) const;
};

/// Lloyd's k-means with k-means++ seeding. Runs until the assignment stops
/// changing or 100 sweeps; an empty cluster takes the point of the largest
/// cluster that lies farthest from its centroid.
Partition partition_kmeans(const MatrixXd& x, Index num_blocks, std::uint64_t seed);

/// Random balanced assignment: block sizes differ by at most one.
Partition partition_random(const MatrixXd& x, Index num_blocks, std::uint64_t seed);

/// Centroid of each block under the given assignment.
MatrixXd block_centroids(const MatrixXd& x, const std::vector<Index>& assignments, Index num_blocks);

}  // namespace scalegp
