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

#include "scalegp/partition.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>
#include <string>

namespace scalegp {

namespace {

void check_request(const MatrixXd& x, Index num_blocks) {
  if (x.rows() < 1 || x.cols() < 1) throw ContractViolation("partition: empty input");
  if (num_blocks < 1) throw ContractViolation("partition: need at least one block");
  if (num_blocks > x.rows())
    throw ContractViolation("partition: " + std::to_string(num_blocks) + " blocks requested for " +
                            std::to_string(x.rows()) + " points");
}

double squared_distance(const Eigen::Ref<const Eigen::RowVectorXd>& a,
                        const Eigen::Ref<const Eigen::RowVectorXd>& b) {
  return (a - b).squaredNorm();
}

Index nearest_row(const MatrixXd& centers, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
  Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < centers.rows(); ++k) {
    const double dist = squared_distance(centers.row(k), x);
    if (dist < best_d) {
      best_d = dist;
      best = k;
    }
  }
  return best;
}

MatrixXd kmeanspp_seed(const MatrixXd& x, Index k, std::mt19937_64& rng) {
  const Index n = x.rows();
  MatrixXd centers(k, x.cols());
  std::uniform_int_distribution<Index> first(0, n - 1);
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  Index pick = first(rng);
  centers.row(0) = x.row(pick);
  used[pick] = true;
  VectorXd d2(n);
  for (Index i = 0; i < n; ++i) d2(i) = squared_distance(x.row(i), centers.row(0));
  for (Index c = 1; c < k; ++c) {
    const double total = d2.sum();
    if (total > 0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      pick = -1;
      Index last_positive = 0;
      for (Index i = 0; i < n; ++i) {
        if (d2(i) <= 0) continue;
        last_positive = i;
        target -= d2(i);
        if (target <= 0) {
          pick = i;
          break;
        }
      }
      if (pick < 0) pick = last_positive;
    } else {
      // All points coincide with a center already; take the first unused row.
      pick = 0;
      while (used[pick]) ++pick;
    }
    used[pick] = true;
    centers.row(c) = x.row(pick);
    for (Index i = 0; i < n; ++i) d2(i) = std::min(d2(i), squared_distance(x.row(i), centers.row(c)));
  }
  return centers;
}

}  // namespace

std::vector<std::vector<Index>> Partition::blocks() const {
  std::vector<std::vector<Index>> out(static_cast<std::size_t>(num_blocks()));
  for (std::size_t i = 0; i < assignments.size(); ++i)
    out[static_cast<std::size_t>(assignments[i])].push_back(static_cast<Index>(i));
  return out;
}

Index Partition::nearest(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
  if (x.size() != centroids.cols()) throw ContractViolation("Partition::nearest: dimension mismatch");
  return nearest_row(centroids, x);
}

void Partition::validate(Index n) const {
  if (static_cast<Index>(assignments.size()) != n)
    throw ContractViolation("partition covers " + std::to_string(assignments.size()) +
                            " rows, dataset has " + std::to_string(n));
  std::vector<Index> counts(static_cast<std::size_t>(num_blocks()), 0);
  for (Index a : assignments) {
    if (a < 0 || a >= num_blocks()) throw ContractViolation("partition assignment out of range");
    ++counts[static_cast<std::size_t>(a)];
  }
  for (Index c : counts)
    if (c == 0) throw ContractViolation("partition has an empty block");
}

MatrixXd block_centroids(const MatrixXd& x, const std::vector<Index>& assignments, Index num_blocks) {
  MatrixXd sums = MatrixXd::Zero(num_blocks, x.cols());
  VectorXd counts = VectorXd::Zero(num_blocks);
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    sums.row(assignments[i]) += x.row(static_cast<Index>(i));
    counts(assignments[i]) += 1;
  }
  for (Index k = 0; k < num_blocks; ++k)
    if (counts(k) > 0) sums.row(k) /= counts(k);
  return sums;
}

Partition partition_kmeans(const MatrixXd& x, Index num_blocks, std::uint64_t seed) {
  check_request(x, num_blocks);
  const Index n = x.rows();
  std::mt19937_64 rng(seed);
  MatrixXd centers = kmeanspp_seed(x, num_blocks, rng);

  std::vector<Index> assign(static_cast<std::size_t>(n), -1);
  constexpr int kMaxSweeps = 100;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      const Index k = nearest_row(centers, x.row(i));
      if (k != assign[i]) {
        assign[i] = k;
        changed = true;
      }
    }

    // Repair empty clusters before the update step.
    std::vector<Index> counts(static_cast<std::size_t>(num_blocks), 0);
    for (Index a : assign) ++counts[a];
    for (Index k = 0; k < num_blocks; ++k) {
      if (counts[k] > 0) continue;
      const auto largest = static_cast<Index>(std::max_element(counts.begin(), counts.end()) - counts.begin());
      Index far = -1;
      double far_d = -1;
      for (Index i = 0; i < n; ++i) {
        if (assign[i] != largest) continue;
        const double dist = squared_distance(x.row(i), centers.row(largest));
        if (dist > far_d) {
          far_d = dist;
          far = i;
        }
      }
      assign[far] = k;
      --counts[largest];
      ++counts[k];
      changed = true;
    }

    centers = block_centroids(x, assign, num_blocks);
    if (!changed) break;
  }

  Partition p;
  p.assignments = std::move(assign);
  p.centroids = std::move(centers);
  return p;
}

Partition partition_random(const MatrixXd& x, Index num_blocks, std::uint64_t seed) {
  check_request(x, num_blocks);
  const Index n = x.rows();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  Partition p;
  p.assignments.assign(static_cast<std::size_t>(n), 0);
  for (Index pos = 0; pos < n; ++pos) p.assignments[order[pos]] = pos % num_blocks;
  p.centroids = block_centroids(x, p.assignments, num_blocks);
  return p;
}

}  // namespace scalegp
