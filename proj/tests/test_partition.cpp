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


#include <algorithm>

#include "doctest.h"
#include "oracles.hpp"
#include "scalegp/partition.hpp"

using namespace scalegp;

namespace {

std::vector<Index> sizes(const Partition& p) {
  std::vector<Index> s;
  for (const auto& b : p.blocks()) s.push_back(static_cast<Index>(b.size()));
  return s;
}

}  // namespace

TEST_CASE("one cluster has the column means as centroid") {
  const MatrixXd x = oracle::random_dataset(30, 3, 1).X;
  const Partition p = partition_kmeans(x, 1, 0);
  CHECK((p.centroids.row(0) - x.colwise().mean()).norm() < 1e-12);
  p.validate(30);
}

TEST_CASE("n clusters are singletons") {
  const MatrixXd x = oracle::random_dataset(12, 2, 2).X;
  const Partition p = partition_kmeans(x, 12, 3);
  for (Index s : sizes(p)) CHECK(s == 1);
}

TEST_CASE("separated blobs are recovered") {
  MatrixXd x(40, 1);
  for (Index i = 0; i < 20; ++i) {
    x(i, 0) = -10 + 0.05 * static_cast<double>(i);
    x(20 + i, 0) = 10 + 0.05 * static_cast<double>(i);
  }
  const Partition p = partition_kmeans(x, 2, 7);
  for (Index i = 1; i < 20; ++i) CHECK(p.assignments[i] == p.assignments[0]);
  for (Index i = 21; i < 40; ++i) CHECK(p.assignments[i] == p.assignments[20]);
  CHECK(p.assignments[0] != p.assignments[20]);
}

TEST_CASE("kmeans is deterministic and repairs empty clusters") {
  MatrixXd x = MatrixXd::Zero(10, 1);
  x(9, 0) = 1;  // nine duplicates and one outlier
  const Partition a = partition_kmeans(x, 4, 1);
  const Partition b = partition_kmeans(x, 4, 1);
  CHECK(a.assignments == b.assignments);
  a.validate(10);
}

TEST_CASE("random partitions are balanced") {
  const MatrixXd x4 = oracle::random_dataset(4, 1, 3).X;
  for (Index s : sizes(partition_random(x4, 2, 0))) CHECK(s == 2);
  const MatrixXd x = oracle::random_dataset(100, 2, 4).X;
  const Partition p = partition_random(x, 7, 11);
  for (Index s : sizes(p)) CHECK((s == 14 || s == 15));
  CHECK(p.assignments == partition_random(x, 7, 11).assignments);
}

TEST_CASE("partition contracts") {
  const MatrixXd x = oracle::random_dataset(5, 1, 5).X;
  CHECK_THROWS_AS(partition_kmeans(x, 6, 0), ContractViolation);
  CHECK_THROWS_AS(partition_random(x, 0, 0), ContractViolation);
  Partition p = partition_random(x, 2, 0);
  CHECK_THROWS_AS(p.validate(6), ContractViolation);
  p.assignments[0] = 5;
  CHECK_THROWS_AS(p.validate(5), ContractViolation);
}

TEST_CASE("nearest centroid") {
  Partition p;
  p.centroids = (MatrixXd(2, 1) << -1, 1).finished();
  CHECK(p.nearest((Eigen::RowVectorXd(1) << -0.2).finished()) == 0);
  CHECK(p.nearest((Eigen::RowVectorXd(1) << 0.7).finished()) == 1);
}
