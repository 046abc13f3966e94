#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "s3a/clustering.hpp"
#include "s3a/error.hpp"
#include "s3a/metrics.hpp"
#include "s3a/parallel.hpp"
#include "test_util.hpp"

namespace {

using namespace s3a;
using s3a::testing::random_unit;
using s3a::testing::rows_of;
using s3a::testing::TempDir;

// n points drawn around c random unit centres with per-coordinate noise.
EmbeddingMatrix bumps(std::size_t c, std::size_t per, std::size_t d, double noise, std::uint64_t seed,
                      std::vector<Label>* labels) {
  const auto centres = random_unit(c, d, seed);
  Rng rng(seed + 1);
  std::vector<double> v;
  for (std::size_t i = 0; i < c * per; ++i) {
    const std::size_t k = i % c;
    for (std::size_t j = 0; j < d; ++j) v.push_back(centres.row(k)[j] + noise * s3a::testing::gauss(rng));
    if (labels) labels->push_back(static_cast<Label>(k));
  }
  EmbeddingMatrix m(c * per, d, std::move(v));
  l2_normalize_in_place(m);
  return m;
}

TEST(KMeans, TwoSeparatedPairs) {
  const auto x = rows_of(2, {{1, 0}, {1, 0.01}, {-1, 0}, {-1, 0.01}});
  const auto r = kmeans(x, 2, 0);
  EXPECT_EQ(r.partition.assignment[0], r.partition.assignment[1]);
  EXPECT_EQ(r.partition.assignment[2], r.partition.assignment[3]);
  EXPECT_NE(r.partition.assignment[0], r.partition.assignment[2]);
  EXPECT_TRUE(r.converged);
  EXPECT_LT(r.objective.back(), 1e-4);
}

TEST(KMeans, KEqualsNGivesSingletonsAtZeroCost) {
  const auto x = random_unit(12, 5, 3);
  const auto r = kmeans(x, 12, 7);
  EXPECT_EQ(std::set<ClusterId>(r.partition.assignment.begin(), r.partition.assignment.end()).size(), 12u);
  EXPECT_NEAR(r.objective.back(), 0.0, 1e-9);
}

TEST(KMeans, KOneIsSingleCluster) {
  const auto x = random_unit(20, 4, 3);
  const auto r = kmeans(x, 1, 0);
  for (auto a : r.partition.assignment) EXPECT_EQ(a, 0u);
}

TEST(KMeans, ObjectiveNeverIncreasesAndNoEmptyClusters) {
  const auto x = random_unit(400, 10, 5);
  for (std::size_t k : {3u, 17u, 60u}) {
    const auto r = kmeans(x, k, 11);
    for (std::size_t t = 1; t < r.objective.size(); ++t)
      EXPECT_LE(r.objective[t], r.objective[t - 1] + 1e-9) << "k=" << k << " iter " << t;
    for (auto s : r.partition.sizes) EXPECT_GT(s, 0u);
    EXPECT_EQ(r.centroids.rows(), k);
  }
}

TEST(KMeans, DuplicatePointsForceRepair) {
  std::vector<std::vector<double>> rows(30, {1.0, 0.0, 0.0});
  rows.push_back({0.0, 1.0, 0.0});
  rows.push_back({0.0, 0.0, 1.0});
  const auto x = rows_of(3, rows);
  const auto r = kmeans(x, 5, 2);
  for (auto s : r.partition.sizes) EXPECT_GT(s, 0u);
}

TEST(KMeans, DeterministicAcrossRunsAndThreads) {
  const auto x = random_unit(800, 16, 9);
  set_num_threads(1);
  const auto a = kmeans(x, 25, 42);
  set_num_threads(4);
  const auto b = kmeans(x, 25, 42);
  set_num_threads(1);
  EXPECT_EQ(a.partition.assignment, b.partition.assignment);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_EQ(a.partition.hash(), b.partition.hash());
  const auto c = kmeans(x, 25, 43);
  EXPECT_NE(a.partition.assignment, c.partition.assignment);
}

TEST(KMeans, RecoversTwentyWellSeparatedBumps) {
  std::vector<Label> gt;
  const auto x = bumps(20, 50, 32, 0.05, 4, &gt);
  const auto r = kmeans(x, 20, 1);
  std::vector<Label> pred(r.partition.assignment.begin(), r.partition.assignment.end());
  EXPECT_GE(clustering_accuracy(pred, gt), 0.99);
}

TEST(KMeans, Preconditions) {
  const auto x = random_unit(5, 3, 1);
  EXPECT_THROW(kmeans(x, 0, 0), Error);
  EXPECT_THROW(kmeans(x, 6, 0), Error);
  EXPECT_THROW(kmeans(EmbeddingMatrix(2, 2, {1.0, 1.0, 2.0, 0.0}), 1, 0), Error);
}

// Direct O(n^2) silhouette oracle.
double silhouette_oracle(const EmbeddingMatrix& x, const ClusterPartition& p) {
  const std::size_t n = x.rows();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> sum(p.k, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      double dot = 0.0;
      for (std::size_t t = 0; t < x.dim(); ++t) dot += x.row(i)[t] * x.row(j)[t];
      sum[p.assignment[j]] += 1.0 - dot;
    }
    const ClusterId own = p.assignment[i];
    if (p.sizes[own] < 2) continue;
    const double a = sum[own] / static_cast<double>(p.sizes[own] - 1);
    double b = 1e300;
    for (std::size_t c = 0; c < p.k; ++c)
      if (c != own) b = std::min(b, sum[c] / static_cast<double>(p.sizes[c]));
    const double m = std::max(a, b);
    total += m > 1e-12 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(n);
}

TEST(Silhouette, HandComputedFourPoints) {
  // a = 0 inside each pair, b = 1 (orthogonal pairs) for every point.
  const auto x = rows_of(2, {{1, 0}, {1, 0}, {0, 1}, {0, 1}});
  const auto p = ClusterPartition::from_assignment({0, 0, 1, 1}, 2);
  EXPECT_NEAR(silhouette(x, p), 1.0, 1e-12);
  const auto q = ClusterPartition::from_assignment({0, 1, 0, 1}, 2);
  EXPECT_NEAR(silhouette(x, q), silhouette_oracle(x, q), 1e-9);
  EXPECT_LT(silhouette(x, q), 0.0);
}

TEST(Silhouette, MatchesPairwiseOracle) {
  const auto x = random_unit(150, 8, 17);
  for (std::size_t k : {2u, 5u, 30u}) {
    const auto r = kmeans(x, k, 3);
    EXPECT_NEAR(silhouette(x, r.partition), silhouette_oracle(x, r.partition), 1e-9) << k;
  }
}

TEST(Silhouette, SingletonsScoreZero) {
  const auto x = random_unit(4, 3, 2);
  const auto p = ClusterPartition::from_assignment({0, 1, 2, 3}, 4);
  EXPECT_EQ(silhouette(x, p), 0.0);
}

TEST(Silhouette, IdenticalPointsAcrossClustersScoreZero) {
  const auto x = rows_of(2, {{1, 0}, {1, 0}, {1, 0}, {1, 0}});
  const auto p = ClusterPartition::from_assignment({0, 0, 1, 1}, 2);
  EXPECT_NEAR(silhouette(x, p), 0.0, 1e-12);
}

TEST(Silhouette, RejectsOneCluster) {
  const auto x = random_unit(4, 3, 2);
  EXPECT_THROW(silhouette(x, ClusterPartition::from_assignment({0, 0, 0, 0}, 1)), Error);
}

TEST(Partition, ValidationMembersAndHash) {
  EXPECT_THROW(ClusterPartition::from_assignment({0, 2}, 2), Error);
  EXPECT_THROW(ClusterPartition::from_assignment({0, 0}, 2), Error);
  const auto p = ClusterPartition::from_assignment({1, 0, 1}, 2);
  EXPECT_EQ(p.members()[1], (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(p.sizes, (std::vector<std::size_t>{1, 2}));
  EXPECT_NE(p.hash(), ClusterPartition::from_assignment({0, 1, 0}, 2).hash());
}

TEST(Partition, FileRoundTrip) {
  TempDir dir;
  const auto p = ClusterPartition::from_assignment({2, 0, 1, 1, 0}, 3);
  save_partition(p, 9, dir / "p.tsv");
  const auto back = load_partition(dir / "p.tsv");
  EXPECT_EQ(back.assignment, p.assignment);
  EXPECT_EQ(back.k, 3u);
}

TEST(Grid, EndpointsAndSpacing) {
  EXPECT_EQ(geometric_grid(1, 100, 3), (std::vector<std::size_t>{1, 10, 100}));
  EXPECT_EQ(geometric_grid(5, 5, 10), (std::vector<std::size_t>{5}));
  const auto g = geometric_grid(50, 2000, 15);
  EXPECT_EQ(g.front(), 50u);
  EXPECT_EQ(g.back(), 2000u);
  EXPECT_EQ(g.size(), 15u);
  for (std::size_t i = 1; i < g.size(); ++i) EXPECT_LT(g[i - 1], g[i]);
  EXPECT_EQ(geometric_grid(10, 12, 15), (std::vector<std::size_t>{10, 11, 12}));
  EXPECT_THROW(geometric_grid(0, 5, 3), Error);
  EXPECT_THROW(geometric_grid(6, 5, 3), Error);
}

TEST(Elbow, PicksCornerOfLShapedScan) {
  const std::vector<ScanPoint> scan = {{2, 0.0}, {4, 0.8}, {8, 0.9}, {16, 0.95}, {32, 1.0}};
  EXPECT_EQ(elbow(scan), 4u);
}

TEST(Elbow, FlatScanTiesToSmallestK) {
  const std::vector<ScanPoint> scan = {{2, 0.5}, {3, 0.5}, {4, 0.5}};
  EXPECT_EQ(elbow(scan), 2u);
  EXPECT_THROW(elbow(std::span<const ScanPoint>(scan.data(), 2)), Error);
}

TEST(EstimateK, InvalidRangesFail) {
  const auto x = random_unit(100, 4, 1);
  KEstimateOptions o;
  o.lb0 = 10;
  o.ub0 = 10;
  EXPECT_THROW(estimate_k(x, o), Error);
  o.lb0 = 1;
  o.ub0 = 20;
  EXPECT_THROW(estimate_k(x, o), Error);
  o.lb0 = 2;
  o.ub0 = 200;
  EXPECT_THROW(estimate_k(x, o), Error);
  o.ub0 = 3;
  try {
    estimate_k(x, o);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kInfeasible);
  }
}

TEST(EstimateK, LogsEveryPassAndStaysInRange) {
  std::vector<Label> gt;
  const auto x = bumps(12, 40, 24, 0.08, 31, &gt);
  KEstimateOptions o;
  o.lb0 = 2;
  o.ub0 = 120;
  o.points_per_pass = 10;
  const auto est = estimate_k(x, o);
  EXPECT_GE(est.k_hat, o.lb0);
  EXPECT_LE(est.k_hat, o.ub0);
  EXPECT_EQ(est.scan_log[0].size(), geometric_grid(2, 120, 10).size());
  EXPECT_FALSE(est.scan_log[1].empty());
  EXPECT_LE(est.pass_solutions[1], est.pass_solutions[0]);
  if (est.scan_log[2].empty()) {
    EXPECT_FALSE(est.note.empty());
    EXPECT_EQ(est.k_hat, est.pass_solutions[1]);
  }
  const auto again = estimate_k(x, o);
  EXPECT_EQ(again.k_hat, est.k_hat);
}

TEST(EstimateK, SubsamplesLargeInputs) {
  const auto x = random_unit(300, 6, 8);
  KEstimateOptions o;
  o.lb0 = 2;
  o.ub0 = 40;
  o.points_per_pass = 6;
  o.max_points = 100;
  const auto est = estimate_k(x, o);
  EXPECT_GE(est.k_hat, 2u);
  o.ub0 = 150;
  EXPECT_THROW(estimate_k(x, o), Error);
}

}  // namespace
