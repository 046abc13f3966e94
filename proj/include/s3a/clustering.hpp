#pragma once
// Spherical k-means, cosine silhouette, and three-pass elbow estimation of
// the cluster count.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "s3a/embedding.hpp"

namespace s3a {

using ClusterId = std::uint32_t;

struct ClusterPartition {
  std::vector<ClusterId> assignment;
  std::size_t k = 0;
  std::vector<std::size_t> sizes;

  // Validates ids < k and that no cluster is empty.
  static ClusterPartition from_assignment(std::vector<ClusterId> assignment,
                                          std::size_t k);

  std::size_t n() const noexcept { return assignment.size(); }
  // Member indices per cluster, ascending.
  std::vector<std::vector<std::size_t>> members() const;
  // FNV-1a over the assignment vector; stable across platforms.
  std::uint64_t hash() const;
};

struct KMeansOptions {
  std::size_t max_iter = 100;
};

struct KMeansResult {
  ClusterPartition partition;
  EmbeddingMatrix centroids;  // k x d, unit rows
  // Sum of cosine distances to the assigned centroid, one entry per Lloyd
  // iteration (after assignment and any empty-cluster repair).
  std::vector<double> objective;
  std::size_t iterations = 0;
  std::size_t repairs = 0;
  bool converged = false;
};

KMeansResult kmeans(const EmbeddingMatrix& x, std::size_t k, std::uint64_t seed,
                    const KMeansOptions& options = {});

// Mean silhouette with cosine distance. Singletons score 0, as does any
// point whose a and b are both zero.
double silhouette(const EmbeddingMatrix& x, const ClusterPartition& p);

struct ScanPoint {
  std::size_t k = 0;
  double score = 0.0;
};

struct KEstimateOptions {
  std::size_t lb0 = 50;
  std::size_t ub0 = 2000;
  std::size_t points_per_pass = 15;
  std::uint64_t seed = 0;
  // Passes run on a seeded subsample when the input is larger than this.
  std::size_t max_points = 20000;
  KMeansOptions kmeans;
};

struct KEstimate {
  std::size_t k_hat = 0;
  std::array<std::size_t, 3> pass_solutions{};
  std::array<std::vector<ScanPoint>, 3> scan_log;
  std::string note;  // set when the third pass had nothing left to refine
};

KEstimate estimate_k(const EmbeddingMatrix& x, const KEstimateOptions& options);

// Integer values geometrically spaced over [lo, hi], rounded, deduplicated,
// always including both ends.
std::vector<std::size_t> geometric_grid(std::size_t lo, std::size_t hi,
                                        std::size_t points);

// Knee of a scan: the point with maximum perpendicular distance to the chord
// from the first to the last point, both axes min-max scaled to [0, 1].
// Ties go to the smaller k.
std::size_t elbow(std::span<const ScanPoint> scan);

// Line-delimited "instance<TAB>cluster" pairs under a "# k= n= seed=" header.
void save_partition(const ClusterPartition& p, std::uint64_t seed,
                    const std::filesystem::path& path);
ClusterPartition load_partition(const std::filesystem::path& path);

}  // namespace s3a
