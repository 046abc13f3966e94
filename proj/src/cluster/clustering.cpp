#include "s3a/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "s3a/error.hpp"
#include "s3a/hash.hpp"
#include "s3a/kernels.hpp"
#include "s3a/parallel.hpp"
#include "s3a/random.hpp"

namespace s3a {

// ---- ClusterPartition ------------------------------------------------------

ClusterPartition ClusterPartition::from_assignment(std::vector<ClusterId> assignment,
                                                   std::size_t k) {
  require(k >= 1, "partition: k must be >= 1");
  ClusterPartition p;
  p.k = k;
  p.sizes.assign(k, 0);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    require(assignment[i] < k, "partition: instance " + std::to_string(i) +
                                   " has cluster id " + std::to_string(assignment[i]) +
                                   " >= k=" + std::to_string(k));
    ++p.sizes[assignment[i]];
  }
  for (std::size_t c = 0; c < k; ++c) {
    require(p.sizes[c] > 0, "partition: cluster " + std::to_string(c) + " is empty");
  }
  p.assignment = std::move(assignment);
  return p;
}

std::vector<std::vector<std::size_t>> ClusterPartition::members() const {
  std::vector<std::vector<std::size_t>> out(k);
  for (std::size_t c = 0; c < k; ++c) out[c].reserve(sizes[c]);
  for (std::size_t i = 0; i < assignment.size(); ++i) out[assignment[i]].push_back(i);
  return out;
}

std::uint64_t ClusterPartition::hash() const { return fnv1a64(assignment); }

// ---- k-means -----------------------------------------------------------------

namespace {

// Similarity of every row of x to a single unit vector c.
void similarities_to(const EmbeddingMatrix& x, std::span<const double> c,
                     std::vector<double>& out) {
  out.resize(x.rows());
  const auto& k = kernels::active();
  parallel_for(x.rows(), 256, [&](std::size_t b, std::size_t e) {
    k.gram(x.data() + b * x.dim(), e - b, c.data(), 1, x.dim(), out.data() + b, 1);
  });
}

// Greedy k-means++: each new centre is the best of 2 + ln k candidates drawn
// proportionally to squared chord distance 2(1 - cos).
std::vector<std::size_t> seed_centres(const EmbeddingMatrix& x, std::size_t k, Rng& rng) {
  const std::size_t n = x.rows();
  std::vector<std::size_t> centres;
  centres.reserve(k);
  std::vector<bool> taken(n, false);
  std::vector<double> dist(n), sims, cand_dist(n), best_dist(n);

  const std::size_t first = uniform_index(rng, n);
  centres.push_back(first);
  taken[first] = true;
  similarities_to(x, x.row(first), sims);
  for (std::size_t i = 0; i < n; ++i) dist[i] = std::max(0.0, 2.0 * (1.0 - sims[i]));

  const std::size_t trials = 2 + static_cast<std::size_t>(std::log(static_cast<double>(k)));
  while (centres.size() < k) {
    const double total = std::accumulate(dist.begin(), dist.end(), 0.0);
    if (!(total > 0.0)) {
      // Every remaining point coincides with a centre.
      std::size_t i = 0;
      while (taken[i]) ++i;
      centres.push_back(i);
      taken[i] = true;
      continue;
    }
    std::size_t best = n;
    double best_potential = std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < trials; ++t) {
      double target = uniform01(rng) * total;
      std::size_t pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= dist[i];
        if (target < 0.0 && dist[i] > 0.0) {
          pick = i;
          break;
        }
      }
      while (pick > 0 && dist[pick] == 0.0) --pick;
      similarities_to(x, x.row(pick), sims);
      double potential = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        cand_dist[i] = std::min(dist[i], std::max(0.0, 2.0 * (1.0 - sims[i])));
        potential += cand_dist[i];
      }
      if (potential < best_potential) {
        best_potential = potential;
        best = pick;
        best_dist.swap(cand_dist);
      }
    }
    centres.push_back(best);
    taken[best] = true;
    dist.swap(best_dist);
    best_dist.resize(n);
  }
  return centres;
}

}  // namespace

KMeansResult kmeans(const EmbeddingMatrix& x, std::size_t k, std::uint64_t seed,
                    const KMeansOptions& options) {
  require(x.normalized(), "kmeans: input must be normalized");
  require(k >= 1, "kmeans: k must be >= 1");
  require(k <= x.rows(), "kmeans: k=" + std::to_string(k) + " exceeds n=" +
                             std::to_string(x.rows()));
  const std::size_t n = x.rows();
  const std::size_t d = x.dim();
  Rng rng(seed);

  const auto seeds = seed_centres(x, k, rng);
  EmbeddingMatrix centroids = x.select_rows(seeds);
  centroids.set_normalized(true);

  KMeansResult result;
  std::vector<ClusterId> assign(n), previous;
  std::vector<double> sim(n);
  std::vector<std::size_t> sizes(k);

  for (std::size_t iter = 0; iter < std::max<std::size_t>(options.max_iter, 1); ++iter) {
    const auto hits = nearest_one(x, centroids);
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      assign[i] = hits[i].index;
      sim[i] = hits[i].similarity;
      ++sizes[assign[i]];
    }
    // Empty clusters take the point farthest from its centroid among
    // clusters that can spare one.
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t far = n;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[assign[i]] < 2) continue;
        if (far == n || sim[i] < sim[far]) far = i;
      }
      --sizes[assign[far]];
      assign[far] = static_cast<ClusterId>(c);
      ++sizes[c];
      auto dst = centroids.row(c);
      auto src = x.row(far);
      std::copy(src.begin(), src.end(), dst.begin());
      sim[far] = kernels::dot(src, src);
      ++result.repairs;
    }
    double objective = 0.0;
    for (std::size_t i = 0; i < n; ++i) objective += 1.0 - sim[i];
    result.objective.push_back(objective);
    result.iterations = iter + 1;
    if (assign == previous) {
      result.converged = true;
      break;
    }
    previous = assign;

    // Centroid update: normalized member sum, members in index order.
    std::vector<std::vector<std::size_t>> members(k);
    for (std::size_t i = 0; i < n; ++i) members[assign[i]].push_back(i);
    const auto& kt = kernels::active();
    parallel_for(k, 1, [&](std::size_t b, std::size_t e) {
      std::vector<double> acc(d);
      for (std::size_t c = b; c < e; ++c) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t i : members[c]) kt.axpy(1.0, x.row(i).data(), acc.data(), d);
        const double norm = std::sqrt(kt.dot(acc.data(), acc.data(), d));
        auto dst = centroids.row(c);
        if (norm > 1e-12) {
          for (std::size_t j = 0; j < d; ++j) dst[j] = acc[j] / norm;
        } else {
          auto src = x.row(members[c].front());
          std::copy(src.begin(), src.end(), dst.begin());
        }
      }
    });
  }

  result.partition = ClusterPartition::from_assignment(std::move(assign), k);
  result.centroids = std::move(centroids);
  return result;
}

// ---- silhouette ----------------------------------------------------------------

double silhouette(const EmbeddingMatrix& x, const ClusterPartition& p) {
  require(p.k >= 2, "silhouette: undefined for k < 2");
  require(p.n() == x.rows(), "silhouette: partition size does not match data");
  const std::size_t n = x.rows();
  const std::size_t d = x.dim();
  const std::size_t k = p.k;
  const auto& kt = kernels::active();

  // Mean cosine distance from z to cluster C is 1 - z . sum(C) / |C|, so
  // per-cluster sums give the exact pairwise means in O(n k d).
  std::vector<double> sums(k * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    kt.axpy(1.0, x.row(i).data(), sums.data() + p.assignment[i] * d, d);
  }

  std::vector<double> score(n, 0.0);
  parallel_for(n, 64, [&](std::size_t b, std::size_t e) {
    std::vector<double> dots(k);
    for (std::size_t i = b; i < e; ++i) {
      const ClusterId own = p.assignment[i];
      if (p.sizes[own] < 2) continue;
      const double* zi = x.row(i).data();
      kt.gram(zi, 1, sums.data(), k, d, dots.data(), k);
      const double self = kt.dot(zi, zi, d);
      const double a = std::max(
          0.0, 1.0 - (dots[own] - self) / static_cast<double>(p.sizes[own] - 1));
      double bmin = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < k; ++c) {
        if (c == own) continue;
        bmin = std::min(bmin, std::max(0.0, 1.0 - dots[c] / static_cast<double>(p.sizes[c])));
      }
      const double denom = std::max(a, bmin);
      score[i] = denom > 1e-12 ? (bmin - a) / denom : 0.0;
    }
  });
  double total = 0.0;
  for (double s : score) total += s;
  return total / static_cast<double>(n);
}

// ---- K estimation ----------------------------------------------------------------

std::vector<std::size_t> geometric_grid(std::size_t lo, std::size_t hi,
                                        std::size_t points) {
  require(lo >= 1 && lo <= hi, "geometric_grid: need 1 <= lo <= hi");
  std::vector<std::size_t> grid;
  if (points < 2 || lo == hi) {
    grid.push_back(lo);
    if (hi != lo) grid.push_back(hi);
    return grid;
  }
  const double ratio = std::log(static_cast<double>(hi) / static_cast<double>(lo));
  for (std::size_t t = 0; t < points; ++t) {
    const double v = static_cast<double>(lo) *
                     std::exp(ratio * static_cast<double>(t) / static_cast<double>(points - 1));
    std::size_t r = static_cast<std::size_t>(std::llround(v));
    r = std::clamp(r, lo, hi);
    if (grid.empty() || grid.back() != r) grid.push_back(r);
  }
  grid.front() = lo;
  grid.back() = hi;
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

std::size_t elbow(std::span<const ScanPoint> scan) {
  require(scan.size() >= 3, "elbow: need at least 3 scan points");
  const double k0 = static_cast<double>(scan.front().k);
  const double k1 = static_cast<double>(scan.back().k);
  double smin = scan.front().score, smax = scan.front().score;
  for (const auto& s : scan) {
    smin = std::min(smin, s.score);
    smax = std::max(smax, s.score);
  }
  const double xr = k1 - k0;
  const double yr = smax - smin;
  auto xs = [&](const ScanPoint& s) { return xr > 0 ? (static_cast<double>(s.k) - k0) / xr : 0.0; };
  auto ys = [&](const ScanPoint& s) { return yr > 0 ? (s.score - smin) / yr : 0.0; };
  const double x0 = xs(scan.front()), y0 = ys(scan.front());
  const double dx = xs(scan.back()) - x0, dy = ys(scan.back()) - y0;
  const double len = std::hypot(dx, dy);
  std::size_t best = 0;
  double best_dist = -1.0;
  for (std::size_t t = 0; t < scan.size(); ++t) {
    const double dist =
        len > 0 ? std::abs(dx * (y0 - ys(scan[t])) - (x0 - xs(scan[t])) * dy) / len : 0.0;
    if (dist > best_dist) {
      best_dist = dist;
      best = t;
    }
  }
  return scan[best].k;
}

namespace {

std::vector<ScanPoint> scan_pass(const EmbeddingMatrix& x,
                                 const std::vector<std::size_t>& grid,
                                 const KEstimateOptions& opt) {
  std::vector<ScanPoint> log(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto km = kmeans(x, grid[g], opt.seed, opt.kmeans);
    log[g] = ScanPoint{grid[g], silhouette(x, km.partition)};
  }
  return log;
}

}  // namespace

KEstimate estimate_k(const EmbeddingMatrix& x_full, const KEstimateOptions& opt) {
  require(opt.lb0 < opt.ub0, "estimate_k: lb0=" + std::to_string(opt.lb0) +
                                 " must be < ub0=" + std::to_string(opt.ub0));
  require(opt.lb0 >= 2, "estimate_k: lb0 must be >= 2 (silhouette needs two clusters)");

  EmbeddingMatrix sample;
  const EmbeddingMatrix* x = &x_full;
  if (x_full.rows() > opt.max_points) {
    Rng rng(opt.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> idx(x_full.rows());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < opt.max_points; ++i) {
      std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
    }
    idx.resize(opt.max_points);
    std::sort(idx.begin(), idx.end());
    sample = x_full.select_rows(idx);
    x = &sample;
  }
  require(opt.ub0 <= x->rows(), "estimate_k: ub0=" + std::to_string(opt.ub0) +
                                    " exceeds the " + std::to_string(x->rows()) +
                                    " points available");

  auto grid_or_fail = [&](std::size_t lo, std::size_t hi, int pass) {
    auto grid = geometric_grid(lo, hi, opt.points_per_pass);
    if (grid.size() < 3) {
      fail(ErrorKind::kInfeasible,
           "estimate_k: pass " + std::to_string(pass) + " range [" + std::to_string(lo) +
               ", " + std::to_string(hi) + "] yields fewer than 3 distinct candidates");
    }
    return grid;
  };

  KEstimate est;
  est.scan_log[0] = scan_pass(*x, grid_or_fail(opt.lb0, opt.ub0, 1), opt);
  const std::size_t s1 = elbow(est.scan_log[0]);
  est.pass_solutions[0] = s1;

  est.scan_log[1] = scan_pass(*x, grid_or_fail(opt.lb0, s1, 2), opt);
  const std::size_t s2 = elbow(est.scan_log[1]);
  est.pass_solutions[1] = s2;

  // S2 is drawn from [lb0, S1], so the third range is never inverted.
  const std::size_t hi3 = (s2 + s1) / 2;
  if (s2 > hi3) {
    fail(ErrorKind::kInfeasible, "estimate_k: third pass range [" + std::to_string(s2) +
                                     ", " + std::to_string(hi3) + "] is inverted");
  }
  const auto grid3 = geometric_grid(s2, hi3, opt.points_per_pass);
  std::size_t s3 = s2;
  if (grid3.size() >= 3) {
    est.scan_log[2] = scan_pass(*x, grid3, opt);
    s3 = elbow(est.scan_log[2]);
  } else {
    est.note = "third pass range [" + std::to_string(s2) + ", " + std::to_string(hi3) +
               "] has fewer than 3 candidates; keeping S2";
  }
  est.pass_solutions[2] = s3;
  est.k_hat = s3;
  return est;
}

// ---- partition files ----------------------------------------------------------------

void save_partition(const ClusterPartition& p, std::uint64_t seed,
                    const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out << "# k=" << p.k << " n=" << p.n() << " seed=" << seed << '\n';
  for (std::size_t i = 0; i < p.n(); ++i) out << i << '\t' << p.assignment[i] << '\n';
}

ClusterPartition load_partition(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::string header;
  std::getline(in, header);
  std::size_t k = 0, n = 0;
  unsigned long long seed = 0;
  if (std::sscanf(header.c_str(), "# k=%zu n=%zu seed=%llu", &k, &n, &seed) != 3) {
    fail(ErrorKind::kFormat, path.string() + ": bad partition header");
  }
  std::vector<ClusterId> assign(n);
  std::vector<bool> seen(n, false);
  std::size_t idx = 0, cid = 0, count = 0;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    if (!(ls >> idx >> cid) || idx >= n || seen[idx]) {
      fail(ErrorKind::kFormat, path.string() + ": bad record '" + line + "'");
    }
    seen[idx] = true;
    assign[idx] = static_cast<ClusterId>(cid);
    ++count;
  }
  if (count != n) fail(ErrorKind::kFormat, path.string() + ": record count != n");
  return ClusterPartition::from_assignment(std::move(assign), k);
}

}  // namespace s3a
