#include "s3a/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "s3a/error.hpp"
#include "s3a/hash.hpp"
#include "s3a/parallel.hpp"

namespace s3a {

// ---- VoteMatrix ---------------------------------------------------------------

VoteMatrix::VoteMatrix(std::size_t k, std::size_t vocab_size)
    : vocab_size_(vocab_size), rows_(k) {}

void VoteMatrix::set_row(ClusterId c, std::vector<Entry> entries) {
  require(c < rows_.size(), "VoteMatrix: cluster id out of range");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    require(entries[i].first < vocab_size_, "VoteMatrix: word id out of range");
    require(entries[i].second >= 0.0 && std::isfinite(entries[i].second),
            "VoteMatrix: weights must be finite and nonnegative");
    require(i == 0 || entries[i - 1].first < entries[i].first,
            "VoteMatrix: row entries must be strictly ascending by word id");
  }
  rows_[c] = std::move(entries);
}

double VoteMatrix::at(ClusterId c, WordId w) const {
  const auto& r = rows_.at(c);
  auto it = std::lower_bound(r.begin(), r.end(), w,
                             [](const Entry& e, WordId v) { return e.first < v; });
  return (it != r.end() && it->first == w) ? it->second : 0.0;
}

double VoteMatrix::row_sum(ClusterId c) const {
  double s = 0.0;
  for (const auto& e : rows_.at(c)) s += e.second;
  return s;
}

std::vector<WordId> VoteMatrix::support() const {
  std::vector<WordId> cols;
  for (const auto& r : rows_)
    for (const auto& e : r)
      if (e.second > 0.0) cols.push_back(e.first);
  std::sort(cols.begin(), cols.end());
  cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  return cols;
}

VoteMatrix VoteMatrix::scaled(double factor) const {
  require(factor > 0.0 && std::isfinite(factor), "VoteMatrix::scaled: factor must be > 0");
  VoteMatrix out = *this;
  for (auto& r : out.rows_)
    for (auto& e : r) e.second *= factor;
  return out;
}

bool AssignmentMap::injective() const {
  std::vector<WordId> w = word_of_cluster;
  std::sort(w.begin(), w.end());
  return std::adjacent_find(w.begin(), w.end()) == w.end();
}

// ---- voting ---------------------------------------------------------------------

VoteResult vote(const ClusterPartition& p, std::span<const WordId> nn_word,
                std::size_t m, std::size_t vocab_size) {
  require(nn_word.size() == p.n(), "vote: nn_word has " + std::to_string(nn_word.size()) +
                                       " entries for " + std::to_string(p.n()) + " instances");
  require(m >= 1, "vote: m must be >= 1");
  require(m <= vocab_size, "vote: m exceeds the vocabulary size");
  for (WordId w : nn_word) require(w < vocab_size, "vote: word id out of range");

  const std::size_t k = p.k;
  const auto members = p.members();
  VoteResult out{VoteMatrix(k, vocab_size), CandidateSet{m, std::vector<std::vector<WordId>>(k),
                                                         std::vector<bool>(k, false)}};

  // Global frequency order for padding short rows.
  std::vector<std::pair<WordId, std::size_t>> global;
  {
    std::vector<WordId> all(nn_word.begin(), nn_word.end());
    std::sort(all.begin(), all.end());
    for (std::size_t i = 0; i < all.size();) {
      std::size_t j = i;
      while (j < all.size() && all[j] == all[i]) ++j;
      global.emplace_back(all[i], j - i);
      i = j;
    }
    std::stable_sort(global.begin(), global.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
  }

  std::vector<std::vector<VoteMatrix::Entry>> rows(k);
  parallel_for(k, 1, [&](std::size_t b, std::size_t e) {
    for (std::size_t c = b; c < e; ++c) {
      std::vector<WordId> words;
      words.reserve(members[c].size());
      for (std::size_t i : members[c]) words.push_back(nn_word[i]);
      std::sort(words.begin(), words.end());
      std::vector<std::pair<WordId, std::size_t>> counts;
      for (std::size_t i = 0; i < words.size();) {
        std::size_t j = i;
        while (j < words.size() && words[j] == words[i]) ++j;
        counts.emplace_back(words[i], j - i);
        i = j;
      }
      const double denom = static_cast<double>(k) * static_cast<double>(p.sizes[c]);
      auto& row = rows[c];
      row.reserve(counts.size());
      for (const auto& [w, n] : counts) row.emplace_back(w, static_cast<double>(n) / denom);

      std::stable_sort(counts.begin(), counts.end(),
                       [](const auto& a, const auto& b) { return a.second > b.second; });
      auto& cand = out.candidates.words[c];
      for (std::size_t t = 0; t < counts.size() && cand.size() < m; ++t) {
        cand.push_back(counts[t].first);
      }
      if (cand.size() < m) {
        out.candidates.padded[c] = true;
        auto present = [&](WordId w) { return std::find(cand.begin(), cand.end(), w) != cand.end(); };
        for (std::size_t t = 0; t < global.size() && cand.size() < m; ++t) {
          if (!present(global[t].first)) cand.push_back(global[t].first);
        }
        for (WordId w = 0; w < vocab_size && cand.size() < m; ++w) {
          if (!present(w)) cand.push_back(w);
        }
      }
    }
  });
  for (std::size_t c = 0; c < k; ++c) out.matrix.set_row(static_cast<ClusterId>(c), std::move(rows[c]));
  return out;
}

// ---- assignment -------------------------------------------------------------------

DenseAssignment max_weight_assignment(std::span<const double> weights,
                                      std::size_t rows, std::size_t cols) {
  require(weights.size() == rows * cols, "max_weight_assignment: weight size mismatch");
  require(rows <= cols, "max_weight_assignment: more rows than columns");
  DenseAssignment out;
  if (rows == 0) return out;

  // Weights scaled to max |w| = 1.
  double scale = 0.0;
  for (double w : weights) {
    require(std::isfinite(w), "max_weight_assignment: non-finite weight");
    scale = std::max(scale, std::abs(w));
  }
  if (scale == 0.0) scale = 1.0;
  constexpr double kEps = 1e-12;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  auto cost = [&](std::size_t r, std::size_t c) { return -weights[r * cols + c] / scale; };

  // Shortest augmenting path with potentials; 1-based with column 0 as the
  // virtual root. Columns are scanned in ascending order and only strictly
  // better (beyond kEps) candidates replace earlier ones.
  std::vector<double> u(rows + 1, 0.0), v(cols + 1, 0.0), minv(cols + 1);
  std::vector<std::size_t> match(cols + 1, 0), way(cols + 1, 0);
  std::vector<char> used(cols + 1);
  for (std::size_t i = 1; i <= rows; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = match[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= cols; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j] - kEps || minv[j] == kInf) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (j1 == 0 || minv[j] < delta - kEps) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= cols; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  out.col_of_row.assign(rows, 0);
  for (std::size_t j = 1; j <= cols; ++j) {
    if (match[j] != 0) out.col_of_row[match[j] - 1] = j - 1;
  }
  for (std::size_t r = 0; r < rows; ++r) out.objective += weights[r * cols + out.col_of_row[r]];
  return out;
}

AssignmentMap hungarian(const VoteMatrix& weights) {
  const std::size_t k = weights.k();
  require(k >= 1, "hungarian: empty vote matrix");
  const std::vector<WordId> support = weights.support();
  const std::size_t c = support.size();

  auto col_of = [&](WordId w) {
    return static_cast<std::size_t>(std::lower_bound(support.begin(), support.end(), w) -
                                    support.begin());
  };

  if (c < k) {
    // Deficient clusters: those left unmatched by a maximum matching of
    // the supported words into clusters.
    std::vector<double> t(c * k, 0.0);
    for (std::size_t r = 0; r < k; ++r)
      for (const auto& [w, val] : weights.row(static_cast<ClusterId>(r)))
        if (val > 0.0) t[col_of(w) * k + r] = 1.0;
    std::vector<bool> covered(k, false);
    if (c > 0) {
      const auto dense = max_weight_assignment(t, c, k);
      for (std::size_t j = 0; j < c; ++j)
        if (t[j * k + dense.col_of_row[j]] > 0.0) covered[dense.col_of_row[j]] = true;
    }
    std::string list;
    for (std::size_t r = 0; r < k; ++r) {
      if (!covered[r]) list += (list.empty() ? "" : ", ") + std::to_string(r);
    }
    fail(ErrorKind::kInfeasible, "hungarian: only " + std::to_string(c) +
                                     " supported words for " + std::to_string(k) +
                                     " clusters; deficient clusters: " + list);
  }

  std::vector<double> dense(k * c, 0.0);
  for (std::size_t r = 0; r < k; ++r)
    for (const auto& [w, val] : weights.row(static_cast<ClusterId>(r)))
      if (val > 0.0) dense[r * c + col_of(w)] = val;
  const auto sol = max_weight_assignment(dense, k, c);

  AssignmentMap map;
  map.word_of_cluster.resize(k);
  for (std::size_t r = 0; r < k; ++r) map.word_of_cluster[r] = support[sol.col_of_row[r]];
  map.objective = sol.objective;
  return map;
}

StructuralLabels broadcast_labels(const ClusterPartition& p, const AssignmentMap& map,
                                  std::size_t epoch) {
  require(map.word_of_cluster.size() == p.k, "broadcast_labels: map does not cover all clusters");
  StructuralLabels out;
  out.labels.resize(p.n());
  for (std::size_t i = 0; i < p.n(); ++i) out.labels[i] = map.word_of_cluster[p.assignment[i]];
  out.epoch = epoch;
  out.partition_hash = p.hash();
  return out;
}

// ---- iterative clustering ------------------------------------------------------------

namespace {

// Moves the least similar point of a multi-member cluster into each empty
// cluster. Returns the number of moves.
std::size_t repair_empty(std::vector<ClusterId>& assign, std::vector<double>& sim,
                         std::size_t k) {
  std::vector<std::size_t> sizes(k, 0);
  for (ClusterId c : assign) ++sizes[c];
  std::size_t moves = 0;
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] != 0) continue;
    std::size_t far = assign.size();
    for (std::size_t i = 0; i < assign.size(); ++i) {
      if (sizes[assign[i]] < 2) continue;
      if (far == assign.size() || sim[i] < sim[far]) far = i;
    }
    require(far < assign.size(), "repair: no cluster can spare a point");
    --sizes[assign[far]];
    assign[far] = static_cast<ClusterId>(c);
    ++sizes[c];
    sim[far] = std::numeric_limits<double>::infinity();  // do not move it again
    ++moves;
  }
  return moves;
}

}  // namespace

IterativeResult iterative_cluster_vote(const EmbeddingMatrix& x,
                                       const EmbeddingMatrix& vocab_bank,
                                       ClusterPartition initial,
                                       std::span<const WordId> nn_word,
                                       std::size_t max_iter) {
  require(x.normalized() && vocab_bank.normalized(),
          "iterative_cluster_vote: inputs must be normalized");
  require(x.dim() == vocab_bank.dim(), "iterative_cluster_vote: dimension mismatch");
  require(initial.n() == x.rows(), "iterative_cluster_vote: partition size mismatch");
  const std::size_t k = initial.k;
  const std::size_t vocab = vocab_bank.rows();

  IterativeResult res;
  ClusterPartition current = std::move(initial);
  std::vector<std::pair<std::uint64_t, std::vector<ClusterId>>> seen{
      {current.hash(), current.assignment}};
  double best_obj = -std::numeric_limits<double>::infinity();
  ClusterPartition best_partition;
  AssignmentMap best_map;

  for (std::size_t step = 1; step <= max_iter; ++step) {
    AssignmentMap map = hungarian(vote(current, nn_word, 1, vocab).matrix);
    res.objectives.push_back(map.objective);
    if (map.objective > best_obj) {
      best_obj = map.objective;
      best_partition = current;
      best_map = map;
    }

    std::vector<std::size_t> words(map.word_of_cluster.begin(), map.word_of_cluster.end());
    const EmbeddingMatrix protos = vocab_bank.select_rows(words);
    const auto hits = nearest_one(x, protos);
    std::vector<ClusterId> next(x.rows());
    std::vector<double> sim(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) {
      next[i] = hits[i].index;
      sim[i] = hits[i].similarity;
    }
    res.repairs += repair_empty(next, sim, k);
    res.iterations = step;

    if (next == current.assignment) {
      res.converged = true;
      res.partition = std::move(current);
      res.map = std::move(map);
      return res;
    }
    const std::uint64_t h = fnv1a64(next);
    for (const auto& [sh, sv] : seen) {
      if (sh == h && sv == next) {
        res.cycled = true;
        res.partition = std::move(best_partition);
        res.map = std::move(best_map);
        return res;
      }
    }
    seen.emplace_back(h, next);
    current = ClusterPartition::from_assignment(std::move(next), k);
  }

  res.map = hungarian(vote(current, nn_word, 1, vocab).matrix);
  res.objectives.push_back(res.map.objective);
  res.partition = std::move(current);
  return res;
}

IterativeResult iterative_cluster_vote(const EmbeddingMatrix& x,
                                       const EmbeddingMatrix& vocab_bank, std::size_t k,
                                       std::uint64_t seed, std::size_t max_iter) {
  auto km = kmeans(x, k, seed);
  std::vector<WordId> nn;
  nn.reserve(x.rows());
  for (const auto& h : nearest_one(x, vocab_bank)) nn.push_back(h.index);
  return iterative_cluster_vote(x, vocab_bank, std::move(km.partition), nn, max_iter);
}

// ---- re-alignment ------------------------------------------------------------------------

RealignResult realign(const ClusterPartition& p, const EmbeddingMatrix& x,
                      std::span<const AugmentedTextBank> banks) {
  require(x.normalized(), "realign: image embeddings must be normalized");
  require(p.n() == x.rows(), "realign: partition size mismatch");
  require(banks.size() == p.k, "realign: need one bank per cluster");
  std::size_t vocab_size = 0;
  for (std::size_t c = 0; c < p.k; ++c) {
    const auto& b = banks[c];
    require(b.cluster_id == c, "realign: banks must be ordered by cluster id");
    require(!b.entries.empty() && b.embeddings.rows() == b.entries.size(),
            "realign: bank " + std::to_string(c) + " is empty or misaligned");
    require(b.embeddings.normalized() && b.embeddings.dim() == x.dim(),
            "realign: bank " + std::to_string(c) + " must be normalized with dimension " +
                std::to_string(x.dim()));
    for (const auto& e : b.entries) vocab_size = std::max<std::size_t>(vocab_size, e.word_id + 1);
  }

  const std::size_t k = p.k;
  const auto members = p.members();
  std::vector<std::vector<VoteMatrix::Entry>> rows(k);
  for (std::size_t c = 0; c < k; ++c) {
    const auto& bank = banks[c];
    const std::size_t hits_per = std::min<std::size_t>(3, bank.embeddings.rows());
    const EmbeddingMatrix sub = x.select_rows(members[c]);
    const auto hits = nearest(sub, bank.embeddings, hits_per);
    std::map<WordId, std::size_t> counts;
    for (const auto& top : hits)
      for (const auto& h : top) ++counts[bank.entries[h.index].word_id];
    const double denom = static_cast<double>(hits_per) * static_cast<double>(k) *
                         static_cast<double>(p.sizes[c]);
    for (const auto& [w, n] : counts) rows[c].emplace_back(w, static_cast<double>(n) / denom);
  }

  RealignResult out;
  out.matrix = VoteMatrix(k, vocab_size);
  for (std::size_t c = 0; c < k; ++c) out.matrix.set_row(static_cast<ClusterId>(c), std::move(rows[c]));
  out.map = hungarian(out.matrix);
  out.labels = broadcast_labels(p, out.map);
  return out;
}

// ---- files ---------------------------------------------------------------------------------

void save_vote_matrix(const VoteMatrix& m, const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (f == nullptr) fail(ErrorKind::kIo, "cannot write " + path.string());
  for (std::size_t c = 0; c < m.k(); ++c)
    for (const auto& [w, val] : m.row(static_cast<ClusterId>(c)))
      std::fprintf(f, "%zu\t%u\t%.17g\n", c, w, val);
  std::fclose(f);
}

VoteMatrix load_vote_matrix(const std::filesystem::path& path, std::size_t k,
                            std::size_t vocab_size) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<std::vector<VoteMatrix::Entry>> rows(k);
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::size_t c = 0;
    WordId w = 0;
    double val = 0;
    if (!(ls >> c >> w >> val) || c >= k) {
      fail(ErrorKind::kFormat, path.string() + ": bad triplet '" + line + "'");
    }
    rows[c].emplace_back(w, val);
  }
  VoteMatrix m(k, vocab_size);
  for (std::size_t c = 0; c < k; ++c) {
    std::sort(rows[c].begin(), rows[c].end());
    m.set_row(static_cast<ClusterId>(c), std::move(rows[c]));
  }
  return m;
}

}  // namespace s3a
