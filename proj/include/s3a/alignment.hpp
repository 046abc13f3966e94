#pragma once
// Cluster-to-vocabulary alignment: frequency voting, maximum-weight
// assignment, iterative prototype reclustering, and re-alignment against
// augmented text banks.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "s3a/clustering.hpp"
#include "s3a/embedding.hpp"
#include "s3a/text_bank.hpp"

namespace s3a {

// K x |W| nonnegative weights, stored sparsely per row (ascending word id).
class VoteMatrix {
 public:
  using Entry = std::pair<WordId, double>;

  VoteMatrix() = default;
  VoteMatrix(std::size_t k, std::size_t vocab_size);

  std::size_t k() const noexcept { return rows_.size(); }
  std::size_t vocab_size() const noexcept { return vocab_size_; }

  const std::vector<Entry>& row(ClusterId c) const { return rows_.at(c); }
  // Entries must arrive in ascending word order per row, weights >= 0.
  void set_row(ClusterId c, std::vector<Entry> entries);

  double at(ClusterId c, WordId w) const;
  double row_sum(ClusterId c) const;
  // Ascending union of words with positive weight in any row.
  std::vector<WordId> support() const;
  VoteMatrix scaled(double factor) const;

 private:
  std::size_t vocab_size_ = 0;
  std::vector<std::vector<Entry>> rows_;
};

// Top-m words per cluster in rank order (frequency descending, then word id).
struct CandidateSet {
  std::size_t m = 0;
  std::vector<std::vector<WordId>> words;
  // True where a row had fewer than m voted words and was padded from the
  // global nearest-word frequency order.
  std::vector<bool> padded;
};

struct VoteResult {
  VoteMatrix matrix;
  CandidateSet candidates;
};

// word_of_cluster[c] is the word assigned to cluster c; injective.
struct AssignmentMap {
  std::vector<WordId> word_of_cluster;
  double objective = 0.0;

  bool injective() const;
};

struct StructuralLabels {
  std::vector<WordId> labels;  // per instance
  std::size_t epoch = 0;
  std::uint64_t partition_hash = 0;
};

// Frequency vote of per-instance nearest words inside each cluster:
// M[k][j] = count_k(j) / (K |cluster k|).
VoteResult vote(const ClusterPartition& p, std::span<const WordId> nn_word,
                std::size_t m, std::size_t vocab_size);

// Maximum-weight injective assignment of rows into columns of a dense
// rows x cols matrix (rows <= cols). col_of_row[r] is the chosen column.
struct DenseAssignment {
  std::vector<std::size_t> col_of_row;
  double objective = 0.0;
};
DenseAssignment max_weight_assignment(std::span<const double> weights,
                                      std::size_t rows, std::size_t cols);

// Hungarian matching of clusters to words, restricted to the support columns.
// Throws ErrorKind::kInfeasible naming the unmatched clusters when the
// support has fewer than K words.
AssignmentMap hungarian(const VoteMatrix& weights);

StructuralLabels broadcast_labels(const ClusterPartition& p, const AssignmentMap& map,
                                  std::size_t epoch = 0);

struct IterativeResult {
  ClusterPartition partition;
  AssignmentMap map;
  bool converged = false;
  bool cycled = false;
  std::size_t iterations = 0;
  std::size_t repairs = 0;
  std::vector<double> objectives;  // Hungarian objective per visited partition
};

// Vote -> match -> reassign to the matched word prototypes, until the
// assignment stops changing, a partition repeats, or max_iter steps.
IterativeResult iterative_cluster_vote(const EmbeddingMatrix& x,
                                       const EmbeddingMatrix& vocab_bank,
                                       ClusterPartition initial,
                                       std::span<const WordId> nn_word,
                                       std::size_t max_iter = 50);

// Same, starting from k-means(x, k, seed) and computing nn_word itself.
IterativeResult iterative_cluster_vote(const EmbeddingMatrix& x,
                                       const EmbeddingMatrix& vocab_bank,
                                       std::size_t k, std::uint64_t seed,
                                       std::size_t max_iter = 50);

struct RealignResult {
  VoteMatrix matrix;  // M-tilde
  AssignmentMap map;
  StructuralLabels labels;
};

// Top-3 vote of each instance against its own cluster's bank. An instance
// whose bank has h < 3 rows spreads its 1/(K |cluster|) mass over h hits.
RealignResult realign(const ClusterPartition& p, const EmbeddingMatrix& x,
                      std::span<const AugmentedTextBank> banks);

// Sparse triplets "cluster<TAB>word<TAB>weight" with 17 significant digits.
void save_vote_matrix(const VoteMatrix& m, const std::filesystem::path& path);
VoteMatrix load_vote_matrix(const std::filesystem::path& path, std::size_t k,
                            std::size_t vocab_size);

}  // namespace s3a
