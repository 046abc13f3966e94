#pragma once
// Embedding matrices, vocabularies, their on-disk formats, and exact
// cosine nearest-neighbour search.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace s3a {

using WordId = std::uint32_t;

// Row-major n x d matrix. Stored at 64-bit in memory; 32-bit on disk.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t dim);
  // Throws on shape mismatch, empty shape, or non-finite entries.
  EmbeddingMatrix(std::size_t rows, std::size_t dim, std::vector<double> data,
                  bool normalized = false);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dim() const noexcept { return dim_; }
  bool normalized() const noexcept { return normalized_; }
  void set_normalized(bool v) noexcept { normalized_ = v; }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * dim_, dim_};
  }
  std::span<double> row(std::size_t i) {
    return {data_.data() + i * dim_, dim_};
  }
  const double* data() const noexcept { return data_.data(); }
  double* data() noexcept { return data_.data(); }
  const std::vector<double>& values() const noexcept { return data_; }

  // Copy of the listed rows, preserving the normalized flag.
  EmbeddingMatrix select_rows(std::span<const std::size_t> indices) const;

 private:
  std::size_t rows_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> data_;
  bool normalized_ = false;
};

struct Synset {
  std::string definition;
};

struct Word {
  WordId id = 0;
  std::string name;
  std::vector<Synset> synsets;
};

class Vocabulary {
 public:
  Vocabulary() = default;
  // Validates contiguous ids and unique (trimmed, case-folded) names.
  explicit Vocabulary(std::vector<Word> words);

  std::size_t size() const noexcept { return words_.size(); }
  const Word& operator[](WordId id) const { return words_.at(id); }
  const std::vector<Word>& words() const noexcept { return words_; }

  // Lookup by trimmed, case-folded name; returns false if absent.
  bool find(std::string_view name, WordId& out) const;

 private:
  std::vector<Word> words_;
  std::vector<std::pair<std::string, WordId>> by_key_;  // sorted
};

// Trim surrounding whitespace and fold ASCII case.
std::string normalize_name(std::string_view name);

// ---- EMB1 format --------------------------------------------------------

// Reads an EMB1 file verbatim (no normalization); the normalized flag is
// taken from the header.
EmbeddingMatrix load_matrix(const std::filesystem::path& path);

// load_matrix, then l2_normalize if the header flag is 0. If the flag is 1,
// row norms are checked to lie within 1e-5 of 1.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path);

void save_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path);

Vocabulary load_vocabulary(const std::filesystem::path& path);
void save_vocabulary(const Vocabulary& v, const std::filesystem::path& path);

// ---- normalization and search --------------------------------------------

// Throws on a zero-norm row, naming its index.
EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m);
void l2_normalize_in_place(EmbeddingMatrix& m);

struct NearestResult {
  WordId index = 0;
  double similarity = 0.0;

  friend bool operator==(const NearestResult&, const NearestResult&) = default;
};

// Per query, the k most similar bank rows in non-increasing similarity,
// ties to the lower index. Parallel over queries via parallel_for.
std::vector<std::vector<NearestResult>> nearest(const EmbeddingMatrix& queries,
                                                const EmbeddingMatrix& bank,
                                                std::size_t k);

// k = 1 specialisation without per-query allocation.
std::vector<NearestResult> nearest_one(const EmbeddingMatrix& queries,
                                       const EmbeddingMatrix& bank);

// Full similarity block queries x bank (row-major, queries.rows() x bank.rows()).
std::vector<double> similarity_matrix(const EmbeddingMatrix& queries,
                                      const EmbeddingMatrix& bank);

// Mean cosine similarity of each row to its k nearest other rows.
std::vector<double> text_knn_similarity_stats(const EmbeddingMatrix& bank,
                                              std::size_t k = 3);

}  // namespace s3a
