#pragma once
// Evaluation metrics over per-instance label vectors.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "s3a/embedding.hpp"

namespace s3a {

using Label = std::uint32_t;

double top1_accuracy(std::span<const Label> pred, std::span<const Label> gt);

// Best exact-match rate over injective relabelings of the predicted labels,
// solved as a maximum-weight assignment on the confusion matrix.
double clustering_accuracy(std::span<const Label> pred, std::span<const Label> gt);

// |A n B| / |A u B|; 1 when both are empty. Duplicates are ignored.
double label_set_iou(std::span<const Label> a, std::span<const Label> b);

// sim[pred][gt] for predicted ids (rows) against ground-truth ids (columns).
class SimilarityMatrix {
 public:
  SimilarityMatrix() = default;
  // Throws unless every entry lies in [-1, 1] (within 1e-5).
  SimilarityMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double at(Label pred, Label gt) const;

  // Cosine similarity of every pair of rows of two unit-norm banks.
  static SimilarityMatrix from_banks(const EmbeddingMatrix& pred_bank,
                                     const EmbeddingMatrix& gt_bank);

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

// Loads an EMB1 matrix verbatim (no renormalization). A JSON sidecar
// "<path>.ids.json" with {"rows": [...], "cols": [...]} maps file rows and
// columns to label ids; without one, row i is id i. Sidecar entries may be
// integers or names; names go through resolve_name.
using NameResolver = std::function<Label(const std::string&)>;
SimilarityMatrix load_similarity(const std::filesystem::path& path,
                                 const NameResolver& resolve_name = nullptr);

// Mean of sim[pred_i][gt_i]. Throws on out-of-range ids.
double soft_accuracy(std::span<const Label> pred, std::span<const Label> gt,
                     const SimilarityMatrix& sim);

// Row-major confusion counts [pred][gt] after compacting each side's labels
// to 0..k-1 in ascending id order.
struct Confusion {
  std::vector<Label> pred_ids;
  std::vector<Label> gt_ids;
  std::vector<double> counts;
};
Confusion confusion_matrix(std::span<const Label> pred, std::span<const Label> gt);

}  // namespace s3a
