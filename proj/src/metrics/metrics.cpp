#include "s3a/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "s3a/alignment.hpp"
#include "s3a/embedding.hpp"
#include "s3a/error.hpp"

namespace s3a {

namespace {

void check_lengths(std::span<const Label> pred, std::span<const Label> gt, const char* what) {
  require(pred.size() == gt.size(), std::string(what) + ": " + std::to_string(pred.size()) +
                                        " predictions for " + std::to_string(gt.size()) + " labels");
  require(!pred.empty(), std::string(what) + ": no instances");
}

std::vector<Label> distinct(std::span<const Label> v) {
  std::vector<Label> out(v.begin(), v.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::size_t index_of(const std::vector<Label>& ids, Label l) {
  return static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), l) - ids.begin());
}

}  // namespace

double top1_accuracy(std::span<const Label> pred, std::span<const Label> gt) {
  check_lengths(pred, gt, "top1_accuracy");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == gt[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

Confusion confusion_matrix(std::span<const Label> pred, std::span<const Label> gt) {
  check_lengths(pred, gt, "confusion_matrix");
  Confusion c;
  c.pred_ids = distinct(pred);
  c.gt_ids = distinct(gt);
  const std::size_t cols = c.gt_ids.size();
  c.counts.assign(c.pred_ids.size() * cols, 0.0);
  for (std::size_t i = 0; i < pred.size(); ++i)
    c.counts[index_of(c.pred_ids, pred[i]) * cols + index_of(c.gt_ids, gt[i])] += 1.0;
  return c;
}

double clustering_accuracy(std::span<const Label> pred, std::span<const Label> gt) {
  const Confusion c = confusion_matrix(pred, gt);
  const std::size_t rows = c.pred_ids.size();
  const std::size_t cols = std::max(c.gt_ids.size(), rows);
  std::vector<double> w(rows * cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < c.gt_ids.size(); ++j) w[r * cols + j] = c.counts[r * c.gt_ids.size() + j];
  const DenseAssignment a = max_weight_assignment(w, rows, cols);
  return a.objective / static_cast<double>(pred.size());
}

double label_set_iou(std::span<const Label> a, std::span<const Label> b) {
  const auto x = distinct(a), y = distinct(b);
  if (x.empty() && y.empty()) return 1.0;
  std::vector<Label> inter;
  std::set_intersection(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(inter));
  const std::size_t uni = x.size() + y.size() - inter.size();
  return static_cast<double>(inter.size()) / static_cast<double>(uni);
}

SimilarityMatrix::SimilarityMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  require(values_.size() == rows_ * cols_, "SimilarityMatrix: shape mismatch");
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const double v = values_[i];
    if (!(v >= -1.0 - 1e-5 && v <= 1.0 + 1e-5)) {
      fail(ErrorKind::kFormat, "SimilarityMatrix: entry (" + std::to_string(i / cols_) + ", " +
                                   std::to_string(i % cols_) + ") = " + std::to_string(v) +
                                   " lies outside [-1, 1]");
    }
  }
}

double SimilarityMatrix::at(Label pred, Label gt) const {
  if (pred >= rows_ || gt >= cols_) {
    fail(ErrorKind::kInvalidArgument, "similarity lookup (" + std::to_string(pred) + ", " +
                                          std::to_string(gt) + ") outside a " + std::to_string(rows_) +
                                          " x " + std::to_string(cols_) + " matrix");
  }
  return values_[static_cast<std::size_t>(pred) * cols_ + gt];
}

SimilarityMatrix SimilarityMatrix::from_banks(const EmbeddingMatrix& pred_bank,
                                              const EmbeddingMatrix& gt_bank) {
  return SimilarityMatrix(pred_bank.rows(), gt_bank.rows(), similarity_matrix(pred_bank, gt_bank));
}

SimilarityMatrix load_similarity(const std::filesystem::path& path, const NameResolver& resolve_name) {
  const EmbeddingMatrix m = load_matrix(path);
  std::filesystem::path sidecar = path;
  sidecar += ".ids.json";
  if (!std::filesystem::exists(sidecar)) {
    return SimilarityMatrix(m.rows(), m.dim(), m.values());
  }
  std::ifstream in(sidecar);
  if (!in) fail(ErrorKind::kIo, "cannot open " + sidecar.string());
  std::vector<Label> rows, cols;
  try {
    const auto j = nlohmann::json::parse(in);
    auto ids = [&](const nlohmann::json& arr) {
      std::vector<Label> out;
      for (const auto& e : arr) {
        if (e.is_string()) {
          if (!resolve_name) fail(ErrorKind::kFormat, sidecar.string() + ": named ids need a resolver");
          out.push_back(resolve_name(e.get<std::string>()));
        } else {
          out.push_back(e.get<Label>());
        }
      }
      return out;
    };
    rows = ids(j.at("rows"));
    cols = ids(j.at("cols"));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, sidecar.string() + ": " + e.what());
  }
  if (rows.size() != m.rows() || cols.size() != m.dim()) {
    fail(ErrorKind::kFormat, sidecar.string() + ": ids do not match the " + std::to_string(m.rows()) +
                                 " x " + std::to_string(m.dim()) + " matrix");
  }
  const std::size_t nr = rows.empty() ? 0 : *std::max_element(rows.begin(), rows.end()) + std::size_t{1};
  const std::size_t nc = cols.empty() ? 0 : *std::max_element(cols.begin(), cols.end()) + std::size_t{1};
  // Ids absent from the sidecar keep similarity 0.
  std::vector<double> v(nr * nc, 0.0);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) v[rows[r] * nc + cols[c]] = m.row(r)[c];
  return SimilarityMatrix(nr, nc, std::move(v));
}

double soft_accuracy(std::span<const Label> pred, std::span<const Label> gt, const SimilarityMatrix& sim) {
  check_lengths(pred, gt, "soft_accuracy");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += sim.at(pred[i], gt[i]);
  return s / static_cast<double>(pred.size());
}

}  // namespace s3a
