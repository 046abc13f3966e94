#pragma once
// Teacher-student self-training of an affine adapter on frozen image
// embeddings: structural (cluster-aligned) and confidence-masked instance
// cross-entropy losses, AdamW with cosine decay, and an EMA teacher.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "s3a/alignment.hpp"
#include "s3a/embedding.hpp"

namespace s3a {

struct AdapterParams {
  std::size_t dim = 0;
  std::vector<double> weight;  // dim x dim, row-major
  std::vector<double> bias;    // dim

  static AdapterParams identity(std::size_t dim);
  bool is_identity() const;
};

struct TrainConfig {
  double tau = 0.5;
  double gamma = 0.25;
  double temperature = 0.01;
  double ema_init = 0.999;
  double ema_final = 0.9998;
  std::size_t ema_warmup_iters = 2000;
  std::size_t epochs = 30;
  std::size_t batch_size = 128;
  double learning_rate = 1e-5;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double noise_sigma = 0.0;  // Gaussian noise on student inputs
  std::uint64_t seed = 0;

  // Throws ErrorKind::kInvalidArgument on any out-of-range field.
  void validate() const;
};

// normalize(W z + b) for every row. Throws if a row maps to zero.
EmbeddingMatrix apply_adapter(const AdapterParams& a, const EmbeddingMatrix& z);

// Softmax of (adapted z . h_j) / temperature; row-major rows x |bank|.
std::vector<double> forward(const AdapterParams& a, const EmbeddingMatrix& z,
                            const EmbeddingMatrix& vocab_bank, double temperature);

struct BatchOutput {
  std::vector<double> student_probs;  // B x |W|
  std::vector<double> teacher_probs;  // B x |W|
  std::vector<WordId> teacher_labels;
  std::vector<bool> mask;             // teacher max prob > tau
  double l_str = 0.0;
  double l_in = 0.0;
  double loss = 0.0;
};

struct AdapterGrads {
  std::vector<double> weight;
  std::vector<double> bias;
};

// Losses of one batch and, if grads is non-null, their gradient with respect
// to the student. L_str is the mean cross-entropy against `labels`; L_in sums
// the masked cross-entropy against the teacher's argmax and divides by the
// batch size. z_student may differ from z_teacher (input noise).
BatchOutput losses_and_grads(const AdapterParams& student, const AdapterParams& teacher,
                             const EmbeddingMatrix& z_student,
                             const EmbeddingMatrix& z_teacher,
                             std::span<const WordId> labels,
                             const EmbeddingMatrix& vocab_bank, const TrainConfig& config,
                             AdapterGrads* grads);

// teacher <- eta teacher + (1 - eta) student.
void ema_update(AdapterParams& teacher, const AdapterParams& student, double eta);

double ema_schedule(std::size_t iter, const TrainConfig& config);

// Decoupled weight decay applies to the weight matrix only.
class AdamW {
 public:
  AdamW(std::size_t dim, const TrainConfig& config, std::size_t total_steps);

  double learning_rate(std::size_t step) const;  // cosine, no warmup
  void step(AdapterParams& params, const AdapterGrads& grads);
  std::size_t steps_taken() const noexcept { return t_; }

 private:
  TrainConfig config_;
  std::size_t total_;
  std::size_t t_ = 0;
  std::vector<double> m_w_, v_w_, m_b_, v_b_;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double l_str = 0.0;
  double l_in = 0.0;
  double loss = 0.0;
  double eta = 0.0;
  double mask_rate = 0.0;
  std::size_t iterations = 0;
  std::optional<double> cvpr_accuracy;  // structural labels vs. ground truth
};

// Produces structural labels from the teacher's current features.
using LabelSource =
    std::function<StructuralLabels(const EmbeddingMatrix& teacher_features, std::size_t epoch)>;

struct TrainResult {
  AdapterParams teacher;
  AdapterParams student;
  std::vector<EpochRecord> history;
  // One per epoch, then one more from the final teacher.
  std::vector<StructuralLabels> structural;
  std::vector<WordId> predictions;           // teacher nearest word, full vocabulary
};

// Per-epoch callback, e.g. for progress output or checkpointing.
using EpochObserver = std::function<void(const EpochRecord&)>;

TrainResult train(const EmbeddingMatrix& x, const EmbeddingMatrix& vocab_bank,
                  const LabelSource& labels, const TrainConfig& config,
                  std::span<const WordId> ground_truth = {},
                  const EpochObserver& observer = nullptr);

// (dim + 1) x dim EMB1 file, bias in the last row.
void save_adapter(const AdapterParams& a, const std::filesystem::path& path);
AdapterParams load_adapter(const std::filesystem::path& path);

void save_history(std::span<const EpochRecord> history, const std::filesystem::path& path);

}  // namespace s3a
