#include "s3a/selftrain.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <numeric>

#include "json.hpp"
#include "s3a/error.hpp"
#include "s3a/kernels.hpp"
#include "s3a/parallel.hpp"
#include "s3a/random.hpp"

namespace s3a {

AdapterParams AdapterParams::identity(std::size_t dim) {
  require(dim > 0, "AdapterParams: dim must be positive");
  AdapterParams a;
  a.dim = dim;
  a.weight.assign(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) a.weight[i * dim + i] = 1.0;
  a.bias.assign(dim, 0.0);
  return a;
}

bool AdapterParams::is_identity() const {
  for (std::size_t i = 0; i < dim; ++i) {
    if (bias[i] != 0.0) return false;
    for (std::size_t j = 0; j < dim; ++j) {
      if (weight[i * dim + j] != (i == j ? 1.0 : 0.0)) return false;
    }
  }
  return true;
}

void TrainConfig::validate() const {
  require(tau >= 0.0 && tau <= 1.0, "train: tau must lie in [0, 1]");
  require(gamma >= 0.0 && std::isfinite(gamma), "train: gamma must be >= 0");
  require(temperature > 0.0 && std::isfinite(temperature), "train: temperature must be > 0");
  require(ema_init >= 0.0 && ema_init <= 1.0, "train: ema_init must lie in [0, 1]");
  require(ema_final >= 0.0 && ema_final <= 1.0, "train: ema_final must lie in [0, 1]");
  require(batch_size >= 1, "train: batch_size must be >= 1");
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), "train: learning_rate must be >= 0");
  require(weight_decay >= 0.0 && std::isfinite(weight_decay), "train: weight_decay must be >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0,
          "train: Adam betas must lie in [0, 1)");
  require(adam_eps > 0.0, "train: adam_eps must be > 0");
  require(noise_sigma >= 0.0 && std::isfinite(noise_sigma), "train: noise_sigma must be >= 0");
}

namespace {

void check_adapter(const AdapterParams& a, std::size_t d) {
  require(a.dim == d, "adapter dimension " + std::to_string(a.dim) +
                          " does not match embeddings of dimension " + std::to_string(d));
  require(a.weight.size() == d * d && a.bias.size() == d, "adapter has inconsistent shape");
}

// u = W z + b per row, its norm, and z' = u / |u|.
struct Adapted {
  std::vector<double> u;
  std::vector<double> norm;
  EmbeddingMatrix z;
};

Adapted adapt(const AdapterParams& a, const EmbeddingMatrix& z) {
  const std::size_t n = z.rows(), d = z.dim();
  check_adapter(a, d);
  const auto& kt = kernels::active();
  Adapted out;
  out.u.assign(n * d, 0.0);
  out.norm.assign(n, 0.0);
  std::vector<double> zn(n * d);
  parallel_for(n, 16, [&](std::size_t b, std::size_t e) {
    kt.gram(z.data() + b * d, e - b, a.weight.data(), d, d, out.u.data() + b * d, d);
    for (std::size_t i = b; i < e; ++i) {
      double* u = out.u.data() + i * d;
      for (std::size_t r = 0; r < d; ++r) u[r] += a.bias[r];
      const double nrm = std::sqrt(kt.dot(u, u, d));
      if (!(nrm > 0.0) || !std::isfinite(nrm)) {
        fail(ErrorKind::kNumeric, "adapter maps row " + std::to_string(i) + " to a zero or non-finite vector");
      }
      out.norm[i] = nrm;
      for (std::size_t r = 0; r < d; ++r) zn[i * d + r] = u[r] / nrm;
    }
  });
  out.z = EmbeddingMatrix(n, d, std::move(zn), true);
  return out;
}

// Row-wise logits / temperature, replaced in place by softmax; returns the
// log-sum-exp of each row's scaled logits through `lse`.
void softmax_rows(std::vector<double>& logits, std::size_t rows, std::size_t cols, double temperature,
                  std::vector<double>* scaled_logits, std::vector<double>* lse) {
  if (scaled_logits) scaled_logits->assign(rows * cols, 0.0);
  if (lse) lse->assign(rows, 0.0);
  parallel_for(rows, 16, [&](std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      double* l = logits.data() + i * cols;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < cols; ++j) {
        l[j] /= temperature;
        mx = std::max(mx, l[j]);
      }
      if (scaled_logits) std::copy(l, l + cols, scaled_logits->data() + i * cols);
      double s = 0.0;
      for (std::size_t j = 0; j < cols; ++j) {
        l[j] = std::exp(l[j] - mx);
        s += l[j];
      }
      for (std::size_t j = 0; j < cols; ++j) l[j] /= s;
      if (lse) (*lse)[i] = mx + std::log(s);
    }
  });
}

std::vector<double> logits_of(const EmbeddingMatrix& z, const EmbeddingMatrix& bank) {
  require(z.dim() == bank.dim(), "dimension mismatch between embeddings and vocabulary bank");
  require(bank.rows() > 0, "empty vocabulary bank");
  return similarity_matrix(z, bank);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

EmbeddingMatrix apply_adapter(const AdapterParams& a, const EmbeddingMatrix& z) {
  check_adapter(a, z.dim());
  if (a.is_identity() && z.normalized()) return z;
  return adapt(a, z).z;
}

std::vector<double> forward(const AdapterParams& a, const EmbeddingMatrix& z,
                            const EmbeddingMatrix& vocab_bank, double temperature) {
  require(temperature > 0.0, "forward: temperature must be > 0");
  auto p = logits_of(apply_adapter(a, z), vocab_bank);
  softmax_rows(p, z.rows(), vocab_bank.rows(), temperature, nullptr, nullptr);
  return p;
}

BatchOutput losses_and_grads(const AdapterParams& student, const AdapterParams& teacher,
                             const EmbeddingMatrix& z_student, const EmbeddingMatrix& z_teacher,
                             std::span<const WordId> labels, const EmbeddingMatrix& bank,
                             const TrainConfig& cfg, AdapterGrads* grads) {
  const std::size_t n = z_student.rows(), d = z_student.dim(), w = bank.rows();
  require(n > 0, "losses_and_grads: empty batch");
  require(z_teacher.rows() == n && z_teacher.dim() == d, "losses_and_grads: student/teacher batch mismatch");
  require(labels.size() == n, "losses_and_grads: " + std::to_string(labels.size()) +
                                  " structural labels for a batch of " + std::to_string(n));
  for (WordId y : labels) require(y < w, "losses_and_grads: structural label out of range");

  BatchOutput out;
  const Adapted ts = adapt(teacher, z_teacher);
  out.teacher_probs = logits_of(ts.z, bank);
  softmax_rows(out.teacher_probs, n, w, cfg.temperature, nullptr, nullptr);

  const Adapted ss = adapt(student, z_student);
  out.student_probs = logits_of(ss.z, bank);
  std::vector<double> logit, lse;
  softmax_rows(out.student_probs, n, w, cfg.temperature, &logit, &lse);

  out.teacher_labels.resize(n);
  out.mask.resize(n);
  std::vector<double> ce_str(n), ce_in(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double* pt = out.teacher_probs.data() + i * w;
    std::size_t best = 0;
    for (std::size_t j = 1; j < w; ++j)
      if (pt[j] > pt[best]) best = j;
    out.teacher_labels[i] = static_cast<WordId>(best);
    out.mask[i] = pt[best] > cfg.tau;
    ce_str[i] = lse[i] - logit[i * w + labels[i]];
    ce_in[i] = out.mask[i] ? lse[i] - logit[i * w + best] : 0.0;
  }
  double s_str = 0.0, s_in = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s_str += ce_str[i];
    s_in += ce_in[i];
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  out.l_str = s_str * inv_n;
  out.l_in = s_in * inv_n;
  out.loss = out.l_str + cfg.gamma * out.l_in;
  if (!std::isfinite(out.loss)) {
    fail(ErrorKind::kNumeric, "non-finite loss: L_str=" + std::to_string(out.l_str) +
                                  " L_in=" + std::to_string(out.l_in));
  }
  if (grads == nullptr) return out;

  // Per-instance gradient wrt u, then an ordered reduction into W and b.
  const auto& kt = kernels::active();
  std::vector<double> gu(n * d, 0.0);
  parallel_for(n, 8, [&](std::size_t b, std::size_t e) {
    std::vector<double> gz(d);
    for (std::size_t i = b; i < e; ++i) {
      const double* ps = out.student_probs.data() + i * w;
      const double in_w = out.mask[i] ? cfg.gamma : 0.0;
      std::fill(gz.begin(), gz.end(), 0.0);
      for (std::size_t j = 0; j < w; ++j) {
        double g = (1.0 + in_w) * ps[j];
        if (j == labels[i]) g -= 1.0;
        if (j == out.teacher_labels[i]) g -= in_w;
        g *= inv_n / cfg.temperature;
        if (g != 0.0) kt.axpy(g, bank.row(j).data(), gz.data(), d);
      }
      const double* zp = ss.z.row(i).data();
      const double proj = kt.dot(gz.data(), zp, d);
      double* g_u = gu.data() + i * d;
      for (std::size_t r = 0; r < d; ++r) g_u[r] = (gz[r] - proj * zp[r]) / ss.norm[i];
    }
  });
  grads->weight.assign(d * d, 0.0);
  grads->bias.assign(d, 0.0);
  parallel_for(d, 4, [&](std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r) {
      double* gw = grads->weight.data() + r * d;
      double gb = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double g = gu[i * d + r];
        gb += g;
        if (g != 0.0) kt.axpy(g, z_student.row(i).data(), gw, d);
      }
      grads->bias[r] = gb;
    }
  });
  if (!all_finite(grads->weight) || !all_finite(grads->bias)) {
    fail(ErrorKind::kNumeric, "non-finite gradient at loss " + std::to_string(out.loss));
  }
  return out;
}

void ema_update(AdapterParams& teacher, const AdapterParams& student, double eta) {
  require(teacher.dim == student.dim && teacher.weight.size() == student.weight.size() &&
              teacher.bias.size() == student.bias.size(),
          "ema_update: teacher and student shapes differ");
  require(eta >= 0.0 && eta <= 1.0, "ema_update: eta must lie in [0, 1]");
  const double s = 1.0 - eta;
  for (std::size_t i = 0; i < teacher.weight.size(); ++i)
    teacher.weight[i] = eta * teacher.weight[i] + s * student.weight[i];
  for (std::size_t i = 0; i < teacher.bias.size(); ++i)
    teacher.bias[i] = eta * teacher.bias[i] + s * student.bias[i];
}

double ema_schedule(std::size_t iter, const TrainConfig& c) {
  if (c.ema_warmup_iters == 0 || iter >= c.ema_warmup_iters) return c.ema_final;
  const double f = static_cast<double>(iter) / static_cast<double>(c.ema_warmup_iters);
  return c.ema_init + (c.ema_final - c.ema_init) * f;
}

AdamW::AdamW(std::size_t dim, const TrainConfig& config, std::size_t total_steps)
    : config_(config),
      total_(total_steps),
      m_w_(dim * dim, 0.0),
      v_w_(dim * dim, 0.0),
      m_b_(dim, 0.0),
      v_b_(dim, 0.0) {}

double AdamW::learning_rate(std::size_t step) const {
  if (total_ == 0) return config_.learning_rate;
  const double f = static_cast<double>(std::min(step, total_)) / static_cast<double>(total_);
  return config_.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * f));
}

void AdamW::step(AdapterParams& p, const AdapterGrads& g) {
  require(g.weight.size() == m_w_.size() && g.bias.size() == m_b_.size() &&
              p.weight.size() == m_w_.size(),
          "AdamW: parameter/gradient shape mismatch");
  const double lr = learning_rate(t_);
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  auto update = [&](std::vector<double>& x, const std::vector<double>& gr, std::vector<double>& m,
                    std::vector<double>& v, double decay) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] *= 1.0 - lr * decay;
      m[i] = b1 * m[i] + (1.0 - b1) * gr[i];
      v[i] = b2 * v[i] + (1.0 - b2) * gr[i] * gr[i];
      x[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.adam_eps);
    }
  };
  update(p.weight, g.weight, m_w_, v_w_, config_.weight_decay);
  update(p.bias, g.bias, m_b_, v_b_, 0.0);
}

namespace {

double gaussian(Rng& rng) {
  double u1;
  do {
    u1 = uniform01(rng);
  } while (u1 <= 0.0);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double label_accuracy(std::span<const WordId> a, std::span<const WordId> b) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < a.size(); ++i) hit += a[i] == b[i];
  return static_cast<double>(hit) / static_cast<double>(a.size());
}

}  // namespace

TrainResult train(const EmbeddingMatrix& x, const EmbeddingMatrix& bank, const LabelSource& labels,
                  const TrainConfig& cfg, std::span<const WordId> gt, const EpochObserver& observer) {
  cfg.validate();
  const std::size_t n = x.rows(), d = x.dim();
  require(n > 0, "train: no instances");
  require(bank.dim() == d, "train: image and vocabulary embeddings differ in dimension");
  require(gt.empty() || gt.size() == n, "train: ground truth length does not match instances");
  require(static_cast<bool>(labels), "train: no label source");

  TrainResult res;
  res.student = AdapterParams::identity(d);
  res.teacher = res.student;
  const std::size_t per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  AdamW opt(d, cfg, cfg.epochs * per_epoch);
  Rng rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t iter = 0;

  auto structural = [&](std::size_t epoch) {
    StructuralLabels sl = labels(apply_adapter(res.teacher, x), epoch);
    require(sl.labels.size() == n, "train: label source returned " + std::to_string(sl.labels.size()) +
                                       " labels for " + std::to_string(n) + " instances");
    sl.epoch = epoch;
    return sl;
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    res.structural.push_back(structural(epoch));
    const auto& y = res.structural.back().labels;

    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    EpochRecord rec;
    rec.epoch = epoch;
    if (!gt.empty()) rec.cvpr_accuracy = label_accuracy(y, gt);
    double s_str = 0.0, s_in = 0.0, s_loss = 0.0, masked = 0.0;
    AdapterGrads g;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      EmbeddingMatrix zt = x.select_rows(idx);
      EmbeddingMatrix zs = zt;
      if (cfg.noise_sigma > 0.0) {
        for (std::size_t i = 0; i < zs.rows(); ++i) {
          auto r = zs.row(i);
          for (double& v : r) v += cfg.noise_sigma * gaussian(rng);
        }
        l2_normalize_in_place(zs);
      }
      std::vector<WordId> yb(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) yb[i] = y[idx[i]];

      const BatchOutput out = losses_and_grads(res.student, res.teacher, zs, zt, yb, bank, cfg, &g);
      opt.step(res.student, g);
      rec.eta = ema_schedule(iter, cfg);
      ema_update(res.teacher, res.student, rec.eta);
      ++iter;

      const double bsz = static_cast<double>(idx.size());
      s_str += out.l_str * bsz;
      s_in += out.l_in * bsz;
      s_loss += out.loss * bsz;
      masked += static_cast<double>(std::count(out.mask.begin(), out.mask.end(), true));
      ++rec.iterations;
    }
    const double dn = static_cast<double>(n);
    rec.l_str = s_str / dn;
    rec.l_in = s_in / dn;
    rec.loss = s_loss / dn;
    rec.mask_rate = masked / dn;
    res.history.push_back(rec);
    if (observer) observer(rec);
  }
  res.structural.push_back(structural(cfg.epochs));

  const EmbeddingMatrix feats = apply_adapter(res.teacher, x);
  const auto nn = nearest_one(feats, bank);
  res.predictions.resize(n);
  for (std::size_t i = 0; i < n; ++i) res.predictions[i] = nn[i].index;
  return res;
}

void save_adapter(const AdapterParams& a, const std::filesystem::path& path) {
  std::vector<double> v(a.weight);
  v.insert(v.end(), a.bias.begin(), a.bias.end());
  save_matrix(EmbeddingMatrix(a.dim + 1, a.dim, std::move(v), false), path);
}

AdapterParams load_adapter(const std::filesystem::path& path) {
  const EmbeddingMatrix m = load_matrix(path);
  if (m.rows() != m.dim() + 1) {
    fail(ErrorKind::kFormat, path.string() + ": adapter must have dim + 1 rows, found " +
                                 std::to_string(m.rows()) + " x " + std::to_string(m.dim()));
  }
  AdapterParams a;
  a.dim = m.dim();
  a.weight.assign(m.data(), m.data() + a.dim * a.dim);
  a.bias.assign(m.data() + a.dim * a.dim, m.data() + (a.dim + 1) * a.dim);
  return a;
}

void save_history(std::span<const EpochRecord> history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& r : history) {
    nlohmann::json j = {{"epoch", r.epoch},         {"L_str", r.l_str},
                        {"L_in", r.l_in},           {"L", r.loss},
                        {"eta", r.eta},             {"mask_rate", r.mask_rate},
                        {"iterations", r.iterations}};
    j["cvpr_accuracy"] = r.cvpr_accuracy ? nlohmann::json(*r.cvpr_accuracy) : nlohmann::json(nullptr);
    out << j.dump() << '\n';
  }
}

}  // namespace s3a
