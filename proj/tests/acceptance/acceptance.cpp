// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "s3a/alignment.hpp"
#include "s3a/cli.hpp"
#include "s3a/clustering.hpp"
#include "s3a/cvpr.hpp"
#include "s3a/kernels.hpp"
#include "s3a/metrics.hpp"
#include "s3a/parallel.hpp"
#include "s3a/random.hpp"
#include "s3a/selftrain.hpp"
#include "s3a/synth.hpp"

namespace {

using namespace s3a;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(const char* name, const std::function<Verdict()>& check) {
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  if (!v.pass) ++failures;
  std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name, v.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double gauss(Rng& rng) {
  double u1;
  do {
    u1 = uniform01(rng);
  } while (u1 <= 0.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * uniform01(rng));
}

EmbeddingMatrix random_unit(std::size_t n, std::size_t d, Rng& rng) {
  std::vector<double> v(n * d);
  for (double& x : v) x = gauss(rng);
  EmbeddingMatrix m(n, d, std::move(v));
  l2_normalize_in_place(m);
  return m;
}

ClusterPartition random_partition(std::size_t n, std::size_t k, Rng& rng) {
  std::vector<ClusterId> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = static_cast<ClusterId>(i < k ? i : uniform_index(rng, k));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(a[i], a[uniform_index(rng, i + 1)]);
  return ClusterPartition::from_assignment(std::move(a), k);
}

double accuracy(std::span<const WordId> a, std::span<const WordId> b) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < a.size(); ++i) hit += a[i] == b[i];
  return static_cast<double>(hit) / static_cast<double>(a.size());
}

// ---- assignment -------------------------------------------------------------

Verdict hungarian_oracle() {
  Rng rng(2024);
  const auto t0 = Clock::now();
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t k = 1 + uniform_index(rng, 8);
    const std::size_t c = k + uniform_index(rng, 9 - k);
    const bool integral = trial % 2 == 1;
    VoteMatrix m(k, c);
    std::vector<double> dense(k * c);
    for (std::size_t r = 0; r < k; ++r) {
      std::vector<VoteMatrix::Entry> row;
      for (std::size_t j = 0; j < c; ++j) {
        const double w = integral ? static_cast<double>(1 + uniform_index(rng, 5)) : 1e-3 + uniform01(rng);
        dense[r * c + j] = w;
        row.emplace_back(static_cast<WordId>(j), w);
      }
      m.set_row(static_cast<ClusterId>(r), std::move(row));
    }
    std::vector<std::size_t> perm(c);
    std::iota(perm.begin(), perm.end(), 0);
    double best = -1.0;
    do {
      double s = 0.0;
      for (std::size_t r = 0; r < k; ++r) s += dense[r * c + perm[r]];
      best = std::max(best, s);
    } while (std::next_permutation(perm.begin(), perm.end()));

    const AssignmentMap map = hungarian(m);
    double got = 0.0;
    for (std::size_t r = 0; r < k; ++r) got += dense[r * c + map.word_of_cluster[r]];
    const DenseAssignment da = max_weight_assignment(dense, k, c);
    double got_dense = 0.0;
    for (std::size_t r = 0; r < k; ++r) got_dense += dense[r * c + da.col_of_row[r]];
    if (!map.injective() || got != best || got_dense != best) ++mismatches;
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 5.0,
          fmt("500 matrices, %zu objective mismatches, %.2f s (limit 5 s)", mismatches, secs)};
}

Verdict vote_row_sums() {
  Rng rng(77);
  std::size_t bad_sum = 0, bad_scale = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 1 + uniform_index(rng, 12);
    const std::size_t vocab = k + uniform_index(rng, 60);
    const std::size_t n = k + uniform_index(rng, 400);
    const auto p = random_partition(n, k, rng);
    std::vector<WordId> nn(n);
    for (std::size_t i = 0; i < n; ++i)
      nn[i] = static_cast<WordId>(i < k ? i : uniform_index(rng, vocab));
    const std::size_t m = 1 + uniform_index(rng, std::min<std::size_t>(5, vocab));
    const auto v = vote(p, nn, m, vocab);
    for (std::size_t c = 0; c < k; ++c) {
      const double err = std::abs(v.matrix.row_sum(static_cast<ClusterId>(c)) - 1.0 / static_cast<double>(k));
      worst = std::max(worst, err);
      if (err > 1e-12) ++bad_sum;
    }
    const double factor = std::exp(uniform01(rng) * 14.0 - 7.0);
    const auto a = hungarian(v.matrix);
    const auto b = hungarian(v.matrix.scaled(factor));
    if (a.word_of_cluster != b.word_of_cluster) ++bad_scale;
  }
  return {bad_sum == 0 && bad_scale == 0,
          fmt("100 cases, %zu rows off 1/K (max error %.2e), %zu maps changed by rescaling", bad_sum, worst,
              bad_scale)};
}

AugmentedTextBank random_bank(ClusterId c, std::size_t rows, std::size_t d, std::size_t vocab, Rng& rng) {
  AugmentedTextBank b;
  b.cluster_id = c;
  for (std::size_t i = 0; i < rows; ++i)
    b.entries.push_back({static_cast<WordId>(uniform_index(rng, vocab)), i, "attr" + std::to_string(i)});
  b.embeddings = random_unit(rows, d, rng);
  return b;
}

Verdict realign_oracle() {
  Rng rng(303);
  std::size_t bad_cells = 0, bad_sums = 0, bad_maps = 0, checked_sums = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t k = 1 + uniform_index(rng, 6);
    const std::size_t n = k + uniform_index(rng, 301 - k);
    const std::size_t d = 2 + uniform_index(rng, 15);
    const std::size_t vocab = 3 * k + uniform_index(rng, 30);
    const auto x = random_unit(n, d, rng);
    const auto p = random_partition(n, k, rng);
    // Low bank sizes exercise the h < 3 path.
    std::vector<AugmentedTextBank> banks;
    for (std::size_t c = 0; c < k; ++c)
      banks.push_back(random_bank(static_cast<ClusterId>(c), 1 + uniform_index(rng, 20), d, vocab, rng));
    for (std::size_t c = 0; c < k; ++c)
      banks[c].entries[0].word_id = static_cast<WordId>(vocab - 1 - c);  // keeps the support >= K

    const auto r = realign(p, x, banks);
    VoteMatrix want(k, r.matrix.vocab_size());
    for (std::size_t c = 0; c < k; ++c) {
      const std::size_t h = std::min<std::size_t>(3, banks[c].entries.size());
      std::map<WordId, double> counts;
      for (std::size_t i = 0; i < n; ++i) {
        if (p.assignment[i] != c) continue;
        std::vector<std::pair<double, std::size_t>> s;
        for (std::size_t j = 0; j < banks[c].entries.size(); ++j)
          s.emplace_back(-kernels::dot(x.row(i), banks[c].embeddings.row(j)), j);
        std::sort(s.begin(), s.end());
        for (std::size_t t = 0; t < h; ++t) counts[banks[c].entries[s[t].second].word_id] += 1.0;
      }
      std::vector<VoteMatrix::Entry> row;
      for (auto& [w, cnt] : counts)
        row.emplace_back(w, cnt / (static_cast<double>(h) * static_cast<double>(k) * static_cast<double>(p.sizes[c])));
      if (row != r.matrix.row(static_cast<ClusterId>(c))) ++bad_cells;
      want.set_row(static_cast<ClusterId>(c), std::move(row));
      if (h == 3) {
        ++checked_sums;
        if (std::abs(r.matrix.row_sum(static_cast<ClusterId>(c)) - 1.0 / static_cast<double>(k)) > 1e-12)
          ++bad_sums;
      }
    }
    if (hungarian(want).word_of_cluster != r.map.word_of_cluster) ++bad_maps;
    const auto labels = broadcast_labels(p, r.map);
    if (labels.labels != r.labels.labels) ++bad_maps;
  }
  return {bad_cells == 0 && bad_sums == 0 && bad_maps == 0,
          fmt("50 cases, %zu rows differ from top-3 oracle, %zu maps differ, %zu/%zu row sums off 1/K", bad_cells,
              bad_maps, bad_sums, checked_sums)};
}

Verdict clustering_accuracy_oracle() {
  Rng rng(99);
  std::size_t mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + uniform_index(rng, 60);
    const std::size_t kp = 1 + uniform_index(rng, 6), kg = 1 + uniform_index(rng, 6);
    std::vector<Label> pred(n), gt(n);
    for (auto& v : pred) v = static_cast<Label>(7 * uniform_index(rng, kp) + 1);
    for (auto& v : gt) v = static_cast<Label>(uniform_index(rng, kg) + 40);
    std::vector<Label> ps(pred), gs(gt);
    std::sort(ps.begin(), ps.end());
    ps.erase(std::unique(ps.begin(), ps.end()), ps.end());
    std::sort(gs.begin(), gs.end());
    gs.erase(std::unique(gs.begin(), gs.end()), gs.end());
    std::vector<std::size_t> targets(std::max(ps.size(), gs.size()));
    std::iota(targets.begin(), targets.end(), 0);
    std::size_t best = 0;
    do {
      std::size_t hit = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t t = targets[std::lower_bound(ps.begin(), ps.end(), pred[i]) - ps.begin()];
        hit += t < gs.size() && gs[t] == gt[i];
      }
      best = std::max(best, hit);
    } while (std::next_permutation(targets.begin(), targets.end()));
    if (clustering_accuracy(pred, gt) != static_cast<double>(best) / static_cast<double>(n)) ++mismatches;
  }
  return {mismatches == 0, fmt("200 label pairs, %zu mismatches against enumeration", mismatches)};
}

// ---- training gradients -----------------------------------------------------

AdapterParams perturbed(std::size_t d, double scale, Rng& rng) {
  AdapterParams a = AdapterParams::identity(d);
  for (double& w : a.weight) w += scale * gauss(rng);
  for (double& b : a.bias) b += scale * gauss(rng);
  return a;
}

double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, ref = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    ref += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max(std::sqrt(ref), 1e-300);
}

Verdict gradient_check() {
  Rng rng(5150);
  double worst = 0.0;
  for (int draw = 0; draw < 20; ++draw) {
    const std::size_t n = 2 + uniform_index(rng, 8), d = 2 + uniform_index(rng, 5), w = 2 + uniform_index(rng, 8);
    TrainConfig cfg;
    cfg.gamma = draw == 0 ? 0.0 : uniform01(rng) * 2.0;
    cfg.tau = draw == 1 ? 1.0 : (draw == 2 ? 0.0 : uniform01(rng) * 0.8);
    cfg.temperature = 0.1 + uniform01(rng) * 0.9;
    const auto zs = random_unit(n, d, rng);
    const auto zt = random_unit(n, d, rng);
    const auto bank = random_unit(w, d, rng);
    std::vector<WordId> labels(n);
    for (auto& l : labels) l = static_cast<WordId>(uniform_index(rng, w));
    const AdapterParams teacher = perturbed(d, 0.3, rng);
    const AdapterParams student = perturbed(d, 0.3, rng);
    AdapterGrads g;
    losses_and_grads(student, teacher, zs, zt, labels, bank, cfg, &g);
    auto loss_at = [&](const AdapterParams& s) {
      return losses_and_grads(s, teacher, zs, zt, labels, bank, cfg, nullptr).loss;
    };
    const double h = 1e-5;
    std::vector<double> fw(d * d), fb(d);
    for (std::size_t i = 0; i < d * d; ++i) {
      AdapterParams up = student, dn = student;
      up.weight[i] += h;
      dn.weight[i] -= h;
      fw[i] = (loss_at(up) - loss_at(dn)) / (2 * h);
    }
    for (std::size_t i = 0; i < d; ++i) {
      AdapterParams up = student, dn = student;
      up.bias[i] += h;
      dn.bias[i] -= h;
      fb[i] = (loss_at(up) - loss_at(dn)) / (2 * h);
    }
    worst = std::max({worst, rel_error(g.weight, fw), rel_error(g.bias, fb)});
  }
  return {worst < 1e-5, fmt("20 draws incl. gamma=0 and tau=1, max relative error %.2e (limit 1e-5)", worst)};
}

// ---- planted world ------------------------------------------------------------

CvprResult run_planted(const PlantedWorld& w, const EmbeddingMatrix& feats, TableEncoder& enc) {
  CvprConfig cfg;
  cfg.k = w.true_words.size();
  AttributeCatalog catalog = w.attributes;
  PromptResources pr;
  pr.encoder = &enc;
  pr.catalog = &catalog;
  return run_cvpr(feats, w.vocab, w.vocab_bank, cfg, pr);
}

Verdict planted_end_to_end() {
  set_num_threads(1);
  const auto g0 = Clock::now();
  const PlantedWorld w = make_planted_world(PlantedWorldOptions{});
  const double gen = seconds_since(g0);

  const auto t0 = Clock::now();
  TableEncoder enc(w.sentences, w.sentence_embeddings);
  const auto first = run_planted(w, w.images, enc);
  const double acc = accuracy(first.labels.labels, w.labels);
  TrainConfig tc;
  tc.epochs = 3;
  const auto tr = train(w.images, w.vocab_bank,
                        [&](const EmbeddingMatrix& feats, std::size_t) { return run_planted(w, feats, enc).labels; },
                        tc, w.labels);
  const double secs = seconds_since(t0);
  set_num_threads(0);

  std::vector<double> accs;
  for (const auto& s : tr.structural) accs.push_back(accuracy(s.labels, w.labels));
  bool monotone = true;
  for (std::size_t e = 1; e < accs.size(); ++e) monotone = monotone && accs[e] >= accs[e - 1];
  std::string trace;
  for (double a : accs) trace += fmt("%s%.4f", trace.empty() ? "" : " ", a);
  return {acc >= 0.99 && monotone && secs < 60.0,
          fmt("cvpr accuracy %.4f (>= 0.99), structural accuracy per epoch [%s], %.1f s single-threaded "
              "(limit 60 s; world generation %.1f s excluded)",
              acc, trace.c_str(), secs, gen)};
}

Verdict k_estimation() {
  std::size_t within = 0;
  std::string ks;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    PlantedWorldOptions o;
    o.seed = seed;
    const auto w = make_planted_world(o);
    KEstimateOptions ko;
    ko.lb0 = 5;
    ko.ub0 = 100;
    ko.seed = seed;
    const auto est = estimate_k(w.images, ko);
    within += est.k_hat >= 16 && est.k_hat <= 24;
    ks += fmt("%s%zu", ks.empty() ? "" : " ", est.k_hat);
  }
  return {within >= 8, fmt("%zu/10 seeds within 20%% of 20 (need 8), k_hat = [%s]", within, ks.c_str())};
}

// ---- determinism ----------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int cli_run(std::vector<std::string> args, std::string& err) {
  args.insert(args.begin(), "s3a");
  std::ostringstream out, e;
  const int code = cli::run(args, out, e);
  err = e.str();
  return code;
}

Verdict determinism() {
  const fs::path dir = fs::temp_directory_path() / ("s3a_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  std::string err;
  std::vector<std::string> problems;
  if (cli_run({"synth", "--out", (dir / "world").string(), "--n", "2000", "--seed", "11"}, err) != 0)
    return {false, "synth failed: " + err};
  const std::string cfg = (dir / "world" / "config.json").string();
  for (const char* run : {"a", "b"})
    if (cli_run({"train", "--config", cfg, "--out", (dir / run).string(), "--threads", "1", "--epochs", "3"}, err) != 0)
      return {false, std::string("train run ") + run + " failed: " + err};
  std::size_t files = 0;
  for (const char* f : {"history.jsonl", "structural_labels.tsv", "predictions.txt", "teacher.emb"}) {
    const std::string a = slurp(dir / "a" / f), b = slurp(dir / "b" / f);
    if (a.empty() || a != b) problems.push_back(f);
    ++files;
  }

  // Threaded kernels against one thread.
  Rng rng(8);
  const auto x = random_unit(3000, 48, rng);
  const auto bank = random_unit(700, 48, rng);
  const auto p = random_partition(3000, 40, rng);
  set_num_threads(1);
  const auto nn1 = nearest(x, bank, 3);
  std::vector<WordId> w1(x.rows());
  for (std::size_t i = 0; i < w1.size(); ++i) w1[i] = nn1[i][0].index;
  const auto v1 = vote(p, w1, 3, bank.rows());
  set_num_threads(8);
  const auto nn8 = nearest(x, bank, 3);
  const auto v8 = vote(p, w1, 3, bank.rows());
  set_num_threads(0);
  if (nn1 != nn8) problems.push_back("nearest");
  bool same_vote = v1.candidates.words == v8.candidates.words;
  for (std::size_t c = 0; c < 40; ++c) same_vote = same_vote && v1.matrix.row(c) == v8.matrix.row(c);
  if (!same_vote) problems.push_back("vote");
  fs::remove_all(dir);

  std::string what;
  for (const auto& s : problems) what += (what.empty() ? "" : ", ") + s;
  return {problems.empty(), problems.empty()
                                ? fmt("two single-threaded train runs identical over %zu artifacts; 8-thread nearest "
                                      "and vote equal 1-thread",
                                      files)
                                : "differences in " + what};
}

// ---- performance ------------------------------------------------------------------

Verdict performance() {
  PlantedWorldOptions o;
  o.n = 50000;
  o.dim = 512;
  o.classes = 100;
  o.vocab_size = 20000;
  o.seed = 1;
  const auto g0 = Clock::now();
  const PlantedWorld w = make_planted_world(o);
  std::vector<ClusterId> a(o.n);
  for (std::size_t i = 0; i < o.n; ++i) a[i] = static_cast<ClusterId>(w.class_of[i]);
  const auto p = ClusterPartition::from_assignment(std::move(a), o.classes);
  TableEncoder enc(w.sentences, w.sentence_embeddings);
  const double gen = seconds_since(g0);

  set_num_threads(1);
  const auto t0 = Clock::now();
  const auto hits = nearest_one(w.images, w.vocab_bank);
  std::vector<WordId> nn(o.n);
  for (std::size_t i = 0; i < o.n; ++i) nn[i] = hits[i].index;
  const double t_nn = seconds_since(t0);

  auto t1 = Clock::now();
  const auto v = vote(p, nn, 3, w.vocab.size());
  const auto map = hungarian(v.matrix);
  const double t_vote = seconds_since(t1);

  t1 = Clock::now();
  std::vector<WordId> all;
  for (const auto& ws : v.candidates.words) all.insert(all.end(), ws.begin(), ws.end());
  const auto sents = compose_prompt_sentences(w.attributes, all, w.vocab, std::vector<std::string>{std::string(kDefaultSentenceTemplate)});
  std::vector<std::string> texts;
  for (const auto& s : sents) texts.push_back(s.text);
  const EmbeddingMatrix emb = enc.encode(texts);
  std::vector<AugmentedTextBank> banks;
  for (std::size_t c = 0; c < o.classes; ++c) {
    std::vector<WordId> cw = v.candidates.words[c];
    std::sort(cw.begin(), cw.end());
    std::vector<PromptSentence> mine;
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < sents.size(); ++i)
      if (std::binary_search(cw.begin(), cw.end(), sents[i].word_id)) {
        mine.push_back(sents[i]);
        rows.push_back(i);
      }
    banks.push_back(assemble_bank(static_cast<ClusterId>(c), mine, emb.select_rows(rows)));
  }
  const auto r = realign(p, w.images, banks);
  const double t_realign = seconds_since(t1);
  const double total = seconds_since(t0);
  set_num_threads(0);

  const double acc = accuracy(r.labels.labels, w.labels);
  return {total < 300.0 && map.injective(),
          fmt("n=50000 d=512 |W|=20000 K=100 single-threaded: nearest %.1f s, vote+hungarian %.2f s, "
              "banks+realign %.2f s, total %.1f s (limit 300 s; setup %.1f s excluded; realigned accuracy %.4f)",
              t_nn, t_vote, t_realign, total, gen, acc)};
}

}  // namespace

int main() {
  std::printf("kernels: %s\n", kernels::active().name);
  report("hungarian-oracle", hungarian_oracle);
  report("vote-row-sums", vote_row_sums);
  report("realign-oracle", realign_oracle);
  report("clustering-accuracy-oracle", clustering_accuracy_oracle);
  report("gradient-check", gradient_check);
  report("planted-world", planted_end_to_end);
  report("k-estimation", k_estimation);
  report("determinism", determinism);
  report("performance", performance);
  return failures == 0 ? 0 : 1;
}
