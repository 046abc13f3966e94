#include <algorithm>
#include <atomic>
#include <chrono>
#include <map>
#include <thread>

#include "s3a/cvpr.hpp"
#include "s3a/error.hpp"

namespace s3a {

CvprMode parse_mode(std::string_view s) {
  if (s == "zeroshot") return CvprMode::kZeroShot;
  if (s == "group") return CvprMode::kGroup;
  if (s == "scd") return CvprMode::kScd;
  if (s == "cvpr") return CvprMode::kCvpr;
  fail(ErrorKind::kInvalidArgument,
       "unknown mode '" + std::string(s) + "' (expected zeroshot, group, scd or cvpr)");
}

std::string_view mode_name(CvprMode m) {
  switch (m) {
    case CvprMode::kZeroShot: return "zeroshot";
    case CvprMode::kGroup: return "group";
    case CvprMode::kScd: return "scd";
    case CvprMode::kCvpr: return "cvpr";
  }
  return "?";
}

namespace {

class Stopwatch {
 public:
  explicit Stopwatch(std::vector<StageTiming>& sink) : sink_(sink) {}
  void lap(std::string stage) {
    const auto now = std::chrono::steady_clock::now();
    sink_.push_back({std::move(stage), std::chrono::duration<double>(now - last_).count()});
    last_ = now;
  }

 private:
  std::vector<StageTiming>& sink_;
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

struct PromptJob {
  std::vector<CatalogCandidate> candidates;
  std::string prompt;
  QueryOutcome outcome;
  std::exception_ptr error;
};

// Runs the jobs' LLM queries with at most `limit` in flight.
void run_queries(std::vector<PromptJob>& jobs, const PromptResources& res, std::size_t limit) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        jobs[j].outcome = query_attributes(jobs[j].prompt, res.client, *res.cache, res.model);
      } catch (...) {
        jobs[j].error = std::current_exception();
      }
    }
  };
  const std::size_t n = std::min(std::max<std::size_t>(limit, 1), jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& job : jobs)
    if (job.error) std::rethrow_exception(job.error);
}

// Catalogs every candidate word not yet catalogued.
void prompt_stage(const CandidateSet& cands, const Vocabulary& vocab, const CvprConfig& cfg,
                  const PromptResources& res, CvprReport& report) {
  AttributeCatalog& catalog = *res.catalog;
  std::vector<PromptJob> jobs;
  auto add_job = [&](const std::vector<WordId>& words) {
    PromptJob job;
    std::vector<PromptCandidate> pc;
    for (WordId w : words) {
      job.candidates.push_back({w, vocab[w].name});
      pc.push_back(prompt_candidate(vocab[w]));
    }
    job.prompt = build_prompt(pc);
    jobs.push_back(std::move(job));
  };
  std::vector<bool> queued(vocab.size(), false);
  for (const auto& words : cands.words) {
    const bool missing = std::any_of(words.begin(), words.end(), [&](WordId w) {
      return !catalog.attributes.contains(w) && !queued[w];
    });
    if (!missing) continue;
    if (cfg.prompt_style == PromptStyle::kJoint) {
      add_job(words);
      for (WordId w : words) queued[w] = true;
    } else {
      for (WordId w : words) {
        if (catalog.attributes.contains(w) || queued[w]) continue;
        add_job({w});
        queued[w] = true;
      }
    }
  }
  if (jobs.empty()) return;
  require(res.cache != nullptr, "prompt stage: no response cache configured");
  run_queries(jobs, res, cfg.max_in_flight);

  for (auto& job : jobs) {
    ParseReport pr;
    const AttributeCatalog parsed = parse_attributes(job.outcome.response, job.candidates, &pr);
    catalog.merge(parsed);
    ++report.prompts;
    report.cache_hits += job.outcome.cache_hit;
    report.client_calls += job.outcome.client_calls;
    report.ignored_lines += pr.ignored_lines;
    report.warnings.insert(report.warnings.end(), pr.warnings.begin(), pr.warnings.end());
  }
  if (catalog.source.empty()) catalog.source = res.model;
}

}  // namespace

CvprResult run_cvpr(const EmbeddingMatrix& x, const Vocabulary& vocab, const EmbeddingMatrix& bank,
                    const CvprConfig& cfg, const PromptResources& res) {
  require(x.rows() > 0, "run_cvpr: no image embeddings");
  require(x.dim() == bank.dim(), "run_cvpr: image embeddings have dimension " + std::to_string(x.dim()) +
                                     " but vocabulary embeddings have " + std::to_string(bank.dim()));
  require(bank.rows() == vocab.size(), "run_cvpr: " + std::to_string(bank.rows()) +
                                           " vocabulary embeddings for " + std::to_string(vocab.size()) +
                                           " words");
  require(x.normalized() && bank.normalized(), "run_cvpr: embeddings must be normalized");

  CvprResult out;
  out.report.mode = cfg.mode;
  Stopwatch clock(out.report.timings);

  const auto hits = nearest_one(x, bank);
  out.nn_word.resize(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out.nn_word[i] = hits[i].index;
  clock.lap("nearest");

  if (cfg.mode == CvprMode::kZeroShot) {
    out.labels.labels = out.nn_word;
    return out;
  }

  std::size_t k = cfg.k;
  if (cfg.estimate_k) {
    KEstimateOptions ko = cfg.k_options;
    ko.seed = cfg.seed;
    ko.kmeans = cfg.kmeans;
    out.k_estimate = estimate_k(x, ko);
    k = out.k_estimate->k_hat;
    clock.lap("estimate_k");
  }
  require(k >= 1, "run_cvpr: cluster count must be >= 1 (set k or enable estimate_k)");
  require(k <= x.rows(), "run_cvpr: more clusters than instances");
  require(cfg.m >= 1, "run_cvpr: m must be >= 1");
  out.report.k = k;

  KMeansResult km = kmeans(x, k, cfg.seed, cfg.kmeans);
  out.report.repairs = km.repairs;
  clock.lap("kmeans");

  ClusterPartition partition;
  AssignmentMap map;
  if (cfg.mode == CvprMode::kGroup) {
    partition = std::move(km.partition);
    out.report.converged = km.converged;
    out.report.iterations = 1;
  } else {
    IterativeResult it = iterative_cluster_vote(x, bank, std::move(km.partition), out.nn_word, cfg.max_iter);
    partition = std::move(it.partition);
    out.report.iterations = it.iterations;
    out.report.converged = it.converged;
    out.report.cycled = it.cycled;
    out.report.repairs += it.repairs;
    clock.lap("iterate");
  }

  out.vote = vote(partition, out.nn_word, cfg.m, vocab.size());
  map = hungarian(out.vote->matrix);
  for (std::size_t c = 0; c < k; ++c)
    if (out.vote->candidates.padded[c]) out.report.padded_clusters.push_back(c);
  out.labels = broadcast_labels(partition, map);
  out.vote_map = map;
  clock.lap("vote");

  if (cfg.mode == CvprMode::kCvpr) {
    require(res.encoder != nullptr, "run_cvpr: cvpr mode needs a sentence encoder");
    AttributeCatalog local;
    PromptResources pr = res;
    if (pr.catalog == nullptr) pr.catalog = &local;
    ResponseCache scratch;
    if (pr.cache == nullptr) pr.cache = &scratch;
    const auto& cands = out.vote->candidates;
    prompt_stage(cands, vocab, cfg, pr, out.report);
    clock.lap("prompt");

    std::vector<WordId> all;
    for (const auto& w : cands.words) all.insert(all.end(), w.begin(), w.end());
    out.sentences = compose_prompt_sentences(*pr.catalog, all, vocab, cfg.templates);
    std::vector<std::string> texts;
    texts.reserve(out.sentences.size());
    for (const auto& s : out.sentences) texts.push_back(s.text);
    const EmbeddingMatrix emb = pr.encoder->encode(texts);
    require(emb.rows() == texts.size() && emb.dim() == x.dim(),
            "run_cvpr: sentence encoder returned a mismatched matrix");
    std::map<WordId, std::pair<std::size_t, std::size_t>> range;  // word -> [first, last)
    for (std::size_t i = 0; i < out.sentences.size(); ++i) {
      auto [it, fresh] = range.try_emplace(out.sentences[i].word_id, i, i + 1);
      if (!fresh) it->second.second = i + 1;
    }
    std::vector<AugmentedTextBank> banks;
    banks.reserve(k);
    for (std::size_t c = 0; c < k; ++c) {
      std::vector<WordId> words = cands.words[c];
      std::sort(words.begin(), words.end());
      words.erase(std::unique(words.begin(), words.end()), words.end());
      std::vector<PromptSentence> sents;
      std::vector<std::size_t> rows;
      for (WordId w : words) {
        const auto [b, e] = range.at(w);
        for (std::size_t i = b; i < e; ++i) {
          sents.push_back(out.sentences[i]);
          rows.push_back(i);
        }
      }
      banks.push_back(assemble_bank(static_cast<ClusterId>(c), sents, emb.select_rows(rows)));
    }
    clock.lap("banks");
    out.realigned = realign(partition, x, banks);
    out.labels = out.realigned->labels;
    clock.lap("realign");
  }
  out.labels.partition_hash = partition.hash();
  out.partition = std::move(partition);
  return out;
}

}  // namespace s3a
