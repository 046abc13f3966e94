#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "json.hpp"
#include "s3a/cli.hpp"
#include "s3a/hash.hpp"
#include "s3a/kernels.hpp"
#include "s3a/parallel.hpp"
#include "s3a/prompt.hpp"
#include "s3a/synth.hpp"

namespace s3a::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kVersion = "1.0.0";

struct Flags {
  std::string config;
  std::string mode;
  std::optional<std::size_t> k;
  bool estimate_k = false;
  std::optional<std::size_t> m;
  std::optional<double> gamma;
  std::optional<double> tau;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
  std::optional<std::size_t> epochs;
  bool force = false;
  std::string out;
  std::string pred;
};

void require_input(const fs::path& p, const char* key) {
  if (p.empty()) throw ConfigError(std::string("config is missing paths.") + key);
  if (!fs::exists(p)) throw ConfigError(std::string("paths.") + key + " does not exist: " + p.string());
}

RunConfig resolve(const Flags& f) {
  RunConfig c = load_config(f.config);
  if (!f.mode.empty()) {
    try {
      c.cvpr.mode = parse_mode(f.mode == "s3a-train" ? "cvpr" : f.mode);
    } catch (const Error& e) {
      throw ConfigError(e.what());
    }
  }
  if (f.k) c.cvpr.k = *f.k;
  if (f.estimate_k) c.cvpr.estimate_k = true;
  if (f.m) c.cvpr.m = *f.m;
  if (f.gamma) c.train.gamma = *f.gamma;
  if (f.tau) c.train.tau = *f.tau;
  if (f.seed) c.cvpr.seed = c.train.seed = *f.seed;
  if (f.threads) c.threads = *f.threads;
  if (f.epochs) c.train.epochs = *f.epochs;
  if (!f.out.empty()) c.out = fs::absolute(f.out).lexically_normal();
  if (!f.pred.empty()) c.paths.predictions = fs::absolute(f.pred).lexically_normal();
  if (c.threads == 0) throw ConfigError("threads must be >= 1");
  if (c.cvpr.m == 0) throw ConfigError("m must be >= 1");
  try {
    c.train.validate();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return c;
}

void prepare_out(const fs::path& out, bool force) {
  if (out.empty()) throw ConfigError("no output directory (use --out or the config key 'out')");
  if (fs::exists(out)) {
    if (!fs::is_directory(out)) throw ConfigError("output path is not a directory: " + out.string());
    if (!fs::is_empty(out) && !force) {
      throw ConfigError("output directory " + out.string() + " is not empty (use --force to overwrite)");
    }
  }
  fs::create_directories(out);
}

std::string config_hash(const RunConfig& c) { return hex64(fnv1a64(config_to_json(c))); }

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + p.string());
  out << s;
}

void write_manifest(const RunConfig& c, const std::string& command) {
  json inputs = json::object();
  auto add = [&](const char* key, const fs::path& p) {
    if (!p.empty() && fs::exists(p)) inputs[key] = {{"path", p.string()}, {"fnv1a64", hex64(hash_file(p))}};
  };
  add("images", c.paths.images);
  add("vocabulary", c.paths.vocabulary);
  add("vocab_embeddings", c.paths.vocab_embeddings);
  add("labels", c.paths.labels);
  add("attribute_fixture", c.paths.attribute_fixture);
  add("sentences", c.paths.sentences);
  add("sentence_embeddings", c.paths.sentence_embeddings);
  add("similarity", c.paths.similarity);
  add("predictions", c.paths.predictions);
  const json m = {{"tool", "s3a"},
                  {"version", kVersion},
                  {"command", command},
                  {"config", json::parse(config_to_json(c))},
                  {"config_hash", config_hash(c)},
                  {"inputs", inputs},
                  {"kernels", kernels::active().name},
                  {"threads", c.threads}};
  write_text(c.out / "manifest.json", m.dump(2) + "\n");
}

struct Inputs {
  EmbeddingMatrix x;
  Vocabulary vocab;
  EmbeddingMatrix bank;
};

Inputs load_inputs(const RunConfig& c) {
  require_input(c.paths.images, "images");
  require_input(c.paths.vocabulary, "vocabulary");
  require_input(c.paths.vocab_embeddings, "vocab_embeddings");
  Inputs in;
  in.x = load_embeddings(c.paths.images);
  in.vocab = load_vocabulary(c.paths.vocabulary);
  in.bank = load_embeddings(c.paths.vocab_embeddings);
  if (in.bank.rows() != in.vocab.size()) {
    fail(ErrorKind::kFormat, "vocabulary has " + std::to_string(in.vocab.size()) + " words but " +
                                 std::to_string(in.bank.rows()) + " embeddings");
  }
  if (in.x.dim() != in.bank.dim()) {
    fail(ErrorKind::kFormat, "image embeddings have dimension " + std::to_string(in.x.dim()) +
                                 " but vocabulary embeddings have " + std::to_string(in.bank.dim()));
  }
  return in;
}

void write_predictions(const fs::path& p, std::span<const WordId> labels, const Vocabulary& vocab) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + p.string());
  for (WordId w : labels) out << w << '\t' << vocab[w].name << '\n';
}

void write_structural(const fs::path& p, const StructuralLabels& s) {
  std::ofstream out(p, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + p.string());
  out << "# epoch=" << s.epoch << " partition_hash=" << hex64(s.partition_hash) << '\n';
  for (std::size_t i = 0; i < s.labels.size(); ++i) out << i << '\t' << s.labels[i] << '\n';
}

// Ground truth plus the optional similarity matrix, in one id space.
struct Truth {
  std::vector<Label> labels;
  std::vector<std::string> oov;
  std::optional<SimilarityMatrix> sim;
};

std::optional<Truth> load_truth(const RunConfig& c, const Vocabulary& vocab, std::size_t n) {
  if (c.paths.labels.empty()) return std::nullopt;
  require_input(c.paths.labels, "labels");
  Truth t;
  t.labels = read_labels(c.paths.labels, vocab, &t.oov);
  if (t.labels.size() != n) {
    fail(ErrorKind::kFormat, "labels file has " + std::to_string(t.labels.size()) + " entries for " +
                                 std::to_string(n) + " instances");
  }
  if (!c.paths.similarity.empty()) {
    require_input(c.paths.similarity, "similarity");
    auto names = std::make_shared<std::vector<std::string>>(t.oov);
    t.sim = load_similarity(c.paths.similarity, [&vocab, names](const std::string& name) {
      WordId id = 0;
      if (vocab.find(name, id)) return static_cast<Label>(id);
      const std::string key = normalize_name(name);
      std::size_t j = 0;
      while (j < names->size() && (*names)[j] != key) ++j;
      if (j == names->size()) names->push_back(key);
      return static_cast<Label>(vocab.size() + j);
    });
  } else if (!t.oov.empty()) {
    throw ConfigError("ground truth has " + std::to_string(t.oov.size()) +
                      " name(s) outside the vocabulary (first: '" + t.oov.front() +
                      "'); provide paths.similarity for soft accuracy");
  }
  return t;
}

json metric_records(std::span<const Label> pred, const Truth& t, const std::string& hash,
                    const std::string& target) {
  json arr = json::array();
  auto rec = [&](const char* name, double v) {
    arr.push_back({{"metric", name}, {"value", v}, {"n", pred.size()}, {"config_hash", hash}, {"target", target}});
  };
  rec("top1_accuracy", top1_accuracy(pred, t.labels));
  rec("clustering_accuracy", clustering_accuracy(pred, t.labels));
  rec("label_set_iou", label_set_iou(pred, t.labels));
  if (t.sim) rec("soft_accuracy", soft_accuracy(pred, t.labels, *t.sim));
  return arr;
}

void append_metrics(const fs::path& p, const json& records) {
  std::ofstream out(p, std::ios::app);
  if (!out) fail(ErrorKind::kIo, "cannot write " + p.string());
  for (const auto& r : records) out << r.dump() << '\n';
}

void print_metrics(std::ostream& os, const json& records) {
  for (const auto& r : records) {
    os << r["target"].get<std::string>() << ' ' << r["metric"].get<std::string>() << " = "
       << r["value"].get<double>() << '\n';
  }
}

json report_json(const CvprReport& r, const RunConfig& c, const std::string& model) {
  json timings = json::array();
  for (const auto& t : r.timings) timings.push_back({{"stage", t.stage}, {"seconds", t.seconds}});
  return {{"mode", std::string(mode_name(r.mode))},
          {"k", r.k},
          {"m", c.cvpr.m},
          {"seed", c.cvpr.seed},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"cycled", r.cycled},
          {"repairs", r.repairs},
          {"padded_clusters", r.padded_clusters},
          {"prompt",
           {{"style", c.cvpr.prompt_style == PromptStyle::kJoint ? "joint" : "single"},
            {"templates", c.cvpr.templates},
            {"model", model},
            {"temperature", c.prompt.temperature},
            {"prompts", r.prompts},
            {"cache_hits", r.cache_hits},
            {"client_calls", r.client_calls},
            {"ignored_lines", r.ignored_lines},
            {"warnings", r.warnings}}},
          {"kernels", kernels::active().name},
          {"threads", c.threads},
          {"timings", timings}};
}

void write_cvpr_artifacts(const fs::path& dir, const CvprResult& r, const Vocabulary& vocab,
                          std::uint64_t seed) {
  if (r.partition) save_partition(*r.partition, seed, dir / "partition.tsv");
  if (r.vote) save_vote_matrix(r.vote->matrix, dir / "vote_matrix.tsv");
  if (r.realigned) save_vote_matrix(r.realigned->matrix, dir / "realigned_matrix.tsv");
  if (r.vote_map) {
    std::ofstream out(dir / "assignment.jsonl", std::ios::trunc);
    auto dump = [&](const AssignmentMap& m, const char* stage) {
      for (std::size_t c = 0; c < m.word_of_cluster.size(); ++c) {
        const WordId w = m.word_of_cluster[c];
        out << json{{"stage", stage}, {"cluster", c}, {"word_id", w}, {"name", vocab[w].name}}.dump() << '\n';
      }
    };
    dump(*r.vote_map, "vote");
    if (r.realigned) dump(r.realigned->map, "realign");
  }
  if (r.vote) {
    std::ofstream out(dir / "candidates.jsonl", std::ios::trunc);
    const auto& cs = r.vote->candidates;
    for (std::size_t c = 0; c < cs.words.size(); ++c) {
      out << json{{"cluster", c}, {"words", cs.words[c]}, {"padded", static_cast<bool>(cs.padded[c])}}.dump()
          << '\n';
    }
  }
  if (!r.sentences.empty()) save_sentences(r.sentences, dir / "sentences.jsonl");
  if (r.k_estimate) {
    const auto& e = *r.k_estimate;
    json passes = json::array();
    for (std::size_t p = 0; p < 3; ++p) {
      json scan = json::array();
      for (const auto& s : e.scan_log[p]) scan.push_back({{"k", s.k}, {"silhouette", s.score}});
      passes.push_back({{"solution", e.pass_solutions[p]}, {"scan", scan}});
    }
    write_text(dir / "k_estimate.json",
               json{{"k_hat", e.k_hat}, {"passes", passes}, {"note", e.note}}.dump(2) + "\n");
  }
  if (r.partition || !r.labels.labels.empty()) write_structural(dir / "structural_labels.tsv", r.labels);
}

// LLM client, cache, encoder and catalog for the prompt stage.
struct PromptStack {
  std::unique_ptr<LlmClient> client;
  std::unique_ptr<ResponseCache> cache;
  std::unique_ptr<TableEncoder> encoder;
  AttributeCatalog catalog;
  std::string model;

  PromptResources resources() {
    return {client.get(), cache.get(), model, encoder.get(), &catalog};
  }
};

std::unique_ptr<PromptStack> make_prompt_stack(const RunConfig& c) {
  auto s = std::make_unique<PromptStack>();
  if (!c.paths.attribute_fixture.empty()) {
    require_input(c.paths.attribute_fixture, "attribute_fixture");
    const AttributeCatalog fixture = load_catalog(c.paths.attribute_fixture);
    std::vector<std::pair<std::string, std::vector<std::string>>> by_name;
    for (const auto& [w, attrs] : fixture.attributes) by_name.emplace_back(fixture.names.at(w), attrs);
    s->client = FixtureClient::from_attributes(std::move(by_name));
  } else if (auto opts = HttpLlmClient::options_from_env()) {
    if (!c.prompt.model.empty()) opts->model = c.prompt.model;
    opts->temperature = c.prompt.temperature;
    opts->timeout_s = c.prompt.timeout_s;
    s->client = std::make_unique<HttpLlmClient>(*opts);
  }
  s->model = !c.prompt.model.empty() && !s->client ? c.prompt.model
             : s->client                          ? s->client->model()
                                                  : std::string("default");
  const fs::path cache = c.paths.llm_cache.empty() ? c.out / "llm_cache.jsonl" : c.paths.llm_cache;
  s->cache = std::make_unique<ResponseCache>(cache);
  require_input(c.paths.sentences, "sentences");
  require_input(c.paths.sentence_embeddings, "sentence_embeddings");
  s->encoder = std::make_unique<TableEncoder>(TableEncoder::from_files(c.paths.sentences, c.paths.sentence_embeddings));
  return s;
}

void write_missing(const fs::path& dir, const MissingSentencesError& e) {
  std::ofstream out(dir / "missing_sentences.jsonl", std::ios::trunc);
  for (const auto& s : e.missing()) out << json{{"text", s}}.dump() << '\n';
}

double accuracy_of(std::span<const WordId> p, const std::optional<Truth>& t) {
  return t ? top1_accuracy(p, t->labels) : -1.0;
}

void summary(std::ostream& os, const std::string& cmd, const std::optional<Truth>& truth,
             std::span<const WordId> labels, const fs::path& out) {
  os << cmd << ": " << labels.size() << " instances";
  if (truth) os << ", top-1 accuracy " << accuracy_of(labels, truth);
  os << " -> " << out.string() << '\n';
}

int cmd_zeroshot(const RunConfig& c, std::ostream& os) {
  write_manifest(c, "zeroshot");
  Inputs in = load_inputs(c);
  const auto truth = load_truth(c, in.vocab, in.x.rows());
  CvprConfig cc = c.cvpr;
  cc.mode = CvprMode::kZeroShot;
  const CvprResult r = run_cvpr(in.x, in.vocab, in.bank, cc);
  write_predictions(c.out / "predictions.txt", r.labels.labels, in.vocab);
  write_text(c.out / "report.json", report_json(r.report, c, "").dump(2) + "\n");
  if (truth) {
    const json m = metric_records(r.labels.labels, *truth, config_hash(c), "predictions");
    append_metrics(c.out / "metrics.jsonl", m);
    print_metrics(os, m);
  }
  summary(os, "zeroshot", truth, r.labels.labels, c.out);
  return kExitOk;
}

int cmd_cvpr(const RunConfig& c, std::ostream& os) {
  write_manifest(c, "cvpr");
  Inputs in = load_inputs(c);
  const auto truth = load_truth(c, in.vocab, in.x.rows());
  std::unique_ptr<PromptStack> stack;
  if (c.cvpr.mode == CvprMode::kCvpr) stack = make_prompt_stack(c);
  CvprResult r;
  try {
    r = run_cvpr(in.x, in.vocab, in.bank, c.cvpr, stack ? stack->resources() : PromptResources{});
  } catch (const MissingSentencesError& e) {
    write_missing(c.out, e);
    throw;
  }
  write_cvpr_artifacts(c.out, r, in.vocab, c.cvpr.seed);
  if (stack) save_catalog(stack->catalog, c.out / "attributes.jsonl");
  write_predictions(c.out / "predictions.txt", r.labels.labels, in.vocab);
  write_text(c.out / "report.json", report_json(r.report, c, stack ? stack->model : "").dump(2) + "\n");
  if (truth) {
    const json m = metric_records(r.labels.labels, *truth, config_hash(c), "predictions");
    append_metrics(c.out / "metrics.jsonl", m);
    print_metrics(os, m);
  }
  summary(os, std::string(mode_name(c.cvpr.mode)), truth, r.labels.labels, c.out);
  return kExitOk;
}

int cmd_train(const RunConfig& c, std::ostream& os, std::ostream& err) {
  if (c.cvpr.mode == CvprMode::kZeroShot) throw ConfigError("train needs a clustering mode (group, scd or cvpr)");
  write_manifest(c, "train");
  Inputs in = load_inputs(c);
  const auto truth = load_truth(c, in.vocab, in.x.rows());
  std::unique_ptr<PromptStack> stack;
  if (c.cvpr.mode == CvprMode::kCvpr) stack = make_prompt_stack(c);

  std::optional<std::size_t> fixed_k;
  CvprResult last;
  const LabelSource source = [&](const EmbeddingMatrix& feats, std::size_t) {
    CvprConfig cc = c.cvpr;
    if (fixed_k) {
      cc.k = *fixed_k;
      cc.estimate_k = false;
    }
    CvprResult r = run_cvpr(feats, in.vocab, in.bank, cc, stack ? stack->resources() : PromptResources{});
    if (!fixed_k) fixed_k = r.report.k;
    StructuralLabels sl = r.labels;
    last = std::move(r);
    return sl;
  };
  const EpochObserver progress = [&](const EpochRecord& e) {
    err << "epoch " << e.epoch << ": L=" << e.loss << " L_str=" << e.l_str << " L_in=" << e.l_in
        << " eta=" << e.eta;
    if (e.cvpr_accuracy) err << " structural_acc=" << *e.cvpr_accuracy;
    err << '\n';
  };
  std::vector<WordId> gt;
  if (truth) gt.assign(truth->labels.begin(), truth->labels.end());
  if (!truth || !truth->oov.empty()) gt.clear();

  TrainResult tr;
  try {
    tr = train(in.x, in.bank, source, c.train, gt, progress);
  } catch (const MissingSentencesError& e) {
    write_missing(c.out, e);
    throw;
  }
  save_history(tr.history, c.out / "history.jsonl");
  save_adapter(tr.teacher, c.out / "teacher.emb");
  save_adapter(tr.student, c.out / "student.emb");
  write_cvpr_artifacts(c.out, last, in.vocab, c.cvpr.seed);
  write_structural(c.out / "structural_labels.tsv", tr.structural.back());
  if (stack) save_catalog(stack->catalog, c.out / "attributes.jsonl");
  write_predictions(c.out / "predictions.txt", tr.predictions, in.vocab);
  write_text(c.out / "report.json", report_json(last.report, c, stack ? stack->model : "").dump(2) + "\n");
  if (truth) {
    const std::string h = config_hash(c);
    const json m1 = metric_records(tr.predictions, *truth, h, "predictions");
    const json m2 = metric_records(tr.structural.back().labels, *truth, h, "structural");
    append_metrics(c.out / "metrics.jsonl", m1);
    append_metrics(c.out / "metrics.jsonl", m2);
    print_metrics(os, m1);
    print_metrics(os, m2);
  }
  summary(os, "train", truth, tr.predictions, c.out);
  return kExitOk;
}

int cmd_eval(const RunConfig& c, std::ostream& os) {
  require_input(c.paths.vocabulary, "vocabulary");
  require_input(c.paths.predictions, "predictions");
  require_input(c.paths.labels, "labels");
  const Vocabulary vocab = load_vocabulary(c.paths.vocabulary);
  const std::vector<Label> pred = read_labels(c.paths.predictions, vocab);
  const auto truth = load_truth(c, vocab, pred.size());
  const json m = metric_records(pred, *truth, config_hash(c), "predictions");
  if (!c.out.empty()) {
    prepare_out(c.out, true);
    write_manifest(c, "eval");
    std::remove((c.out / "metrics.jsonl").string().c_str());
    append_metrics(c.out / "metrics.jsonl", m);
  }
  print_metrics(os, m);
  return kExitOk;
}

struct SynthFlags {
  std::string out;
  PlantedWorldOptions world;
  std::optional<std::size_t> k;
  bool force = false;
};

int cmd_synth(const SynthFlags& f, std::ostream& os) {
  if (f.out.empty()) throw ConfigError("synth needs --out");
  prepare_out(f.out, f.force);
  const PlantedWorld w = make_planted_world(f.world);
  write_planted_world(w, f.k.value_or(f.world.classes), f.out);
  os << "synth: " << f.world.n << " images, " << f.world.vocab_size << " words, " << f.world.classes
     << " classes -> " << f.out << '\n';
  return kExitOk;
}

void add_run_flags(CLI::App* sub, Flags& f, bool pipeline) {
  sub->add_option("--config", f.config, "Run config (JSON) or a previous run's manifest.json")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--out", f.out, "Output directory");
  sub->add_option("--threads", f.threads, "Worker thread cap");
  if (!pipeline) {
    sub->add_option("--pred", f.pred, "Predictions file (overrides paths.predictions)");
    return;
  }
  sub->add_option("--mode", f.mode, "zeroshot | group | scd | cvpr | s3a-train");
  sub->add_option("--k", f.k, "Cluster count");
  sub->add_flag("--estimate-k", f.estimate_k, "Estimate the cluster count");
  sub->add_option("--m", f.m, "Candidate words per cluster");
  sub->add_option("--gamma", f.gamma, "Instance loss weight");
  sub->add_option("--tau", f.tau, "Teacher confidence threshold");
  sub->add_option("--seed", f.seed, "Random seed");
  sub->add_option("--epochs", f.epochs, "Training epochs");
  sub->add_flag("--force", f.force, "Reuse a non-empty output directory");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& os, std::ostream& err) {
  CLI::App app{"Structural and semantic alignment over precomputed embeddings", "s3a"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Flags f;
  SynthFlags sf;
  auto* zs = app.add_subcommand("zeroshot", "Nearest-word labels per instance");
  auto* cv = app.add_subcommand("cvpr", "Cluster, vote, prompt and realign");
  auto* tr = app.add_subcommand("train", "Self-train an adapter with structural pseudo-labels");
  auto* ev = app.add_subcommand("eval", "Score predictions against ground truth");
  auto* sy = app.add_subcommand("synth", "Write a planted synthetic world");
  add_run_flags(zs, f, true);
  add_run_flags(cv, f, true);
  add_run_flags(tr, f, true);
  add_run_flags(ev, f, false);
  sy->add_option("--out", sf.out, "Output directory")->required();
  sy->add_option("--seed", sf.world.seed, "Random seed");
  sy->add_option("--n", sf.world.n, "Images");
  sy->add_option("--dim", sf.world.dim, "Embedding dimension");
  sy->add_option("--classes", sf.world.classes, "Classes");
  sy->add_option("--vocab-size", sf.world.vocab_size, "Vocabulary size");
  sy->add_option("--hard-fraction", sf.world.hard_fraction, "Share of decoy-dominated classes");
  sy->add_option("--k", sf.k, "Cluster count written into the config");
  sy->add_flag("--force", sf.force, "Reuse a non-empty output directory");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();  // program name
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    os << app.help();
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    os << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "s3a: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (sy->parsed()) return cmd_synth(sf, os);
    RunConfig c = resolve(f);
    set_num_threads(c.threads);
    if (ev->parsed()) return cmd_eval(c, os);
    prepare_out(c.out, f.force);
    if (zs->parsed()) return cmd_zeroshot(c, os);
    if (cv->parsed()) return cmd_cvpr(c, os);
    return cmd_train(c, os, err);
  } catch (const ConfigError& e) {
    err << "s3a: " << e.what() << '\n';
    return kExitUsage;
  } catch (const MissingSentencesError& e) {
    err << "s3a: " << e.what() << "; the full list is in missing_sentences.jsonl\n";
    return kExitPipeline;
  } catch (const std::exception& e) {
    err << "s3a: " << e.what() << '\n';
    return kExitPipeline;
  }
}

}  // namespace s3a::cli
