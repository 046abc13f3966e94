#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "s3a/cli.hpp"

namespace s3a::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) throw ConfigError("unknown config key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
  }
}

fs::path resolve(const fs::path& base, const std::string& p) {
  if (p.empty()) return {};
  const fs::path path(p);
  return (path.is_absolute() ? path : base / path).lexically_normal();
}

}  // namespace

RunConfig config_from_json(const std::string& text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (root.is_object() && root.contains("config") && root["config"].is_object()) root = root["config"];
  check_keys(root, {"paths", "mode", "k", "estimate_k", "k_estimation", "m", "seed", "max_iter",
                    "kmeans_max_iter", "prompt", "train", "threads", "out"},
             "config");

  RunConfig c;
  const fs::path base = fs::absolute(base_dir);
  if (auto it = root.find("paths"); it != root.end()) {
    const json& p = *it;
    check_keys(p, {"images", "vocabulary", "vocab_embeddings", "labels", "attribute_fixture", "llm_cache",
                   "sentences", "sentence_embeddings", "similarity", "predictions"},
               "paths");
    auto path = [&](const char* key, fs::path& out) {
      std::string s;
      read(p, key, s, "paths");
      out = resolve(base, s);
    };
    path("images", c.paths.images);
    path("vocabulary", c.paths.vocabulary);
    path("vocab_embeddings", c.paths.vocab_embeddings);
    path("labels", c.paths.labels);
    path("attribute_fixture", c.paths.attribute_fixture);
    path("llm_cache", c.paths.llm_cache);
    path("sentences", c.paths.sentences);
    path("sentence_embeddings", c.paths.sentence_embeddings);
    path("similarity", c.paths.similarity);
    path("predictions", c.paths.predictions);
  }

  std::string mode = "cvpr";
  read(root, "mode", mode, "config");
  if (mode == "s3a-train") mode = "cvpr";
  try {
    c.cvpr.mode = parse_mode(mode);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  read(root, "k", c.cvpr.k, "config");
  read(root, "estimate_k", c.cvpr.estimate_k, "config");
  read(root, "m", c.cvpr.m, "config");
  read(root, "seed", c.cvpr.seed, "config");
  read(root, "max_iter", c.cvpr.max_iter, "config");
  read(root, "kmeans_max_iter", c.cvpr.kmeans.max_iter, "config");
  if (auto it = root.find("k_estimation"); it != root.end()) {
    check_keys(*it, {"lb0", "ub0", "points_per_pass", "max_points"}, "k_estimation");
    read(*it, "lb0", c.cvpr.k_options.lb0, "k_estimation");
    read(*it, "ub0", c.cvpr.k_options.ub0, "k_estimation");
    read(*it, "points_per_pass", c.cvpr.k_options.points_per_pass, "k_estimation");
    read(*it, "max_points", c.cvpr.k_options.max_points, "k_estimation");
  }
  if (auto it = root.find("prompt"); it != root.end()) {
    check_keys(*it, {"style", "templates", "max_in_flight", "model", "temperature", "timeout_s"}, "prompt");
    std::string style = "joint";
    read(*it, "style", style, "prompt");
    if (style == "joint") {
      c.cvpr.prompt_style = PromptStyle::kJoint;
    } else if (style == "single") {
      c.cvpr.prompt_style = PromptStyle::kSingle;
    } else {
      throw ConfigError("prompt.style must be 'joint' or 'single'");
    }
    read(*it, "templates", c.cvpr.templates, "prompt");
    if (c.cvpr.templates.empty()) throw ConfigError("prompt.templates must not be empty");
    read(*it, "max_in_flight", c.cvpr.max_in_flight, "prompt");
    read(*it, "model", c.prompt.model, "prompt");
    read(*it, "temperature", c.prompt.temperature, "prompt");
    read(*it, "timeout_s", c.prompt.timeout_s, "prompt");
  }
  if (auto it = root.find("train"); it != root.end()) {
    const json& t = *it;
    check_keys(t, {"tau", "gamma", "temperature", "ema_init", "ema_final", "ema_warmup_iters", "epochs",
                   "batch_size", "learning_rate", "weight_decay", "beta1", "beta2", "adam_eps",
                   "noise_sigma"},
               "train");
    read(t, "tau", c.train.tau, "train");
    read(t, "gamma", c.train.gamma, "train");
    read(t, "temperature", c.train.temperature, "train");
    read(t, "ema_init", c.train.ema_init, "train");
    read(t, "ema_final", c.train.ema_final, "train");
    read(t, "ema_warmup_iters", c.train.ema_warmup_iters, "train");
    read(t, "epochs", c.train.epochs, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "learning_rate", c.train.learning_rate, "train");
    read(t, "weight_decay", c.train.weight_decay, "train");
    read(t, "beta1", c.train.beta1, "train");
    read(t, "beta2", c.train.beta2, "train");
    read(t, "adam_eps", c.train.adam_eps, "train");
    read(t, "noise_sigma", c.train.noise_sigma, "train");
  }
  c.train.seed = c.cvpr.seed;
  read(root, "threads", c.threads, "config");
  std::string out;
  read(root, "out", out, "config");
  c.out = resolve(base, out);
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str(), fs::absolute(path).parent_path());
}

std::string config_to_json(const RunConfig& c) {
  auto p = [](const fs::path& x) { return x.string(); };
  const auto& t = c.train;
  json j = {
      {"paths",
       {{"images", p(c.paths.images)},
        {"vocabulary", p(c.paths.vocabulary)},
        {"vocab_embeddings", p(c.paths.vocab_embeddings)},
        {"labels", p(c.paths.labels)},
        {"attribute_fixture", p(c.paths.attribute_fixture)},
        {"llm_cache", p(c.paths.llm_cache)},
        {"sentences", p(c.paths.sentences)},
        {"sentence_embeddings", p(c.paths.sentence_embeddings)},
        {"similarity", p(c.paths.similarity)},
        {"predictions", p(c.paths.predictions)}}},
      {"mode", std::string(mode_name(c.cvpr.mode))},
      {"k", c.cvpr.k},
      {"estimate_k", c.cvpr.estimate_k},
      {"k_estimation",
       {{"lb0", c.cvpr.k_options.lb0},
        {"ub0", c.cvpr.k_options.ub0},
        {"points_per_pass", c.cvpr.k_options.points_per_pass},
        {"max_points", c.cvpr.k_options.max_points}}},
      {"m", c.cvpr.m},
      {"seed", c.cvpr.seed},
      {"max_iter", c.cvpr.max_iter},
      {"kmeans_max_iter", c.cvpr.kmeans.max_iter},
      {"prompt",
       {{"style", c.cvpr.prompt_style == PromptStyle::kJoint ? "joint" : "single"},
        {"templates", c.cvpr.templates},
        {"max_in_flight", c.cvpr.max_in_flight},
        {"model", c.prompt.model},
        {"temperature", c.prompt.temperature},
        {"timeout_s", c.prompt.timeout_s}}},
      {"train",
       {{"tau", t.tau},
        {"gamma", t.gamma},
        {"temperature", t.temperature},
        {"ema_init", t.ema_init},
        {"ema_final", t.ema_final},
        {"ema_warmup_iters", t.ema_warmup_iters},
        {"epochs", t.epochs},
        {"batch_size", t.batch_size},
        {"learning_rate", t.learning_rate},
        {"weight_decay", t.weight_decay},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"adam_eps", t.adam_eps},
        {"noise_sigma", t.noise_sigma}}},
      {"threads", c.threads},
      {"out", p(c.out)}};
  return j.dump(2);
}

std::vector<Label> read_labels(const fs::path& path, const Vocabulary& vocab, std::vector<std::string>* oov) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open labels " + path.string());
  std::vector<Label> out;
  std::vector<std::string> fresh;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::string field = line.substr(0, line.find('\t'));
    const bool numeric = !field.empty() && field.find_first_not_of("0123456789") == std::string::npos;
    if (numeric) {
      unsigned long long v = 0;
      try {
        v = std::stoull(field);
      } catch (const std::exception&) {
        fail(ErrorKind::kFormat, path.string() + ": line " + std::to_string(lineno) + ": bad id");
      }
      if (v >= vocab.size()) {
        fail(ErrorKind::kFormat, path.string() + ": line " + std::to_string(lineno) + ": word id " +
                                     field + " outside the vocabulary");
      }
      out.push_back(static_cast<Label>(v));
      continue;
    }
    WordId id = 0;
    if (vocab.find(field, id)) {
      out.push_back(id);
      continue;
    }
    const std::string key = normalize_name(field);
    std::size_t j = 0;
    while (j < fresh.size() && fresh[j] != key) ++j;
    if (j == fresh.size()) fresh.push_back(key);
    out.push_back(static_cast<Label>(vocab.size() + j));
  }
  if (oov) *oov = std::move(fresh);
  return out;
}

}  // namespace s3a::cli
