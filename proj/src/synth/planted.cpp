#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>

#include "json.hpp"
#include "s3a/error.hpp"
#include "s3a/kernels.hpp"
#include "s3a/random.hpp"
#include "s3a/synth.hpp"

namespace s3a {

namespace {

double gaussian(Rng& rng) {
  double u1;
  do {
    u1 = uniform01(rng);
  } while (u1 <= 0.0);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void normalize(std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  s = std::sqrt(s);
  for (double& x : v) x /= s;
}

std::vector<double> random_unit(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  for (double& x : v) x = gaussian(rng);
  normalize(v);
  return v;
}

// Unit vector orthogonal to the unit vector `base`.
std::vector<double> orthogonal_unit(Rng& rng, const std::vector<double>& base) {
  std::vector<double> v = random_unit(rng, base.size());
  double p = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) p += v[i] * base[i];
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= p * base[i];
  normalize(v);
  return v;
}

// normalize(base + a * dir)
std::vector<double> tilt(const std::vector<double>& base, const std::vector<double>& dir, double a) {
  std::vector<double> v(base.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = base[i] + a * dir[i];
  normalize(v);
  return v;
}

std::vector<double> jitter(Rng& rng, const std::vector<double>& base, double sigma) {
  const double per = sigma / std::sqrt(static_cast<double>(base.size()));
  std::vector<double> v(base);
  for (double& x : v) x += per * gaussian(rng);
  normalize(v);
  return v;
}

constexpr const char* kOnsets[] = {"b", "br", "c", "d", "f", "g", "gl", "k", "l", "m",
                                   "n", "p", "pl", "r", "s", "st", "t", "tr", "v", "z"};
constexpr const char* kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou"};
constexpr const char* kCodas[] = {"", "n", "r", "l", "x", "m", "sh"};

std::string pseudo_word(Rng& rng) {
  std::string s;
  const std::size_t syll = 2 + uniform_index(rng, 2);
  for (std::size_t i = 0; i < syll; ++i) {
    s += kOnsets[uniform_index(rng, std::size(kOnsets))];
    s += kVowels[uniform_index(rng, std::size(kVowels))];
  }
  s += kCodas[uniform_index(rng, std::size(kCodas))];
  return s;
}

constexpr const char* kTextures[] = {"striped", "spotted", "glossy", "matte", "furry", "scaly",
                                     "ridged", "speckled", "smooth", "woven", "feathered", "rusty"};
constexpr const char* kParts[] = {"tail", "coat", "handle", "wings", "shell", "crest",
                                  "fins", "base", "antennae", "rim", "mane", "bark"};

}  // namespace

PlantedWorld make_planted_world(const PlantedWorldOptions& o) {
  require(o.dim >= 2, "planted world: dim must be >= 2");
  require(o.classes >= 1 && o.n >= o.classes, "planted world: need at least one instance per class");
  require(o.vocab_size >= 2 * o.classes, "planted world: vocabulary must hold a word and a decoy per class");
  require(o.hard_fraction >= 0.0 && o.hard_fraction <= 1.0, "planted world: hard_fraction must lie in [0, 1]");
  require(o.attributes_per_word >= 1 && !o.templates.empty(), "planted world: need attributes and templates");

  const std::size_t d = o.dim, C = o.classes, W = o.vocab_size;
  Rng rng(o.seed);
  PlantedWorld w;

  // Vocabulary positions: a random permutation places true words and decoys.
  std::vector<WordId> perm(W);
  for (std::size_t i = 0; i < W; ++i) perm[i] = static_cast<WordId>(i);
  for (std::size_t i = W; i > 1; --i) std::swap(perm[i - 1], perm[uniform_index(rng, i)]);
  w.true_words.assign(perm.begin(), perm.begin() + C);
  w.decoys.assign(perm.begin() + C, perm.begin() + 2 * C);

  const std::size_t n_hard = static_cast<std::size_t>(std::llround(o.hard_fraction * static_cast<double>(C)));
  w.hard.assign(C, false);
  {
    std::vector<std::size_t> cls(C);
    for (std::size_t c = 0; c < C; ++c) cls[c] = c;
    for (std::size_t i = C; i > 1; --i) std::swap(cls[i - 1], cls[uniform_index(rng, i)]);
    for (std::size_t i = 0; i < n_hard; ++i) w.hard[cls[i]] = true;
  }

  // Class centres, their true word and decoy prototypes. Easy classes have
  // the true word nearer the centre than the decoy; hard classes the
  // reverse, by a margin small enough that some images still vote true.
  std::vector<std::vector<double>> centre(C), anchor(W);
  for (std::size_t c = 0; c < C; ++c) {
    centre[c] = random_unit(rng, d);
    const double true_tilt = 0.45, decoy_tilt = w.hard[c] ? 0.38 : 0.75;
    anchor[w.true_words[c]] = tilt(centre[c], orthogonal_unit(rng, centre[c]), true_tilt);
    anchor[w.decoys[c]] = tilt(centre[c], orthogonal_unit(rng, centre[c]), decoy_tilt);
  }
  std::vector<std::size_t> owner(W, C);  // class a word is tied to, or C
  for (std::size_t c = 0; c < C; ++c) {
    owner[w.true_words[c]] = c;
    owner[w.decoys[c]] = c;
  }
  // Remaining words: a few loose relatives of each class, the rest anywhere.
  for (std::size_t i = 2 * C; i < W; ++i) {
    const WordId id = perm[i];
    if (i < 4 * C) {
      const std::size_t c = i % C;
      anchor[id] = tilt(centre[c], orthogonal_unit(rng, centre[c]), 1.1);
    } else {
      anchor[id] = random_unit(rng, d);
    }
  }

  // Vocabulary with unique pseudo-word names.
  std::set<std::string> used;
  std::vector<Word> words(W);
  for (std::size_t i = 0; i < W; ++i) {
    std::string name;
    do {
      name = pseudo_word(rng);
    } while (!used.insert(name).second);
    words[i].id = static_cast<WordId>(i);
    words[i].name = name;
    words[i].synsets.push_back({"a synthetic visual concept called " + name});
  }
  w.vocab = Vocabulary(std::move(words));

  std::vector<double> bank;
  bank.reserve(W * d);
  for (std::size_t i = 0; i < W; ++i) bank.insert(bank.end(), anchor[i].begin(), anchor[i].end());
  w.vocab_bank = EmbeddingMatrix(W, d, std::move(bank), true);

  // Images: balanced classes, instances shuffled.
  w.class_of.resize(o.n);
  for (std::size_t i = 0; i < o.n; ++i) w.class_of[i] = i % C;
  for (std::size_t i = o.n; i > 1; --i) std::swap(w.class_of[i - 1], w.class_of[uniform_index(rng, i)]);
  std::vector<double> img;
  img.reserve(o.n * d);
  w.labels.resize(o.n);
  for (std::size_t i = 0; i < o.n; ++i) {
    const auto v = jitter(rng, centre[w.class_of[i]], o.cloud_noise);
    img.insert(img.end(), v.begin(), v.end());
    w.labels[i] = w.true_words[w.class_of[i]];
  }
  w.images = EmbeddingMatrix(o.n, d, std::move(img), true);

  // Attributes, and sentence embeddings: the sentences of a class's true
  // word describe what its images look like, every other word's sentences
  // stay near the word itself.
  std::vector<double> sent;
  for (std::size_t i = 0; i < W; ++i) {
    const WordId id = static_cast<WordId>(i);
    std::vector<std::string> attrs;
    std::set<std::string> seen;
    while (attrs.size() < o.attributes_per_word) {
      std::string a = std::string(kTextures[uniform_index(rng, std::size(kTextures))]) + " " +
                      kParts[uniform_index(rng, std::size(kParts))];
      if (seen.insert(a).second) attrs.push_back(a);
    }
    const bool is_true = owner[i] < C && w.true_words[owner[i]] == id;
    const auto& target = is_true ? centre[owner[i]] : anchor[i];
    for (const auto& a : attrs) {
      const auto base = jitter(rng, target, o.sentence_noise);
      for (const auto& t : o.templates) {
        w.sentences.push_back(fill_template(t, w.vocab[id].name, a));
        const auto v = jitter(rng, base, o.sentence_noise * 0.5);
        sent.insert(sent.end(), v.begin(), v.end());
      }
    }
    w.attributes.attributes[id] = std::move(attrs);
    w.attributes.names[id] = w.vocab[id].name;
  }
  w.attributes.source = "fixture";
  w.sentence_embeddings = EmbeddingMatrix(w.sentences.size(), d, std::move(sent), true);
  return w;
}

void write_planted_world(const PlantedWorld& w, std::size_t k, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_matrix(w.images, dir / "images.emb");
  save_matrix(w.vocab_bank, dir / "vocab.emb");
  save_vocabulary(w.vocab, dir / "vocab.jsonl");
  save_catalog(w.attributes, dir / "attributes.jsonl");
  save_matrix(w.sentence_embeddings, dir / "sentences.emb");
  {
    std::ofstream out(dir / "labels.txt", std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot write " + (dir / "labels.txt").string());
    for (WordId l : w.labels) out << l << '\n';
  }
  {
    std::ofstream out(dir / "sentences.jsonl", std::ios::trunc);
    if (!out) fail(ErrorKind::kIo, "cannot write " + (dir / "sentences.jsonl").string());
    for (const auto& s : w.sentences) out << nlohmann::json{{"text", s}}.dump() << '\n';
  }
  const nlohmann::json cfg = {
      {"paths",
       {{"images", "images.emb"},
        {"vocabulary", "vocab.jsonl"},
        {"vocab_embeddings", "vocab.emb"},
        {"labels", "labels.txt"},
        {"attribute_fixture", "attributes.jsonl"},
        {"sentences", "sentences.jsonl"},
        {"sentence_embeddings", "sentences.emb"}}},
      {"mode", "cvpr"},
      {"k", k},
      {"m", 3},
      {"seed", 0},
      {"train", {{"epochs", 3}}}};
  std::ofstream out(dir / "config.json", std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + (dir / "config.json").string());
  out << cfg.dump(2) << '\n';
}

}  // namespace s3a
