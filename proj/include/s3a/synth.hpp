#pragma once
// Planted worlds: synthetic image clouds around known word prototypes, with
// decoy words, attribute fixtures and sentence embeddings, so every stage
// can be checked against exact ground truth offline.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "s3a/embedding.hpp"
#include "s3a/prompt.hpp"

namespace s3a {

struct PlantedWorldOptions {
  std::size_t n = 5000;
  std::size_t dim = 64;
  std::size_t classes = 20;
  std::size_t vocab_size = 500;
  // Share of classes whose image cloud sits nearer a decoy word than its own
  // word, so that nearest-word voting maps the cluster to the decoy.
  double hard_fraction = 0.25;
  double cloud_noise = 0.3;     // spread of images around their class centre
  double sentence_noise = 0.1;  // spread of sentence embeddings
  std::size_t attributes_per_word = 3;
  std::vector<std::string> templates{std::string(kDefaultSentenceTemplate)};
  std::uint64_t seed = 0;
};

struct PlantedWorld {
  EmbeddingMatrix images;        // n x d, unit rows
  EmbeddingMatrix vocab_bank;    // |W| x d, unit rows
  Vocabulary vocab;
  std::vector<WordId> labels;    // true word per instance
  std::vector<std::size_t> class_of;
  std::vector<WordId> true_words;  // per class
  std::vector<WordId> decoys;      // per class, the closest wrong word
  std::vector<bool> hard;          // per class
  AttributeCatalog attributes;     // every word
  std::vector<std::string> sentences;
  EmbeddingMatrix sentence_embeddings;  // row-aligned with `sentences`
};

PlantedWorld make_planted_world(const PlantedWorldOptions& options);

// Writes images.emb, vocab.jsonl, vocab.emb, labels.txt, attributes.jsonl,
// sentences.jsonl, sentences.emb and a ready-to-run config.json into dir.
void write_planted_world(const PlantedWorld& world, std::size_t k,
                         const std::filesystem::path& dir);

}  // namespace s3a
