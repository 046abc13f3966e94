#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "s3a/clustering.hpp"
#include "s3a/embedding.hpp"

namespace s3a {

struct BankEntry {
  WordId word_id = 0;
  std::size_t attribute_index = 0;
  std::string attribute;
};

// Augmented text bank of one cluster: one unit embedding per
// (candidate word, attribute) pair, row-aligned with `entries`.
struct AugmentedTextBank {
  ClusterId cluster_id = 0;
  std::vector<BankEntry> entries;
  EmbeddingMatrix embeddings;
};

}  // namespace s3a
