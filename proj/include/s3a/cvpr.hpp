#pragma once
// Cluster -> Vote -> Prompt -> Realign, plus the reduced baselines obtained
// by switching stages off.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "s3a/alignment.hpp"
#include "s3a/clustering.hpp"
#include "s3a/embedding.hpp"
#include "s3a/prompt.hpp"

namespace s3a {

enum class CvprMode {
  kZeroShot,  // nearest word per instance
  kGroup,     // k-means + vote + Hungarian
  kScd,       // iterative vote/match/reassign
  kCvpr,      // iterative, then prompt-augmented realignment
};

CvprMode parse_mode(std::string_view s);
std::string_view mode_name(CvprMode m);

enum class PromptStyle {
  kJoint,   // one prompt per cluster covering all its candidates
  kSingle,  // one prompt per candidate word
};

struct CvprConfig {
  CvprMode mode = CvprMode::kCvpr;
  std::size_t k = 0;  // used unless estimate_k
  bool estimate_k = false;
  KEstimateOptions k_options;
  std::size_t m = 3;
  std::uint64_t seed = 0;
  std::size_t max_iter = 50;
  KMeansOptions kmeans;
  PromptStyle prompt_style = PromptStyle::kJoint;
  std::vector<std::string> templates{std::string(kDefaultSentenceTemplate)};
  std::size_t max_in_flight = 4;
};

// External collaborators of the prompt stage. `catalog` persists across
// calls: words already catalogued are never prompted again.
struct PromptResources {
  LlmClient* client = nullptr;
  ResponseCache* cache = nullptr;
  std::string model = "fixture";
  SentenceEncoder* encoder = nullptr;
  AttributeCatalog* catalog = nullptr;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct CvprReport {
  CvprMode mode = CvprMode::kCvpr;
  std::size_t k = 0;
  std::size_t iterations = 0;
  bool converged = false;
  bool cycled = false;
  std::size_t repairs = 0;
  std::size_t prompts = 0;
  std::size_t cache_hits = 0;
  std::size_t client_calls = 0;
  std::size_t ignored_lines = 0;
  std::vector<std::string> warnings;
  std::vector<std::size_t> padded_clusters;
  std::vector<StageTiming> timings;
};

struct CvprResult {
  StructuralLabels labels;
  std::vector<WordId> nn_word;  // zero-shot nearest word
  std::optional<ClusterPartition> partition;
  std::optional<KEstimate> k_estimate;
  std::optional<VoteResult> vote;         // M and candidates on the final partition
  std::optional<AssignmentMap> vote_map;  // Hungarian on M
  std::optional<RealignResult> realigned;
  std::vector<PromptSentence> sentences;
  CvprReport report;
};

CvprResult run_cvpr(const EmbeddingMatrix& x, const Vocabulary& vocab,
                    const EmbeddingMatrix& vocab_bank, const CvprConfig& config,
                    const PromptResources& prompt = {});

}  // namespace s3a
