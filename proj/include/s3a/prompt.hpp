#pragma once
// LLM-guided prompt augmentation: discrimination prompts for a cluster's
// candidate words, a response cache, attribute parsing, and the per-cluster
// augmented text banks built from "(category, attribute)" sentences.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "s3a/embedding.hpp"
#include "s3a/error.hpp"
#include "s3a/text_bank.hpp"

namespace s3a {

inline constexpr std::string_view kPromptInstruction =
    "Goal: to discriminate these visual concepts in a photo. Please list all "
    "possible visual descriptive phrases for each visual concept.";
inline constexpr std::string_view kDefaultSentenceTemplate =
    "A photo of a {category} with {attribute}.";
inline constexpr std::string_view kFallbackAttribute = "distinctive appearance";

struct PromptCandidate {
  std::string name;
  std::vector<std::string> definitions;  // one per synset
};

PromptCandidate prompt_candidate(const Word& w);

// "Given visual concepts: n1: d1, n1: d1', n2: d2." + '\n' + instruction.
std::string build_prompt(std::span<const PromptCandidate> candidates);

// ---- LLM clients ----------------------------------------------------------

class TransportError : public Error {
 public:
  explicit TransportError(const std::string& what) : Error(ErrorKind::kExternal, what) {}
};

// Text in, text out. Implementations must be safe to call concurrently.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const std::string& request) = 0;
  virtual std::string model() const = 0;
};

class FixtureClient : public LlmClient {
 public:
  using Responder = std::function<std::string(const std::string&)>;
  FixtureClient(Responder responder, std::string model = "fixture")
      : responder_(std::move(responder)), model_(std::move(model)) {}

  // Answers with the listed attributes of every catalogued name that appears
  // as a concept in the prompt, in prompt order.
  static std::unique_ptr<FixtureClient> from_attributes(
      std::vector<std::pair<std::string, std::vector<std::string>>> by_name);

  std::string complete(const std::string& request) override { return responder_(request); }
  std::string model() const override { return model_; }

 private:
  Responder responder_;
  std::string model_;
};

struct HttpClientOptions {
  std::string endpoint;  // e.g. https://host/v1/chat/completions
  std::string api_key;
  std::string model;
  double temperature = 0.0;
  double timeout_s = 60.0;
};

// OpenAI-style chat-completions client.
class HttpLlmClient : public LlmClient {
 public:
  explicit HttpLlmClient(HttpClientOptions options);
  // Reads S3A_LLM_ENDPOINT, S3A_LLM_API_KEY, S3A_LLM_MODEL; nullopt if the
  // endpoint is unset.
  static std::optional<HttpClientOptions> options_from_env();

  std::string complete(const std::string& request) override;
  std::string model() const override { return options_.model; }

 private:
  HttpClientOptions options_;
};

// ---- cache ------------------------------------------------------------------

struct LlmRequestRecord {
  std::string key;
  std::string model;
  std::string request;
  std::string response;
  std::int64_t timestamp = 0;
};

// Append-only JSONL of {key, model, request, response, timestamp}. The key is
// fnv1a64(model + '\n' + request) in hex. Concurrent lookups, exclusive
// inserts.
class ResponseCache {
 public:
  ResponseCache() = default;  // in-memory only
  explicit ResponseCache(std::filesystem::path file);

  static std::string key(std::string_view request, std::string_view model);

  std::optional<std::string> lookup(std::string_view request, std::string_view model) const;
  void store(LlmRequestRecord record);
  std::size_t size() const;

 private:
  std::optional<std::filesystem::path> file_;
  mutable std::shared_mutex mu_;
  std::unordered_map<std::string, LlmRequestRecord> records_;
};

struct QueryOutcome {
  std::string response;
  bool cache_hit = false;
  std::size_t client_calls = 0;
};

// Cache first; on a miss calls the client, retrying once on TransportError,
// and persists the record. client may be null (cache-only mode).
QueryOutcome query_attributes(const std::string& prompt, LlmClient* client,
                              ResponseCache& cache, std::string_view model);

// ---- attributes -----------------------------------------------------------------

struct AttributeCatalog {
  std::map<WordId, std::vector<std::string>> attributes;
  std::map<WordId, std::string> names;
  std::string source;  // llm model id | fixture | cache

  void merge(const AttributeCatalog& other);
};

struct CatalogCandidate {
  WordId word_id = 0;
  std::string name;
};

struct ParseReport {
  std::size_t ignored_lines = 0;
  std::vector<std::string> warnings;
};

// Grammar: a header line "<name>:" (optionally bulleted/numbered or wrapped
// in ** or #) opens a category; following lines starting with -, *, a bullet
// or "N." / "N)" add phrases. Other lines are ignored and counted.
AttributeCatalog parse_attributes(std::string_view response,
                                  std::span<const CatalogCandidate> candidates,
                                  ParseReport* report = nullptr);

void save_catalog(const AttributeCatalog& c, const std::filesystem::path& path);
AttributeCatalog load_catalog(const std::filesystem::path& path);

// ---- sentences and banks -----------------------------------------------------------

struct PromptSentence {
  WordId word_id = 0;
  std::size_t attribute_index = 0;
  std::size_t template_index = 0;
  std::string attribute;
  std::string text;
};

std::string fill_template(std::string_view tmpl, std::string_view category,
                          std::string_view attribute);

// All (attribute x template) sentences of the candidates, ordered by
// (word_id, attribute index, template index).
std::vector<PromptSentence> compose_prompt_sentences(const AttributeCatalog& catalog,
                                                     std::span<const WordId> candidates,
                                                     const Vocabulary& vocab,
                                                     std::span<const std::string> templates);

// Mean of each (word, attribute) pair's template embeddings, renormalized.
AugmentedTextBank assemble_bank(ClusterId cluster, std::span<const PromptSentence> sentences,
                                const EmbeddingMatrix& sentence_embeddings);

// Sentence -> unit embedding, standing in for the frozen text encoder.
class SentenceEncoder {
 public:
  virtual ~SentenceEncoder() = default;
  virtual EmbeddingMatrix encode(std::span<const std::string> sentences) = 0;
};

class MissingSentencesError : public Error {
 public:
  explicit MissingSentencesError(std::vector<std::string> missing);
  const std::vector<std::string>& missing() const noexcept { return missing_; }

 private:
  std::vector<std::string> missing_;
};

// Lookup table of precomputed sentence embeddings (row i <-> sentence i).
class TableEncoder : public SentenceEncoder {
 public:
  TableEncoder(std::vector<std::string> sentences, EmbeddingMatrix embeddings);
  // sentences: JSONL with a "text" field per line; embeddings: EMB1.
  static TableEncoder from_files(const std::filesystem::path& sentences,
                                 const std::filesystem::path& embeddings);

  EmbeddingMatrix encode(std::span<const std::string> sentences) override;

 private:
  std::unordered_map<std::string, std::size_t> row_of_;
  EmbeddingMatrix embeddings_;
};

void save_sentences(std::span<const PromptSentence> sentences, const std::filesystem::path& path);

}  // namespace s3a
