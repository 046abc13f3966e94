#pragma once
// Command-line front end: config files, run directories and the
// zeroshot / cvpr / train / eval / synth subcommands.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "s3a/cvpr.hpp"
#include "s3a/embedding.hpp"
#include "s3a/error.hpp"
#include "s3a/metrics.hpp"
#include "s3a/selftrain.hpp"

namespace s3a::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPipeline = 1;
inline constexpr int kExitUsage = 2;

// Bad flags, malformed config, or missing inputs.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(ErrorKind::kInvalidArgument, what) {}
};

struct Paths {
  std::filesystem::path images;
  std::filesystem::path vocabulary;
  std::filesystem::path vocab_embeddings;
  std::filesystem::path labels;
  std::filesystem::path attribute_fixture;
  std::filesystem::path llm_cache;
  std::filesystem::path sentences;
  std::filesystem::path sentence_embeddings;
  std::filesystem::path similarity;
  std::filesystem::path predictions;
};

struct PromptSettings {
  std::string model;  // empty: taken from the client
  double temperature = 0.0;
  double timeout_s = 60.0;
};

struct RunConfig {
  Paths paths;  // absolute after loading
  CvprConfig cvpr;
  TrainConfig train;
  PromptSettings prompt;
  std::size_t threads = 1;
  std::filesystem::path out;
};

// Reads a JSON config, or the "config" object of a run manifest. Relative
// paths resolve against the file's directory. Throws ConfigError.
RunConfig load_config(const std::filesystem::path& path);
RunConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir);

// Fully resolved config as JSON (the form stored in manifests).
std::string config_to_json(const RunConfig& c);

// One label per line: an integer word id or a word name. Names outside the
// vocabulary get fresh ids from vocab.size() upward, in order of first
// appearance, and are listed in *oov (indexed by id - vocab.size()).
std::vector<Label> read_labels(const std::filesystem::path& path, const Vocabulary& vocab,
                               std::vector<std::string>* oov = nullptr);

// Entry point; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace s3a::cli
