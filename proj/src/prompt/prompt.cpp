#include "s3a/prompt.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include "json.hpp"
#include "s3a/hash.hpp"
#include "s3a/kernels.hpp"

namespace s3a {

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace

PromptCandidate prompt_candidate(const Word& w) {
  PromptCandidate c{w.name, {}};
  for (const auto& s : w.synsets) c.definitions.push_back(s.definition);
  return c;
}

std::string build_prompt(std::span<const PromptCandidate> candidates) {
  require(!candidates.empty(), "build_prompt: no candidates");
  std::string out = "Given visual concepts: ";
  bool first = true;
  for (const auto& c : candidates) {
    require(!c.definitions.empty(), "build_prompt: candidate '" + c.name + "' has no definition");
    for (const auto& def : c.definitions) {
      if (!first) out += ", ";
      out += c.name;
      out += ": ";
      out += def;
      first = false;
    }
  }
  out += ".\n";
  out += kPromptInstruction;
  return out;
}

// ---- fixture client -------------------------------------------------------------

std::unique_ptr<FixtureClient> FixtureClient::from_attributes(
    std::vector<std::pair<std::string, std::vector<std::string>>> by_name) {
  auto table = std::make_shared<decltype(by_name)>(std::move(by_name));
  return std::make_unique<FixtureClient>([table](const std::string& prompt) {
    constexpr std::string_view lead = "Given visual concepts: ";
    const std::size_t start = prompt.find(lead);
    const std::size_t end = prompt.find('\n');
    const std::string concepts =
        start == std::string::npos ? prompt : prompt.substr(start + lead.size(), end - start - lead.size());
    std::vector<std::pair<std::size_t, std::size_t>> found;  // (position, table index)
    for (std::size_t t = 0; t < table->size(); ++t) {
      const std::string& name = (*table)[t].first;
      const std::string needle = name + ": ";
      for (std::size_t pos = concepts.find(needle); pos != std::string::npos;
           pos = concepts.find(needle, pos + 1)) {
        if (pos == 0 || (pos >= 2 && concepts.compare(pos - 2, 2, ", ") == 0)) {
          found.emplace_back(pos, t);
          break;
        }
      }
    }
    std::sort(found.begin(), found.end());
    std::string out;
    for (const auto& [pos, t] : found) {
      out += (*table)[t].first + ":\n";
      for (const auto& a : (*table)[t].second) out += "- " + a + "\n";
      out += "\n";
    }
    return out;
  });
}

// ---- cache ------------------------------------------------------------------------

std::string ResponseCache::key(std::string_view request, std::string_view model) {
  std::string buf(model);
  buf += '\n';
  buf += request;
  return hex64(fnv1a64(buf));
}

ResponseCache::ResponseCache(std::filesystem::path file) : file_(std::move(file)) {
  std::ifstream in(*file_);
  if (!in) return;  // created on first store
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LlmRequestRecord r{j.at("key").get<std::string>(), j.at("model").get<std::string>(),
                         j.at("request").get<std::string>(), j.at("response").get<std::string>(),
                         j.value("timestamp", std::int64_t{0})};
      records_[r.key] = std::move(r);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kFormat, file_->string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::optional<std::string> ResponseCache::lookup(std::string_view request,
                                                 std::string_view model) const {
  std::shared_lock lock(mu_);
  auto it = records_.find(key(request, model));
  if (it == records_.end() || it->second.request != request || it->second.model != model) {
    return std::nullopt;
  }
  return it->second.response;
}

void ResponseCache::store(LlmRequestRecord record) {
  std::unique_lock lock(mu_);
  if (record.key.empty()) record.key = key(record.request, record.model);
  if (file_) {
    std::ofstream out(*file_, std::ios::app);
    if (!out) fail(ErrorKind::kIo, "cannot append to " + file_->string());
    nlohmann::json j = {{"key", record.key},         {"model", record.model},
                        {"request", record.request}, {"response", record.response},
                        {"timestamp", record.timestamp}};
    out << j.dump() << '\n';
  }
  records_[record.key] = std::move(record);
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mu_);
  return records_.size();
}

QueryOutcome query_attributes(const std::string& prompt, LlmClient* client,
                              ResponseCache& cache, std::string_view model) {
  QueryOutcome out;
  if (auto hit = cache.lookup(prompt, model)) {
    out.response = std::move(*hit);
    out.cache_hit = true;
    return out;
  }
  const std::string key = ResponseCache::key(prompt, model);
  if (client == nullptr) {
    fail(ErrorKind::kExternal,
         "LLM cache miss for request " + key +
             " and no client configured; set S3A_LLM_ENDPOINT or provide an attribute "
             "fixture (paths.attribute_fixture) to run offline");
  }
  for (int attempt = 0;; ++attempt) {
    try {
      ++out.client_calls;
      out.response = client->complete(prompt);
      break;
    } catch (const TransportError& e) {
      if (attempt >= 1) {
        fail(ErrorKind::kExternal, "LLM request " + key + " failed after retry: " + e.what());
      }
    }
  }
  const auto now = std::chrono::duration_cast<std::chrono::seconds>(
                       std::chrono::system_clock::now().time_since_epoch())
                       .count();
  cache.store(LlmRequestRecord{key, std::string(model), prompt, out.response, now});
  return out;
}

// ---- attribute parsing ---------------------------------------------------------------

void AttributeCatalog::merge(const AttributeCatalog& other) {
  for (const auto& [w, attrs] : other.attributes) attributes.try_emplace(w, attrs);
  for (const auto& [w, name] : other.names) names.try_emplace(w, name);
  if (source.empty()) source = other.source;
}

namespace {

// Strips a leading list marker; returns true if one was present.
bool strip_bullet(std::string& s) {
  static const std::string kBullet = "\xe2\x80\xa2";
  if (!s.empty() && (s[0] == '-' || s[0] == '*')) {
    if (s.size() >= 2 && s[0] == '*' && s[1] == '*') return false;  // bold, not a bullet
    s = trim(std::string_view(s).substr(1));
    return true;
  }
  if (s.rfind(kBullet, 0) == 0) {
    s = trim(std::string_view(s).substr(kBullet.size()));
    return true;
  }
  std::size_t i = 0;
  while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i;
  if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) {
    s = trim(std::string_view(s).substr(i + 1));
    return true;
  }
  return false;
}

std::string strip_decoration(std::string s) {
  auto junk = [](char c) { return c == '*' || c == '#' || c == '_' || c == '`'; };
  while (!s.empty() && junk(s.front())) s.erase(s.begin());
  while (!s.empty() && junk(s.back())) s.pop_back();
  return trim(s);
}

}  // namespace

AttributeCatalog parse_attributes(std::string_view response,
                                  std::span<const CatalogCandidate> candidates,
                                  ParseReport* report) {
  if (trim(response).empty()) fail(ErrorKind::kFormat, "parse_attributes: empty response");
  ParseReport local;
  ParseReport& rep = report ? *report : local;

  std::map<std::string, std::size_t> by_key;
  for (std::size_t i = 0; i < candidates.size(); ++i) by_key.emplace(normalize_name(candidates[i].name), i);

  std::vector<std::vector<std::string>> phrases(candidates.size());
  std::vector<bool> headed(candidates.size(), false);
  std::size_t current = candidates.size();
  bool any_header = false;

  std::size_t pos = 0;
  while (pos <= response.size()) {
    std::size_t nl = response.find('\n', pos);
    if (nl == std::string_view::npos) nl = response.size();
    std::string line = trim(response.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty()) continue;

    std::string body = line;
    const bool bulleted = strip_bullet(body);
    std::string head = strip_decoration(body);
    if (!head.empty() && head.back() == ':') {
      head.pop_back();
      auto it = by_key.find(normalize_name(strip_decoration(head)));
      if (it != by_key.end()) {
        current = it->second;
        headed[current] = true;
        any_header = true;
        continue;
      }
    }
    if (bulleted && current < candidates.size()) {
      std::string phrase = trim(body);
      if (!phrase.empty() &&
          std::find(phrases[current].begin(), phrases[current].end(), phrase) == phrases[current].end()) {
        phrases[current].push_back(std::move(phrase));
      }
      continue;
    }
    ++rep.ignored_lines;
  }

  if (!any_header) {
    fail(ErrorKind::kFormat, "parse_attributes: no category header matched in response: " +
                                 std::string(response.substr(0, 200)));
  }
  AttributeCatalog cat;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    cat.names[c.word_id] = c.name;
    if (phrases[i].empty()) {
      rep.warnings.push_back("no attributes for '" + c.name + "'" +
                             (headed[i] ? " (empty section)" : " (absent from response)") +
                             "; using fallback");
      cat.attributes[c.word_id] = {std::string(kFallbackAttribute)};
    } else {
      cat.attributes[c.word_id] = std::move(phrases[i]);
    }
  }
  return cat;
}

void save_catalog(const AttributeCatalog& c, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& [w, attrs] : c.attributes) {
    auto name = c.names.find(w);
    nlohmann::json j = {{"word_id", w},
                        {"name", name == c.names.end() ? std::string() : name->second},
                        {"attributes", attrs}};
    out << j.dump() << '\n';
  }
}

AttributeCatalog load_catalog(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  AttributeCatalog c;
  c.source = "fixture";
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const auto w = j.at("word_id").get<WordId>();
      std::vector<std::string> attrs;
      for (const auto& a : j.at("attributes")) {
        std::string t = trim(a.get<std::string>());
        if (!t.empty()) attrs.push_back(std::move(t));
      }
      if (attrs.empty()) {
        fail(ErrorKind::kFormat, path.string() + ": word_id " + std::to_string(w) + " has no attributes");
      }
      c.attributes[w] = std::move(attrs);
      c.names[w] = j.value("name", std::string());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kFormat, path.string() + ": line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

// ---- sentences ----------------------------------------------------------------------

std::string fill_template(std::string_view tmpl, std::string_view category,
                          std::string_view attribute) {
  std::string out;
  for (std::size_t i = 0; i < tmpl.size();) {
    if (tmpl.compare(i, 10, "{category}") == 0) {
      out += category;
      i += 10;
    } else if (tmpl.compare(i, 11, "{attribute}") == 0) {
      out += attribute;
      i += 11;
    } else {
      out += tmpl[i++];
    }
  }
  return out;
}

std::vector<PromptSentence> compose_prompt_sentences(const AttributeCatalog& catalog,
                                                     std::span<const WordId> candidates,
                                                     const Vocabulary& vocab,
                                                     std::span<const std::string> templates) {
  require(!templates.empty(), "compose_prompt_sentences: no templates");
  std::vector<WordId> words(candidates.begin(), candidates.end());
  std::sort(words.begin(), words.end());
  words.erase(std::unique(words.begin(), words.end()), words.end());
  std::vector<PromptSentence> out;
  for (WordId w : words) {
    auto it = catalog.attributes.find(w);
    if (it == catalog.attributes.end()) {
      fail(ErrorKind::kInvalidArgument,
           "compose_prompt_sentences: word " + std::to_string(w) + " is not catalogued");
    }
    require(!it->second.empty(),
            "compose_prompt_sentences: word " + std::to_string(w) + " has an empty attribute list");
    const std::string& name = vocab[w].name;
    for (std::size_t a = 0; a < it->second.size(); ++a) {
      for (std::size_t t = 0; t < templates.size(); ++t) {
        out.push_back({w, a, t, it->second[a], fill_template(templates[t], name, it->second[a])});
      }
    }
  }
  return out;
}

AugmentedTextBank assemble_bank(ClusterId cluster, std::span<const PromptSentence> sentences,
                                const EmbeddingMatrix& emb) {
  require(!sentences.empty(), "assemble_bank: no sentences");
  require(emb.rows() == sentences.size(),
          "assemble_bank: " + std::to_string(emb.rows()) + " embeddings for " +
              std::to_string(sentences.size()) + " sentences");
  const std::size_t d = emb.dim();
  AugmentedTextBank bank;
  bank.cluster_id = cluster;
  std::vector<double> values;
  std::vector<std::size_t> counts;
  std::map<std::pair<WordId, std::size_t>, std::size_t> slot;
  const auto& kt = kernels::active();
  for (std::size_t i = 0; i < sentences.size(); ++i) {
    const auto& s = sentences[i];
    auto [it, fresh] = slot.try_emplace({s.word_id, s.attribute_index}, bank.entries.size());
    if (fresh) {
      bank.entries.push_back({s.word_id, s.attribute_index, s.attribute});
      values.resize(values.size() + d, 0.0);
      counts.push_back(0);
    }
    kt.axpy(1.0, emb.row(i).data(), values.data() + it->second * d, d);
    ++counts[it->second];
  }
  for (std::size_t e = 0; e < bank.entries.size(); ++e) {
    double* r = values.data() + e * d;
    for (std::size_t j = 0; j < d; ++j) r[j] /= static_cast<double>(counts[e]);
    const double norm = std::sqrt(kt.dot(r, r, d));
    if (!(norm > 1e-9)) {
      fail(ErrorKind::kNumeric, "assemble_bank: template embeddings of (word " +
                                    std::to_string(bank.entries[e].word_id) + ", attribute '" +
                                    bank.entries[e].attribute + "') average to zero");
    }
    for (std::size_t j = 0; j < d; ++j) r[j] /= norm;
  }
  bank.embeddings = EmbeddingMatrix(bank.entries.size(), d, std::move(values), true);
  return bank;
}

// ---- encoders -------------------------------------------------------------------------

namespace {
std::string missing_message(const std::vector<std::string>& missing) {
  std::string msg = std::to_string(missing.size()) + " sentence(s) have no precomputed embedding";
  if (!missing.empty()) msg += ", first: \"" + missing.front() + "\"";
  return msg;
}
}  // namespace

MissingSentencesError::MissingSentencesError(std::vector<std::string> missing)
    : Error(ErrorKind::kInvalidArgument, missing_message(missing)), missing_(std::move(missing)) {}

TableEncoder::TableEncoder(std::vector<std::string> sentences, EmbeddingMatrix embeddings)
    : embeddings_(std::move(embeddings)) {
  require(sentences.size() == embeddings_.rows(),
          "TableEncoder: " + std::to_string(sentences.size()) + " sentences for " +
              std::to_string(embeddings_.rows()) + " embedding rows");
  for (std::size_t i = 0; i < sentences.size(); ++i) row_of_.try_emplace(std::move(sentences[i]), i);
}

TableEncoder TableEncoder::from_files(const std::filesystem::path& sentences,
                                      const std::filesystem::path& embeddings) {
  std::ifstream in(sentences);
  if (!in) fail(ErrorKind::kIo, "cannot open " + sentences.string());
  std::vector<std::string> texts;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      texts.push_back(nlohmann::json::parse(line).at("text").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kFormat, sentences.string() + ": " + e.what());
    }
  }
  return TableEncoder(std::move(texts), load_embeddings(embeddings));
}

EmbeddingMatrix TableEncoder::encode(std::span<const std::string> sentences) {
  require(!sentences.empty(), "TableEncoder: nothing to encode");
  std::vector<std::size_t> rows;
  std::vector<std::string> missing;
  for (const auto& s : sentences) {
    auto it = row_of_.find(s);
    if (it == row_of_.end()) {
      missing.push_back(s);
    } else {
      rows.push_back(it->second);
    }
  }
  if (!missing.empty()) throw MissingSentencesError(std::move(missing));
  return embeddings_.select_rows(rows);
}

void save_sentences(std::span<const PromptSentence> sentences, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  for (const auto& s : sentences) {
    nlohmann::json j = {{"word_id", s.word_id},
                        {"attribute_index", s.attribute_index},
                        {"template_index", s.template_index},
                        {"attribute", s.attribute},
                        {"text", s.text}};
    out << j.dump() << '\n';
  }
}

}  // namespace s3a
