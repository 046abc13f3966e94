#include "s3a/embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"
#include "s3a/error.hpp"
#include "s3a/kernels.hpp"
#include "s3a/parallel.hpp"

namespace s3a {

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::size_t kHeaderBytes = 24;

void check_finite(const std::vector<double>& v, const std::string& what) {
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!std::isfinite(v[i])) {
      fail(ErrorKind::kNumeric,
           what + ": non-finite value at flat index " + std::to_string(i));
    }
  }
}

std::uint64_t read_u64_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void write_u64_le(unsigned char* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    p[i] = static_cast<unsigned char>(v & 0xff);
    v >>= 8;
  }
}

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xff) << 24) | ((v & 0xff00) << 8) | ((v >> 8) & 0xff00) |
         (v >> 24);
}

}  // namespace

// ---- EmbeddingMatrix ------------------------------------------------------

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim)
    : rows_(rows), dim_(dim), data_(rows * dim, 0.0) {
  require(rows >= 1 && dim >= 1, "EmbeddingMatrix: empty shape");
}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dim,
                                 std::vector<double> data, bool normalized)
    : rows_(rows), dim_(dim), data_(std::move(data)), normalized_(normalized) {
  require(rows >= 1 && dim >= 1, "EmbeddingMatrix: empty shape");
  require(data_.size() == rows * dim,
          "EmbeddingMatrix: data size " + std::to_string(data_.size()) +
              " != " + std::to_string(rows) + "x" + std::to_string(dim));
  check_finite(data_, "EmbeddingMatrix");
}

EmbeddingMatrix EmbeddingMatrix::select_rows(
    std::span<const std::size_t> indices) const {
  require(!indices.empty(), "select_rows: no rows requested");
  std::vector<double> out;
  out.reserve(indices.size() * dim_);
  for (std::size_t i : indices) {
    require(i < rows_, "select_rows: row index out of range");
    auto r = row(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return EmbeddingMatrix(indices.size(), dim_, std::move(out), normalized_);
}

// ---- EMB1 ------------------------------------------------------------------

EmbeddingMatrix load_matrix(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (bytes.size() < kHeaderBytes) {
    fail(ErrorKind::kFormat, where + "shorter than the 24-byte EMB1 header");
  }
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    fail(ErrorKind::kFormat, where + "bad magic (expected EMB1)");
  }
  if (bytes[4] != 1) {
    fail(ErrorKind::kFormat,
         where + "unsupported version " + std::to_string(bytes[4]));
  }
  if (bytes[5] > 1) fail(ErrorKind::kFormat, where + "normalized flag not 0/1");
  if (bytes[6] != 0 || bytes[7] != 0) {
    fail(ErrorKind::kFormat, where + "reserved header bytes not zero");
  }
  const std::uint64_t n = read_u64_le(bytes.data() + 8);
  const std::uint64_t d = read_u64_le(bytes.data() + 16);
  if (n == 0 || d == 0) fail(ErrorKind::kFormat, where + "zero n or d");
  if (d > (std::uint64_t{1} << 40) / n) {
    fail(ErrorKind::kFormat, where + "declared shape overflows");
  }
  const std::uint64_t payload = n * d * 4;
  if (bytes.size() - kHeaderBytes != payload) {
    fail(ErrorKind::kFormat,
         where + "declared size " + std::to_string(payload) +
             " bytes != payload " + std::to_string(bytes.size() - kHeaderBytes));
  }
  std::vector<double> data(n * d);
  const unsigned char* p = bytes.data() + kHeaderBytes;
  for (std::size_t i = 0; i < data.size(); ++i, p += 4) {
    std::uint32_t raw;
    std::memcpy(&raw, p, 4);
    const float f = std::bit_cast<float>(to_le(raw));
    if (!std::isfinite(f)) {
      fail(ErrorKind::kFormat,
           where + "non-finite payload value at flat index " + std::to_string(i));
    }
    data[i] = f;
  }
  return EmbeddingMatrix(n, d, std::move(data), bytes[5] == 1);
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path) {
  EmbeddingMatrix m = load_matrix(path);
  if (!m.normalized()) {
    l2_normalize_in_place(m);
    return m;
  }
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const double norm = std::sqrt(kernels::dot(m.row(i), m.row(i)));
    if (std::abs(norm - 1.0) > 1e-5) {
      fail(ErrorKind::kFormat, path.string() + ": row " + std::to_string(i) +
                                   " flagged normalized but has norm " +
                                   std::to_string(norm));
    }
  }
  return m;
}

void save_matrix(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  std::vector<unsigned char> bytes(kHeaderBytes + m.values().size() * 4);
  std::memcpy(bytes.data(), kMagic, 4);
  bytes[4] = 1;
  bytes[5] = m.normalized() ? 1 : 0;
  write_u64_le(bytes.data() + 8, m.rows());
  write_u64_le(bytes.data() + 16, m.dim());
  unsigned char* p = bytes.data() + kHeaderBytes;
  for (double v : m.values()) {
    const std::uint32_t raw = to_le(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    std::memcpy(p, &raw, 4);
    p += 4;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorKind::kIo, "short write to " + path.string());
}

// ---- Vocabulary -------------------------------------------------------------

std::string normalize_name(std::string_view name) {
  auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
  std::size_t b = 0, e = name.size();
  while (b < e && is_space(name[b])) ++b;
  while (e > b && is_space(name[e - 1])) --e;
  std::string out(name.substr(b, e - b));
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

Vocabulary::Vocabulary(std::vector<Word> words) : words_(std::move(words)) {
  by_key_.reserve(words_.size());
  for (std::size_t i = 0; i < words_.size(); ++i) {
    if (words_[i].id != i) {
      fail(ErrorKind::kFormat, "vocabulary: word_id " +
                                   std::to_string(words_[i].id) +
                                   " at position " + std::to_string(i));
    }
    std::string key = normalize_name(words_[i].name);
    if (key.empty()) {
      fail(ErrorKind::kFormat, "vocabulary: empty name for word_id " + std::to_string(i));
    }
    by_key_.emplace_back(std::move(key), static_cast<WordId>(i));
  }
  std::sort(by_key_.begin(), by_key_.end());
  for (std::size_t i = 1; i < by_key_.size(); ++i) {
    if (by_key_[i].first == by_key_[i - 1].first) {
      fail(ErrorKind::kFormat, "vocabulary: duplicate name '" + by_key_[i].first +
                                   "' (word_ids " +
                                   std::to_string(by_key_[i - 1].second) + ", " +
                                   std::to_string(by_key_[i].second) + ")");
    }
  }
}

bool Vocabulary::find(std::string_view name, WordId& out) const {
  const std::string key = normalize_name(name);
  auto it = std::lower_bound(
      by_key_.begin(), by_key_.end(), key,
      [](const auto& entry, const std::string& k) { return entry.first < k; });
  if (it == by_key_.end() || it->first != key) return false;
  out = it->second;
  return true;
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::kIo, "cannot open " + path.string());
  std::vector<Word> words;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) {
      fail(ErrorKind::kFormat, path.string() + ": blank line " + std::to_string(lineno + 1));
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      Word w;
      const auto id = j.at("word_id").get<std::int64_t>();
      if (id != static_cast<std::int64_t>(lineno)) {
        fail(ErrorKind::kFormat, path.string() + ": line " + std::to_string(lineno + 1) +
                                     " has word_id " + std::to_string(id));
      }
      w.id = static_cast<WordId>(id);
      w.name = j.at("name").get<std::string>();
      for (const auto& s : j.at("synsets")) {
        w.synsets.push_back({s.at("definition").get<std::string>()});
      }
      words.push_back(std::move(w));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kFormat, path.string() + ": line " + std::to_string(lineno + 1) +
                                   ": " + e.what());
    }
    ++lineno;
  }
  if (words.empty()) fail(ErrorKind::kFormat, path.string() + ": empty vocabulary");
  return Vocabulary(std::move(words));
}

void save_vocabulary(const Vocabulary& v, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::kIo, "cannot write " + path.string());
  for (const Word& w : v.words()) {
    nlohmann::json syn = nlohmann::json::array();
    for (const Synset& s : w.synsets) syn.push_back({{"definition", s.definition}});
    nlohmann::json j = {{"word_id", w.id}, {"name", w.name}, {"synsets", syn}};
    out << j.dump() << '\n';
  }
}

// ---- normalization ------------------------------------------------------------

void l2_normalize_in_place(EmbeddingMatrix& m) {
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto r = m.row(i);
    const double norm = std::sqrt(k.dot(r.data(), r.data(), r.size()));
    if (!(norm > 0.0)) {
      fail(ErrorKind::kNumeric, "l2_normalize: row " + std::to_string(i) + " has zero norm");
    }
    for (double& x : r) x /= norm;
  }
  m.set_normalized(true);
}

EmbeddingMatrix l2_normalize(const EmbeddingMatrix& m) {
  EmbeddingMatrix out = m;
  l2_normalize_in_place(out);
  return out;
}

// ---- search ---------------------------------------------------------------------

namespace {

constexpr std::size_t kQueryBlock = 64;
constexpr std::size_t kBankBlock = 240;

void check_search_inputs(const EmbeddingMatrix& q, const EmbeddingMatrix& bank) {
  require(q.normalized() && bank.normalized(),
          "nearest: query and bank matrices must be normalized");
  require(q.dim() == bank.dim(), "nearest: dimension mismatch (" +
                                     std::to_string(q.dim()) + " vs " +
                                     std::to_string(bank.dim()) + ")");
}

// Streams the bank past a block of queries; visit(query, bank_index, score)
// sees bank indices in increasing order for every query.
template <typename Visit>
void scan_blocks(const EmbeddingMatrix& q, const EmbeddingMatrix& bank,
                 std::size_t q_begin, std::size_t q_end, Visit&& visit) {
  const auto& k = kernels::active();
  const std::size_t d = q.dim();
  std::vector<double> scores(kQueryBlock * kBankBlock);
  for (std::size_t qb = q_begin; qb < q_end; qb += kQueryBlock) {
    const std::size_t nq = std::min(kQueryBlock, q_end - qb);
    for (std::size_t bb = 0; bb < bank.rows(); bb += kBankBlock) {
      const std::size_t nb = std::min(kBankBlock, bank.rows() - bb);
      k.gram(q.data() + qb * d, nq, bank.data() + bb * d, nb, d, scores.data(),
             kBankBlock);
      for (std::size_t i = 0; i < nq; ++i) {
        const double* row = scores.data() + i * kBankBlock;
        for (std::size_t j = 0; j < nb; ++j) visit(qb + i, bb + j, row[j]);
      }
    }
  }
}

}  // namespace

std::vector<std::vector<NearestResult>> nearest(const EmbeddingMatrix& queries,
                                                const EmbeddingMatrix& bank,
                                                std::size_t k) {
  check_search_inputs(queries, bank);
  require(k >= 1 && k <= bank.rows(),
          "nearest: k=" + std::to_string(k) + " outside [1, " +
              std::to_string(bank.rows()) + "]");
  std::vector<std::vector<NearestResult>> out(queries.rows());
  for (auto& v : out) v.reserve(k);
  parallel_for(queries.rows(), kQueryBlock, [&](std::size_t b, std::size_t e) {
    scan_blocks(queries, bank, b, e, [&](std::size_t qi, std::size_t j, double s) {
      auto& top = out[qi];
      if (top.size() == k && !(s > top.back().similarity)) return;
      // Insert after every entry with similarity >= s: equal scores keep the
      // earlier (lower) index in front.
      auto pos = std::upper_bound(
          top.begin(), top.end(), s,
          [](double v, const NearestResult& r) { return v > r.similarity; });
      if (top.size() == k) top.pop_back();
      top.insert(pos, NearestResult{static_cast<WordId>(j), s});
    });
  });
  return out;
}

std::vector<NearestResult> nearest_one(const EmbeddingMatrix& queries,
                                       const EmbeddingMatrix& bank) {
  check_search_inputs(queries, bank);
  std::vector<NearestResult> best(
      queries.rows(), NearestResult{0, -std::numeric_limits<double>::infinity()});
  parallel_for(queries.rows(), kQueryBlock, [&](std::size_t b, std::size_t e) {
    scan_blocks(queries, bank, b, e, [&](std::size_t qi, std::size_t j, double s) {
      if (s > best[qi].similarity) best[qi] = NearestResult{static_cast<WordId>(j), s};
    });
  });
  return best;
}

std::vector<double> similarity_matrix(const EmbeddingMatrix& queries,
                                      const EmbeddingMatrix& bank) {
  require(queries.dim() == bank.dim(), "similarity_matrix: dimension mismatch");
  std::vector<double> out(queries.rows() * bank.rows());
  const auto& k = kernels::active();
  const std::size_t d = queries.dim();
  parallel_for(queries.rows(), kQueryBlock, [&](std::size_t b, std::size_t e) {
    k.gram(queries.data() + b * d, e - b, bank.data(), bank.rows(), d,
           out.data() + b * bank.rows(), bank.rows());
  });
  return out;
}

std::vector<double> text_knn_similarity_stats(const EmbeddingMatrix& bank,
                                              std::size_t k) {
  require(k >= 1, "text_knn_similarity_stats: k must be >= 1");
  require(bank.rows() > k, "text_knn_similarity_stats: bank has " +
                               std::to_string(bank.rows()) + " rows, needs > k=" +
                               std::to_string(k));
  const auto hits = nearest(bank, bank, k + 1);
  std::vector<double> out(bank.rows());
  for (std::size_t i = 0; i < bank.rows(); ++i) {
    double sum = 0.0;
    std::size_t used = 0;
    for (const auto& h : hits[i]) {
      if (h.index == i || used == k) continue;
      sum += h.similarity;
      ++used;
    }
    out[i] = sum / static_cast<double>(k);
  }
  return out;
}

}  // namespace s3a
