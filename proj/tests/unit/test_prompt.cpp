#include <gtest/gtest.h>

#include <atomic>
#include <fstream>

#include "s3a/error.hpp"
#include "s3a/prompt.hpp"
#include "test_util.hpp"

namespace {

using namespace s3a;
using s3a::testing::random_unit;
using s3a::testing::rows_of;
using s3a::testing::TempDir;

TEST(BuildPrompt, TwoConceptsExactString) {
  const std::vector<PromptCandidate> c = {{"tiger", {"large feline"}}, {"lion", {"large tawny cat"}}};
  EXPECT_EQ(build_prompt(c),
            "Given visual concepts: tiger: large feline, lion: large tawny cat.\n"
            "Goal: to discriminate these visual concepts in a photo. Please list all possible "
            "visual descriptive phrases for each visual concept.");
}

TEST(BuildPrompt, SingleConceptAndMultipleSynsets) {
  const std::vector<PromptCandidate> one = {{"crane", {"wading bird", "lifting machine"}}};
  const std::string p = build_prompt(one);
  EXPECT_EQ(p.substr(0, p.find('\n')),
            "Given visual concepts: crane: wading bird, crane: lifting machine.");
  EXPECT_EQ(build_prompt(one), p);
}

TEST(BuildPrompt, Preconditions) {
  EXPECT_THROW(build_prompt(std::vector<PromptCandidate>{}), Error);
  EXPECT_THROW(build_prompt(std::vector<PromptCandidate>{{"x", {}}}), Error);
}

TEST(BuildPrompt, CandidateFromWordUsesAllSynsets) {
  const Word w{3, "bass", {{"fish"}, {"low voice"}}};
  const auto c = prompt_candidate(w);
  EXPECT_EQ(c.name, "bass");
  EXPECT_EQ(c.definitions, (std::vector<std::string>{"fish", "low voice"}));
}

class CountingClient : public LlmClient {
 public:
  int failures_left = 0;
  std::atomic<int> calls{0};
  std::string complete(const std::string& request) override {
    ++calls;
    if (failures_left > 0) {
      --failures_left;
      throw TransportError("connection reset");
    }
    return "reply to " + std::to_string(request.size());
  }
  std::string model() const override { return "m"; }
};

TEST(Cache, PrimedCacheServesWithoutClient) {
  TempDir dir;
  CountingClient client;
  {
    ResponseCache cache(dir / "c.jsonl");
    const auto first = query_attributes("prompt A", &client, cache, "m");
    EXPECT_FALSE(first.cache_hit);
    EXPECT_EQ(first.client_calls, 1u);
  }
  ResponseCache reopened(dir / "c.jsonl");
  const auto again = query_attributes("prompt A", &client, reopened, "m");
  EXPECT_TRUE(again.cache_hit);
  EXPECT_EQ(again.response, "reply to 8");
  EXPECT_EQ(client.calls.load(), 1);
  const auto offline = query_attributes("prompt A", nullptr, reopened, "m");
  EXPECT_EQ(offline.response, again.response);
}

TEST(Cache, KeyIncludesModel) {
  ResponseCache cache;
  cache.store({"", "m1", "req", "r1", 0});
  EXPECT_EQ(cache.lookup("req", "m1"), std::optional<std::string>("r1"));
  EXPECT_FALSE(cache.lookup("req", "m2").has_value());
  EXPECT_NE(ResponseCache::key("req", "m1"), ResponseCache::key("req", "m2"));
}

TEST(Cache, MissWithoutClientExplainsOfflineMode) {
  ResponseCache cache;
  try {
    query_attributes("p", nullptr, cache, "m");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kExternal);
    EXPECT_NE(std::string(e.what()).find("attribute_fixture"), std::string::npos);
  }
}

TEST(Cache, SingleRetryThenFailureCarriesRequestKey) {
  ResponseCache cache;
  CountingClient once;
  once.failures_left = 1;
  const auto r = query_attributes("p", &once, cache, "m");
  EXPECT_EQ(r.client_calls, 2u);
  CountingClient twice;
  twice.failures_left = 2;
  try {
    query_attributes("q", &twice, cache, "m");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find(ResponseCache::key("q", "m")), std::string::npos);
  }
  EXPECT_EQ(twice.calls.load(), 2);
  EXPECT_FALSE(cache.lookup("q", "m").has_value());
}

TEST(Cache, CorruptFileIsFormatError) {
  TempDir dir;
  std::ofstream(dir / "c.jsonl") << "{not json\n";
  try {
    ResponseCache cache(dir / "c.jsonl");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kFormat);
  }
}

TEST(Fixture, AnswersForConceptsInPromptOrder) {
  auto client = FixtureClient::from_attributes({{"lion", {"mane"}}, {"tiger", {"stripes"}}, {"cat", {"whiskers"}}});
  const std::vector<PromptCandidate> c = {{"tiger", {"big cat"}}, {"lion", {"tawny"}}};
  EXPECT_EQ(client->complete(build_prompt(c)), "tiger:\n- stripes\n\nlion:\n- mane\n\n");
}

const std::vector<CatalogCandidate> kTigerLion = {{4, "tiger"}, {9, "lion"}};

TEST(Parse, ExampleResponse) {
  const auto cat = parse_attributes("tiger:\n- red-and-black tail\n- striped coat", std::span(kTigerLion.data(), 1));
  EXPECT_EQ(cat.attributes.at(4), (std::vector<std::string>{"red-and-black tail", "striped coat"}));
}

TEST(Parse, MissingCandidateGetsFallbackAndWarning) {
  ParseReport rep;
  const auto cat = parse_attributes("Tiger:\n- striped coat\n", kTigerLion, &rep);
  EXPECT_EQ(cat.attributes.at(9), (std::vector<std::string>{std::string(kFallbackAttribute)}));
  ASSERT_EQ(rep.warnings.size(), 1u);
  EXPECT_NE(rep.warnings[0].find("lion"), std::string::npos);
}

TEST(Parse, DecoratedHeadersNumberedBulletsAndNoise) {
  ParseReport rep;
  const std::string text =
      "Sure! Here are the phrases.\n"
      "**Tiger:**\n"
      "1. orange fur\n"
      "2) black stripes\n"
      "* orange fur\n"
      "## lion:\n"
      "\xe2\x80\xa2 golden mane\n"
      "- tufted tail\n"
      "Hope this helps\n";
  const auto cat = parse_attributes(text, kTigerLion, &rep);
  EXPECT_EQ(cat.attributes.at(4), (std::vector<std::string>{"orange fur", "black stripes"}));
  EXPECT_EQ(cat.attributes.at(9), (std::vector<std::string>{"golden mane", "tufted tail"}));
  EXPECT_EQ(rep.ignored_lines, 2u);
  EXPECT_TRUE(rep.warnings.empty());
}

TEST(Parse, EmptyAndHeaderlessResponsesFail) {
  EXPECT_THROW(parse_attributes("", kTigerLion), Error);
  EXPECT_THROW(parse_attributes("   \n  ", kTigerLion), Error);
  const std::string junk(300, 'z');
  try {
    parse_attributes(junk, kTigerLion);
    FAIL();
  } catch (const Error& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(std::string(200, 'z')), std::string::npos);
    EXPECT_EQ(msg.find(std::string(201, 'z')), std::string::npos);
  }
}

TEST(Catalog, FileRoundTrip) {
  TempDir dir;
  AttributeCatalog c;
  c.attributes[2] = {"a", "b"};
  c.names[2] = "w2";
  save_catalog(c, dir / "cat.jsonl");
  const auto back = load_catalog(dir / "cat.jsonl");
  EXPECT_EQ(back.attributes, c.attributes);
  EXPECT_EQ(back.names, c.names);
  std::ofstream(dir / "bad.jsonl") << R"({"word_id": 1, "name": "x", "attributes": []})" << '\n';
  EXPECT_THROW(load_catalog(dir / "bad.jsonl"), Error);
}

TEST(Catalog, MergeKeepsExistingEntries) {
  AttributeCatalog a, b;
  a.attributes[1] = {"x"};
  b.attributes[1] = {"y"};
  b.attributes[2] = {"z"};
  a.merge(b);
  EXPECT_EQ(a.attributes[1], (std::vector<std::string>{"x"}));
  EXPECT_EQ(a.attributes[2], (std::vector<std::string>{"z"}));
}

TEST(Sentences, FillTemplate) {
  EXPECT_EQ(fill_template(kDefaultSentenceTemplate, "tiger", "striped coat"),
            "A photo of a tiger with striped coat.");
  EXPECT_EQ(fill_template("{attribute} {category} {x}", "c", "a"), "a c {x}");
}

TEST(Sentences, OneWordTwoAttributes) {
  const auto vocab = s3a::testing::simple_vocab(3);
  AttributeCatalog cat;
  cat.attributes[1] = {"red", "blue"};
  const std::vector<std::string> t = {std::string(kDefaultSentenceTemplate)};
  const auto s = compose_prompt_sentences(cat, std::vector<WordId>{1}, vocab, t);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].text, "A photo of a w1 with red.");
  EXPECT_EQ(s[1].text, "A photo of a w1 with blue.");
}

TEST(Sentences, CountAndOrder) {
  const auto vocab = s3a::testing::simple_vocab(10);
  AttributeCatalog cat;
  for (WordId w : {2u, 5u, 7u}) cat.attributes[w] = {"a0", "a1", "a2"};
  const std::vector<std::string> t = {"T0 {category} {attribute}", "T1 {category} {attribute}"};
  const auto s = compose_prompt_sentences(cat, std::vector<WordId>{7, 2, 5}, vocab, t);
  ASSERT_EQ(s.size(), 18u);
  for (std::size_t i = 1; i < s.size(); ++i) {
    const auto a = std::tuple(s[i - 1].word_id, s[i - 1].attribute_index, s[i - 1].template_index);
    const auto b = std::tuple(s[i].word_id, s[i].attribute_index, s[i].template_index);
    EXPECT_LT(a, b);
  }
  EXPECT_EQ(s[0].text, "T0 w2 a0");
  EXPECT_EQ(s[17].text, "T1 w7 a2");
}

TEST(Sentences, UncataloguedOrEmptyFails) {
  const auto vocab = s3a::testing::simple_vocab(3);
  AttributeCatalog cat;
  cat.attributes[0] = {};
  const std::vector<std::string> t = {std::string(kDefaultSentenceTemplate)};
  EXPECT_THROW(compose_prompt_sentences(cat, std::vector<WordId>{1}, vocab, t), Error);
  EXPECT_THROW(compose_prompt_sentences(cat, std::vector<WordId>{0}, vocab, t), Error);
}

std::vector<PromptSentence> pair_sentences(std::size_t pairs, std::size_t templates) {
  std::vector<PromptSentence> s;
  for (std::size_t p = 0; p < pairs; ++p)
    for (std::size_t t = 0; t < templates; ++t)
      s.push_back({static_cast<WordId>(p / 2), p % 2, t, "attr" + std::to_string(p % 2), "s"});
  return s;
}

TEST(Bank, DuplicateTemplatesGiveSameUnitVector) {
  const auto e = rows_of(3, {{1, 2, 2}, {1, 2, 2}});
  const auto bank = assemble_bank(0, pair_sentences(1, 2), e);
  ASSERT_EQ(bank.embeddings.rows(), 1u);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(bank.embeddings.row(0)[j], e.row(0)[j], 1e-15);
}

TEST(Bank, AntipodalTemplatesFailNamingThePair) {
  const auto e = rows_of(2, {{1, 0}, {-1, 0}});
  try {
    assemble_bank(0, pair_sentences(1, 2), e);
    FAIL();
  } catch (const Error& err) {
    EXPECT_EQ(err.kind(), ErrorKind::kNumeric);
    EXPECT_NE(std::string(err.what()).find("attr0"), std::string::npos);
  }
}

TEST(Bank, RowCountMismatchFails) {
  EXPECT_THROW(assemble_bank(0, pair_sentences(2, 2), random_unit(3, 4, 1)), Error);
}

TEST(Bank, MatchesMeanThenNormalizeOracle) {
  const std::size_t pairs = 5, templates = 3, d = 16;
  const auto e = random_unit(pairs * templates, d, 42);
  const auto bank = assemble_bank(7, pair_sentences(pairs, templates), e);
  ASSERT_EQ(bank.embeddings.rows(), pairs);
  EXPECT_EQ(bank.cluster_id, 7u);
  for (std::size_t p = 0; p < pairs; ++p) {
    std::vector<double> mean(d, 0.0);
    for (std::size_t t = 0; t < templates; ++t)
      for (std::size_t j = 0; j < d; ++j) mean[j] += e.row(p * templates + t)[j] / templates;
    double norm = 0.0;
    for (double v : mean) norm += v * v;
    norm = std::sqrt(norm);
    for (std::size_t j = 0; j < d; ++j) EXPECT_NEAR(bank.embeddings.row(p)[j], mean[j] / norm, 1e-6);
    EXPECT_EQ(bank.entries[p].word_id, p / 2);
    EXPECT_EQ(bank.entries[p].attribute_index, p % 2);
  }
}

TEST(Encoder, LookupAndMissingList) {
  TableEncoder enc({"a", "b", "c"}, random_unit(3, 4, 9));
  const std::vector<std::string> want = {"c", "a"};
  const auto m = enc.encode(want);
  EXPECT_EQ(m.rows(), 2u);
  try {
    const std::vector<std::string> q = {"a", "zz", "yy"};
    enc.encode(q);
    FAIL();
  } catch (const MissingSentencesError& e) {
    EXPECT_EQ(e.missing(), (std::vector<std::string>{"zz", "yy"}));
  }
}

TEST(Encoder, FromFiles) {
  TempDir dir;
  std::vector<PromptSentence> s = {{0, 0, 0, "x", "first"}, {1, 0, 0, "y", "second"}};
  save_sentences(s, dir / "s.jsonl");
  save_matrix(random_unit(2, 5, 3), dir / "s.emb");
  auto enc = TableEncoder::from_files(dir / "s.jsonl", dir / "s.emb");
  const std::vector<std::string> q = {"second"};
  EXPECT_EQ(enc.encode(q).rows(), 1u);
  save_matrix(random_unit(3, 5, 3), dir / "t.emb");
  EXPECT_THROW(TableEncoder::from_files(dir / "s.jsonl", dir / "t.emb"), Error);
}

}  // namespace
