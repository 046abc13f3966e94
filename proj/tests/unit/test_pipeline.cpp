#include <gtest/gtest.h>

#include "s3a/error.hpp"
#include "s3a/cvpr.hpp"
#include "s3a/metrics.hpp"
#include "s3a/synth.hpp"
#include "test_util.hpp"

namespace {

using namespace s3a;

double accuracy(std::span<const WordId> a, std::span<const WordId> b) {
  return top1_accuracy(std::vector<Label>(a.begin(), a.end()), std::vector<Label>(b.begin(), b.end()));
}

class PlantedPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    PlantedWorldOptions o;
    o.n = 2000;
    o.seed = 7;
    world_ = new PlantedWorld(make_planted_world(o));
  }
  static void TearDownTestSuite() {
    delete world_;
    world_ = nullptr;
  }

  CvprResult run(CvprMode mode, LlmClient* client = nullptr, AttributeCatalog* catalog = nullptr,
                 ResponseCache* cache = nullptr, PromptStyle style = PromptStyle::kJoint) {
    CvprConfig cfg;
    cfg.mode = mode;
    cfg.k = world_->true_words.size();
    cfg.prompt_style = style;
    TableEncoder enc(world_->sentences, world_->sentence_embeddings);
    AttributeCatalog all = world_->attributes;
    PromptResources pr;
    pr.encoder = &enc;
    pr.client = client;
    pr.cache = cache;
    pr.catalog = catalog ? catalog : &all;
    return run_cvpr(world_->images, world_->vocab, world_->vocab_bank, cfg, pr);
  }

  static PlantedWorld* world_;
};

PlantedWorld* PlantedPipeline::world_ = nullptr;

TEST_F(PlantedPipeline, StageOrdering) {
  const auto zs = run(CvprMode::kZeroShot);
  const auto group = run(CvprMode::kGroup);
  const auto scd = run(CvprMode::kScd);
  const auto cvpr = run(CvprMode::kCvpr);
  const double a_group = accuracy(group.labels.labels, world_->labels);
  const double a_scd = accuracy(scd.labels.labels, world_->labels);
  const double a_cvpr = accuracy(cvpr.labels.labels, world_->labels);
  EXPECT_GE(a_cvpr, a_scd);
  EXPECT_GE(a_scd, a_group);
  EXPECT_GE(a_cvpr, 0.99);
  EXPECT_LT(accuracy(zs.labels.labels, world_->labels), a_cvpr);
}

TEST_F(PlantedPipeline, ZeroShotIsNearestWord) {
  const auto r = run(CvprMode::kZeroShot);
  EXPECT_FALSE(r.partition.has_value());
  const auto nn = nearest_one(world_->images, world_->vocab_bank);
  for (std::size_t i = 0; i < nn.size(); ++i) EXPECT_EQ(r.labels.labels[i], nn[i].index);
}

TEST_F(PlantedPipeline, ReducedModesSkipLaterStages) {
  const auto group = run(CvprMode::kGroup);
  EXPECT_EQ(group.report.iterations, 1u);
  EXPECT_FALSE(group.realigned.has_value());
  const auto scd = run(CvprMode::kScd);
  EXPECT_FALSE(scd.realigned.has_value());
  EXPECT_TRUE(scd.sentences.empty());
  ASSERT_TRUE(scd.vote.has_value());
  EXPECT_EQ(scd.vote->candidates.m, 3u);
  EXPECT_EQ(scd.labels.partition_hash, scd.partition->hash());
}

TEST_F(PlantedPipeline, CatalogedWordsAreNotPrompted) {
  ResponseCache cache;
  const auto r = run(CvprMode::kCvpr, nullptr, nullptr, &cache);
  EXPECT_EQ(r.report.prompts, 0u);
  ASSERT_TRUE(r.realigned.has_value());
  EXPECT_FALSE(r.sentences.empty());
}

TEST_F(PlantedPipeline, FixtureClientThenCacheOnRerun) {
  std::vector<std::pair<std::string, std::vector<std::string>>> table;
  for (const auto& [w, attrs] : world_->attributes.attributes) table.emplace_back(world_->vocab[w].name, attrs);
  auto client = FixtureClient::from_attributes(table);
  ResponseCache cache;
  AttributeCatalog first;
  const auto a = run(CvprMode::kCvpr, client.get(), &first, &cache);
  EXPECT_GT(a.report.prompts, 0u);
  EXPECT_LE(a.report.prompts, world_->true_words.size());
  EXPECT_EQ(a.report.client_calls, a.report.prompts);
  EXPECT_TRUE(a.report.warnings.empty());
  AttributeCatalog second;
  const auto b = run(CvprMode::kCvpr, nullptr, &second, &cache);
  EXPECT_EQ(b.report.cache_hits, b.report.prompts);
  EXPECT_EQ(b.report.client_calls, 0u);
  EXPECT_EQ(a.labels.labels, b.labels.labels);
  AttributeCatalog single;
  ResponseCache cache2;
  const auto c = run(CvprMode::kCvpr, client.get(), &single, &cache2, PromptStyle::kSingle);
  EXPECT_GT(c.report.prompts, a.report.prompts);
  EXPECT_EQ(c.labels.labels, a.labels.labels);
}

TEST_F(PlantedPipeline, CvprNeedsEncoder) {
  CvprConfig cfg;
  cfg.k = 20;
  EXPECT_THROW(run_cvpr(world_->images, world_->vocab, world_->vocab_bank, cfg, {}), Error);
}

TEST_F(PlantedPipeline, EstimateKRoutesThroughClustering) {
  CvprConfig cfg;
  cfg.mode = CvprMode::kScd;
  cfg.estimate_k = true;
  cfg.k_options.lb0 = 5;
  cfg.k_options.ub0 = 100;
  const auto r = run_cvpr(world_->images, world_->vocab, world_->vocab_bank, cfg);
  ASSERT_TRUE(r.k_estimate.has_value());
  EXPECT_EQ(r.report.k, r.k_estimate->k_hat);
  EXPECT_EQ(r.partition->k, r.k_estimate->k_hat);
}

TEST(Pipeline, InputValidation) {
  const auto x = s3a::testing::random_unit(5, 3, 1);
  const auto bank = s3a::testing::random_unit(4, 3, 2);
  const auto vocab = s3a::testing::simple_vocab(4);
  CvprConfig cfg;
  cfg.mode = CvprMode::kGroup;
  cfg.k = 6;
  EXPECT_THROW(run_cvpr(x, vocab, bank, cfg), Error);
  cfg.k = 0;
  EXPECT_THROW(run_cvpr(x, vocab, bank, cfg), Error);
  cfg.k = 2;
  EXPECT_THROW(run_cvpr(x, s3a::testing::simple_vocab(5), bank, cfg), Error);
  EXPECT_THROW(run_cvpr(x, vocab, s3a::testing::random_unit(4, 2, 2), cfg), Error);
  EXPECT_EQ(parse_mode("scd"), CvprMode::kScd);
  EXPECT_EQ(mode_name(CvprMode::kCvpr), "cvpr");
  EXPECT_THROW(parse_mode("bogus"), Error);
}

}  // namespace
