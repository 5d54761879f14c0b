#include <gtest/gtest.h>

#include <filesystem>

#include "fakes.hpp"
#include "llmrec/enrichment.hpp"
#include "llmrec/pipeline.hpp"

using namespace llmrec;
namespace fs = std::filesystem;

namespace {

struct MiniWorld {
  Dataset data;
  MetaLookup meta;
};

const MiniWorld& mini() {
  static const MiniWorld world = [] {
    const fs::path dir = fs::path(LLMREC_TEST_DATA) / "mini";
    MiniWorld w{load_dataset(DatasetPaths::in_directory(dir)), {}};
    const auto provider = SnapshotProvider::load(dir / "provider_snapshot.jsonl");
    MockClient llm;
    MetaCache cache;
    const auto summary = resolve_all(w.data, provider, llm, cache);
    EXPECT_TRUE(summary.failures.empty());
    w.meta = cache.snapshot();
    return w;
  }();
  return world;
}

ProtocolOptions options() {
  ProtocolOptions o;
  o.profile.this_year = 2025;
  return o;
}

}  // namespace

TEST(Pipeline, EveryMiniMovieResolves) { EXPECT_EQ(mini().meta.size(), mini().data.catalog().size()); }

TEST(Pipeline, NeutralScorerReproducesBaseHitRates) {
  MockClient llm(MockRule::neutral());
  const auto out = run_loo(mini().data, mini().meta, llm, options());
  EXPECT_EQ(base_lists(out.runs), enhanced_lists(out.runs));
  for (int n : {1, 5, 10}) {
    EXPECT_DOUBLE_EQ(out.base.hr.at(n), out.enhanced.hr.at(n));
    EXPECT_DOUBLE_EQ(out.base.chr.at(n), out.enhanced.chr.at(n));
  }
  EXPECT_GT(llm.calls(), 0u);
}

TEST(Pipeline, OracleScorerReachesPoolContainment) {
  MockClient neutral;
  const auto probe = run_loo(mini().data, mini().meta, neutral, options());
  std::map<UserId, std::set<MovieId>> targets;
  for (const auto& [u, r] : probe.split.held_out) targets[u] = {r.movie_id};
  MockClient llm(MockRule::oracle(targets));
  const auto out = run_loo(mini().data, mini().meta, llm, options());

  std::size_t contained = 0;
  for (const auto& run : out.runs) {
    const MovieId target = out.split.held_out.at(run.user).movie_id;
    for (const auto& c : run.pool) contained += c.movie_id == target ? 1 : 0;
  }
  const double containment = static_cast<double>(contained) / static_cast<double>(out.runs.size());
  for (int n : {1, 5, 10}) EXPECT_NEAR(out.enhanced.hr.at(n), containment, 1e-12);
  EXPECT_GE(out.enhanced.hr.at(1), out.base.hr.at(1));
}

TEST(Pipeline, HeldOutMovieNeverBecomesFavorite) {
  MockClient llm;
  const auto out = run_loo(mini().data, mini().meta, llm, options());
  EXPECT_TRUE(profile_integrity_violations(profiles_of(out.runs), out.split.held_out).empty());
  for (const auto& run : out.runs) {
    for (const auto& c : run.pool) EXPECT_NE(c.movie_id, 0);
  }
}

TEST(Pipeline, PoolsExcludeTrainingRatings) {
  MockClient llm;
  const auto out = run_loo(mini().data, mini().meta, llm, options());
  std::map<UserId, std::set<MovieId>> rated;
  for (const auto& r : out.split.train) rated[r.user_id].insert(r.movie_id);
  for (const auto& run : out.runs) {
    for (const auto& c : run.pool) EXPECT_FALSE(rated[run.user].contains(c.movie_id));
  }
}

TEST(Pipeline, RunsAreDeterministicAcrossWorkerCounts) {
  MockClient a(MockRule::feature_linear()), b(MockRule::feature_linear());
  auto o = options();
  const auto first = run_loo(mini().data, mini().meta, a, o);
  o.workers = 4;
  const auto second = run_loo(mini().data, mini().meta, b, o);
  EXPECT_EQ(enhanced_lists(first.runs), enhanced_lists(second.runs));
  EXPECT_EQ(first.enhanced.hr, second.enhanced.hr);
}

TEST(Pipeline, PoolCacheIsReused) {
  oracle::ScratchDir dir("pools");
  auto o = options();
  o.pool_cache_dir = dir.path();
  MockClient llm;
  const auto first = run_loo(mini().data, mini().meta, llm, o);
  const auto second = run_loo(mini().data, mini().meta, llm, o);
  EXPECT_FALSE(first.pools_from_cache);
  EXPECT_TRUE(second.pools_from_cache);
  EXPECT_EQ(base_lists(first.runs), base_lists(second.runs));
}

TEST(Pipeline, RankingProtocolNeutralEquivalence) {
  MockClient llm;
  const auto out = run_ranking(mini().data, mini().meta, llm, options());
  EXPECT_GT(out.base.users, 0u);
  EXPECT_DOUBLE_EQ(out.base.ndcg, out.enhanced.ndcg);
  EXPECT_DOUBLE_EQ(out.base.map, out.enhanced.map);
  EXPECT_DOUBLE_EQ(out.base.precision, out.enhanced.precision);
  EXPECT_DOUBLE_EQ(out.base.recall, out.enhanced.recall);
}

TEST(Pipeline, ReportsRenderBothProtocols) {
  MockClient llm(MockRule::feature_linear());
  const auto o = options();
  ReportHeader header{"cfg", mini().data.fingerprint(), "svd", "mock", 42, 42, {}};
  const auto loo = loo_report_json(header, run_loo(mini().data, mini().meta, llm, o), o);
  EXPECT_EQ(loo.at("protocol"), "loo");
  EXPECT_FALSE(report_text(loo).empty());
  const auto ranking = ranking_report_json(header, run_ranking(mini().data, mini().meta, llm, o), o);
  EXPECT_EQ(ranking.at("protocol"), "ranking");
  EXPECT_NE(report_text(ranking).find("NDCG"), std::string::npos);
}

TEST(Pipeline, AblationProducesOneRowPerVariant) {
  MockClient llm(MockRule::feature_linear());
  const auto rows = run_ablation(mini().data, mini().meta, llm, options());
  EXPECT_EQ(rows.size(), 1 + AblationFlags::single_drops().size());
  ReportHeader header;
  EXPECT_FALSE(ablation_text(ablation_report_json(header, rows)).empty());
}

TEST(Pipeline, ProfilesRoundTripThroughJsonl) {
  oracle::ScratchDir dir("profiles");
  MockClient llm;
  const auto out = run_loo(mini().data, mini().meta, llm, options());
  const auto profiles = profiles_of(out.runs);
  write_profiles(dir.path() / "profiles.jsonl", profiles);
  const auto back = read_profiles(dir.path() / "profiles.jsonl", &mini().data.catalog());
  ASSERT_EQ(back.size(), profiles.size());
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(profile_hash(back[i]), profile_hash(profiles[i]));
}

TEST(Pipeline, ProtocolNamesParse) {
  EXPECT_EQ(parse_protocol("loo"), Protocol::Loo);
  EXPECT_EQ(parse_protocol("ranking"), Protocol::Ranking);
  EXPECT_THROW(parse_protocol("kfold"), Error);
}
