#include <gtest/gtest.h>

#include <fstream>

#include "fakes.hpp"
#include "llmrec/enrichment.hpp"
#include "llmrec/metadata.hpp"

using namespace llmrec;
using oracle::ScratchDir;
using oracle::ScriptedClient;

namespace {

MovieMeta sample_meta(MovieId id, std::string description = "A film.") {
  MovieMeta m;
  m.movie_id = id;
  m.description = std::move(description);
  m.imdb_rating = 5.0 + 0.1 * static_cast<double>(id % 40);
  m.set_votes(12'345 * id);
  return m;
}

Dataset two_movie_catalog() {
  std::vector<MovieRecord> movies{
      {1, "Matrix, The", 1999, {"Action", "Sci-Fi"}, "0133093", "603"},
      {2, "Heat", 1995, {"Action", "Crime"}, "0999999", std::nullopt},  // stale id
      {3, "Obscure Festival Short", 2017, {"Drama"}, std::nullopt, std::nullopt},
  };
  return Dataset({}, std::move(movies));
}

SnapshotProvider fixture_provider() {
  return SnapshotProvider({
      {"0133093", "The Matrix", 1999, "A hacker learns the truth about reality.", 8.8, 930'000},
      {"0113277", "Heat", 1995, "A detective hunts a\ncareful thief.", 8.3, 720'000},
      {"0120737", "Heat Wave", 2004, "Unrelated.", 5.0, 1'000},
  });
}

}  // namespace

TEST(Popularity, MatchesLinearMapWithClamp) {
  EXPECT_EQ(normalize_popularity(1'000'000), 100.0);
  EXPECT_EQ(normalize_popularity(0), 0.0);
  EXPECT_EQ(normalize_popularity(2'500'000), 100.0);
  EXPECT_EQ(normalize_popularity(250'000), 25.0);
  EXPECT_EQ(normalize_popularity(930'000), 93.0);
  EXPECT_EQ(normalize_popularity(-5), 0.0);
}

TEST(Popularity, MonotoneAndIdempotent) {
  double previous = -1.0;
  for (std::int64_t v = 0; v <= 1'200'000; v += 977) {
    const double p = normalize_popularity(v);
    EXPECT_GE(p, previous);
    previous = p;
    const auto back = static_cast<std::int64_t>(std::llround(p / 100.0 * 1e6));
    EXPECT_DOUBLE_EQ(normalize_popularity(back), p);
  }
}

TEST(Description, SanitizedToOneLine) {
  EXPECT_EQ(sanitize_description("  A thief\n\nreturns  home.\r\n"), "A thief returns home.");
  std::string long_text;
  for (int i = 0; i < 80; ++i) long_text += "Sentence number " + std::to_string(i) + ". ";
  const std::string cut = sanitize_description(long_text);
  EXPECT_LE(cut.size(), kMaxDescriptionChars);
  EXPECT_EQ(cut.back(), '.');
}

TEST(FuzzyMatch, ArticleAndCaseInsensitive) {
  EXPECT_DOUBLE_EQ(title_similarity("The Matrix", "the matrix"), 1.0);
  EXPECT_DOUBLE_EQ(title_similarity("Matrix, The", "The Matrix"), 1.0);
  EXPECT_GE(title_similarity("Interstelar", "Interstellar"), kFuzzyMatchThreshold);
  EXPECT_GE(title_similarity("Amelie", "Amelie."), kFuzzyMatchThreshold);
}

TEST(FuzzyMatch, SequelsStayBelowThreshold) {
  EXPECT_LT(title_similarity("Toy Story", "Toy Story 2"), kFuzzyMatchThreshold);
  EXPECT_LT(title_similarity("Rocky II", "Rocky III"), kFuzzyMatchThreshold);
  EXPECT_LT(title_similarity("Alien", "Aliens vs. Predator"), kFuzzyMatchThreshold);
  EXPECT_LT(title_similarity("Heat", "Heat Wave"), kFuzzyMatchThreshold);
}

TEST(FuzzyMatch, SearchScorePrefersCoveredQueries) {
  EXPECT_GT(search_score("interstelar", "Interstellar"), search_score("interstelar", "Stellar"));
  EXPECT_GT(search_score("matrix", "The Matrix"), search_score("matrix", "The Matrix Reloaded"));
  EXPECT_EQ(search_score("", "Heat"), 0.0);
}

TEST(MetaCache, RoundTripTenRecords) {
  ScratchDir dir("cache");
  const auto path = dir / "meta.jsonl";
  {
    MetaCache cache(path);
    for (MovieId id = 1; id <= 10; ++id) cache.store(sample_meta(id));
  }
  MetaCache reloaded(path);
  EXPECT_EQ(reloaded.size(), 10u);
  EXPECT_EQ(reloaded.warning_count(), 0u);
  for (MovieId id = 1; id <= 10; ++id) EXPECT_EQ(reloaded.get(id), sample_meta(id));

  MovieMeta generated;
  generated.movie_id = 11;
  generated.description = "Generated text.";
  generated.source = MetaSource::Generated;
  reloaded.store(generated);
  EXPECT_EQ(MetaCache(path).get(11), generated);
}

TEST(MetaCache, LaterStoreReplaces) {
  ScratchDir dir("cache");
  const auto path = dir / "meta.jsonl";
  MetaCache cache(path);
  cache.store(sample_meta(7, "first"));
  cache.store(sample_meta(7, "second"));
  EXPECT_EQ(cache.get(7)->description, "second");
  MetaCache reloaded(path);
  EXPECT_EQ(reloaded.size(), 1u);
  EXPECT_EQ(reloaded.get(7)->description, "second");
}

TEST(MetaCache, CorruptLinesAreSkippedAndCounted) {
  ScratchDir dir("cache");
  const auto path = dir / "meta.jsonl";
  {
    MetaCache cache(path);
    for (MovieId id = 1; id <= 4; ++id) cache.store(sample_meta(id));
  }
  {
    std::ofstream out(path, std::ios::app);
    out << "{\"schema_version\": 1, \"movie_id\": 5, \"descr\n";
  }
  MetaCache reloaded(path);
  EXPECT_EQ(reloaded.size(), 4u);
  EXPECT_EQ(reloaded.warning_count(), 1u);
}

TEST(MetaCache, RejectsMultiLineDescriptions) {
  MetaCache cache;
  EXPECT_THROW(cache.store(sample_meta(1, "two\nlines")), Error);
}

TEST(Resolve, CacheHitSkipsProvider) {
  const Dataset data = two_movie_catalog();
  const SnapshotProvider provider = fixture_provider();
  ScriptedClient llm({"unused"});
  MetaCache cache;
  cache.store(sample_meta(1, "cached"));
  const MovieMeta meta = resolve_metadata(*data.movie(1), data.id_map(), provider, llm, cache);
  EXPECT_EQ(meta.description, "cached");
  EXPECT_EQ(provider.lookup_calls(), 0u);
  EXPECT_EQ(provider.search_calls(), 0u);
  EXPECT_EQ(llm.calls(), 0u);
}

TEST(Resolve, ExternalIdLookupDerivesPopularity) {
  const Dataset data = two_movie_catalog();
  const SnapshotProvider provider = fixture_provider();
  ScriptedClient llm({"unused"});
  MetaCache cache;
  const MovieMeta meta = resolve_metadata(*data.movie(1), data.id_map(), provider, llm, cache);
  EXPECT_EQ(meta.source, MetaSource::Provider);
  EXPECT_EQ(meta.imdb_rating, 8.8);
  EXPECT_EQ(meta.votes, 930'000);
  EXPECT_EQ(meta.popularity, 93.0);
  EXPECT_EQ(provider.lookup_calls(), 1u);
  EXPECT_EQ(provider.search_calls(), 0u);
  EXPECT_EQ(cache.get(1), meta);
}

TEST(Resolve, BrokenExternalIdFallsBackToFuzzyTitle) {
  const Dataset data = two_movie_catalog();
  const SnapshotProvider provider = fixture_provider();
  ScriptedClient llm({"unused"});
  MetaCache cache;
  const MovieMeta meta = resolve_metadata(*data.movie(2), data.id_map(), provider, llm, cache);
  EXPECT_EQ(meta.source, MetaSource::Provider);
  EXPECT_EQ(meta.description, "A detective hunts a careful thief.");
  EXPECT_EQ(meta.popularity, 72.0);
  EXPECT_EQ(provider.lookup_calls(), 1u);
  EXPECT_EQ(provider.search_calls(), 1u);
  EXPECT_EQ(llm.calls(), 0u);
}

TEST(Resolve, UnknownMovieIsGenerated) {
  const Dataset data = two_movie_catalog();
  const SnapshotProvider provider = fixture_provider();
  ScriptedClient llm({"A short film\nabout a festival."});
  MetaCache cache;
  const MovieMeta meta = resolve_metadata(*data.movie(3), data.id_map(), provider, llm, cache);
  EXPECT_EQ(meta.source, MetaSource::Generated);
  EXPECT_EQ(meta.description, "A short film about a festival.");
  EXPECT_FALSE(meta.imdb_rating);
  EXPECT_FALSE(meta.popularity);
  EXPECT_EQ(llm.calls(), 1u);
  ASSERT_EQ(llm.requests().size(), 1u);
  EXPECT_EQ(llm.requests()[0].kind, RequestKind::Description);
  EXPECT_NE(llm.requests()[0].user.find("Obscure Festival Short (2017)"), std::string::npos);
}

TEST(Resolve, EmptyGenerationsRetryThenFail) {
  const Dataset data = two_movie_catalog();
  const SnapshotProvider provider;
  ScriptedClient llm({"   "});
  MetaCache cache;
  try {
    resolve_metadata(*data.movie(3), data.id_map(), provider, llm, cache, ResolveOptions{kFuzzyMatchThreshold, 2});
    FAIL() << "expected GenerationFailed";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::GenerationFailed);
  }
  EXPECT_EQ(llm.calls(), 3u);
  EXPECT_FALSE(cache.get(3));
}

TEST(Resolve, ResolveAllCountsSources) {
  const Dataset data = two_movie_catalog();
  const SnapshotProvider provider = fixture_provider();
  ScriptedClient llm({"Generated."});
  MetaCache cache;
  const ResolveSummary first = resolve_all(data, provider, llm, cache, 3);
  EXPECT_EQ(first.resolved, 3u);
  EXPECT_EQ(first.generated, 1u);
  EXPECT_TRUE(first.failures.empty());
  const ResolveSummary second = resolve_all(data, provider, llm, cache, 1);
  EXPECT_EQ(second.from_cache, 3u);
  EXPECT_EQ(llm.calls(), 1u);
}

TEST(Snapshot, LoadsCheckedInFixture) {
  const auto provider = SnapshotProvider::load(std::filesystem::path(LLMREC_TEST_DATA) / "mini" / "provider_snapshot.jsonl");
  EXPECT_GT(provider.size(), 30u);
  EXPECT_FALSE(provider.lookup_by_external_id("0133093"));
  EXPECT_TRUE(provider.lookup_by_external_id("9999991"));
  ScratchDir dir("snap");
  provider.save(dir / "copy.jsonl");
  EXPECT_EQ(SnapshotProvider::load(dir / "copy.jsonl").size(), provider.size());
}
