#include <gtest/gtest.h>

#include <fstream>
#include <sstream>
#include <thread>

#include "extraction_corpus.hpp"
#include "fakes.hpp"
#include "llmrec/llm.hpp"

using namespace llmrec;

namespace {

std::string read_golden(const std::string& name) {
  std::ifstream in(std::filesystem::path(LLMREC_TEST_DATA) / "golden" / name);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string render(const Prompt& p) { return "SYSTEM\n" + p.system + "\nUSER\n" + p.user + "\n"; }

PreferenceProfile fantasy_profile() {
  PreferenceProfile p;
  p.preference_text = "I am drawn to science fiction and fantasy stories that are well written.";
  p.rating_pref = true;
  p.popularity_pref = true;
  p.favorites = {{1, "The Lord of the Rings: The Two Towers", 2002, {"Fantasy"}},
                 {2, "Rogue One: A Star Wars Story", 2016, {"Sci-Fi"}},
                 {3, "WALL·E", 2008, {"Animation"}}};
  p.year_min = 2000;
  p.year_max = 2020;
  return p;
}

CandidateView interstellar() {
  return {"Interstellar", 2014, 8.6, 91.0,
          "When Earth becomes uninhabitable in the future, a farmer and ex-NASA pilot, Joseph Cooper, is tasked to pilot "
          "a spacecraft, along with a team of researchers, to find a new planet for humans."};
}

std::size_t common_prefix(const std::string& a, const std::string& b) {
  std::size_t n = 0;
  while (n < a.size() && n < b.size() && a[n] == b[n]) ++n;
  return n;
}

}  // namespace

TEST(Prompts, DescriptionPromptMatchesGolden) {
  EXPECT_EQ(render(build_description_prompt("Interstellar")), read_golden("description_prompt.txt"));
  EXPECT_THROW(build_description_prompt("  "), Error);
}

TEST(Prompts, SimilarityPromptMatchesGolden) {
  EXPECT_EQ(render(build_similarity_prompt(fantasy_profile(), interstellar())), read_golden("similarity_prompt.txt"));
}

TEST(Prompts, ByteStableForIdenticalInputs) {
  EXPECT_EQ(build_similarity_prompt(fantasy_profile(), interstellar()).user,
            build_similarity_prompt(fantasy_profile(), interstellar()).user);
}

TEST(Prompts, StablePrefixAcrossCandidates) {
  const auto profile = fantasy_profile();
  CandidateView other{"Heat", 1995, std::nullopt, 72.0, "A detective hunts a thief."};
  const auto a = build_similarity_prompt(profile, interstellar());
  const auto b = build_similarity_prompt(profile, other);
  EXPECT_EQ(a.system, b.system);
  const auto live = a.user.rfind("Now, respond to the following prompt:");
  const auto candidate = a.user.rfind("New movie to evaluate:");
  ASSERT_NE(live, std::string::npos);
  ASSERT_GT(candidate, live);
  EXPECT_GE(common_prefix(a.user, b.user), candidate);
}

TEST(Prompts, ConditionalLinesFollowFlagsAndMetadata) {
  auto profile = fantasy_profile();
  profile.rating_pref = false;
  CandidateView bare{"Heat", 1995, std::nullopt, std::nullopt, ""};
  const auto p = build_similarity_prompt(profile, bare);
  const std::string live = p.user.substr(p.user.rfind("Now, respond"));
  EXPECT_EQ(live.find(kRatingPreferenceSentence), std::string::npos);
  EXPECT_NE(live.find(kPopularityPreferenceSentence), std::string::npos);
  EXPECT_EQ(live.find("IMDb Rating:"), std::string::npos);
  EXPECT_EQ(live.find("Popularity Score:"), std::string::npos);
  EXPECT_EQ(live.find("Movie description:"), std::string::npos);
  EXPECT_NE(live.find("Movie title: Heat (1995)"), std::string::npos);
}

TEST(Prompts, AblationDropsSectionsEverywhere) {
  const auto profile = fantasy_profile();
  struct Probe {
    AblationFlags flags;
    std::string absent;
  };
  const std::vector<Probe> probes{
      {{true, false, false, false, false}, "User input:"},
      {{false, true, false, false, false}, "Movie description:"},
      {{false, false, true, false, false}, "Preferred Release Date Range"},
      {{false, false, false, true, false}, "IMDb Rating:"},
      {{false, false, false, true, false}, std::string(kRatingPreferenceSentence)},
      {{false, false, false, false, true}, "User's favorite movies:"},
  };
  for (const auto& probe : probes) {
    const auto p = build_similarity_prompt(profile, interstellar(), probe.flags);
    EXPECT_EQ(p.user.find(probe.absent), std::string::npos) << probe.flags.name();
  }
  EXPECT_EQ(AblationFlags::single_drops().size(), 5u);
}

TEST(Extraction, CorpusBehavesAsSpecified) {
  EXPECT_EQ(oracle::extraction_corpus().size(), 30u);
  for (const auto& failure : oracle::extraction_failures()) ADD_FAILURE() << failure;
}

TEST(Extraction, FallbackAfterRetriesIsNeutral) {
  oracle::ScriptedClient llm({"no idea"});
  const auto s = score_similarity(llm, ChatRequest{}, 2);
  EXPECT_EQ(s.value, 0.0);
  EXPECT_TRUE(s.fallback);
  EXPECT_EQ(s.attempts, 3);
  EXPECT_EQ(llm.calls(), 3u);
  EXPECT_THROW(score_similarity(llm, ChatRequest{}, -1), Error);
}

TEST(Extraction, TransportErrorsPropagate) {
  oracle::FunctionClient down([](const ChatRequest&) -> std::string {
    throw Error(Errc::TransportError, "llm_gateway", "connection refused");
  });
  try {
    score_similarity(down, ChatRequest{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::TransportError);
  }
}

TEST(Mock, ConstantAndOracleRules) {
  MockClient neutral;
  ChatRequest req;
  req.context = ScoringContext{};
  req.context->user_id = 4;
  req.context->movie_id = 10;
  EXPECT_EQ(extract_score(neutral.complete(req)).value, 0.0);

  MockClient constant(MockRule::constant_score(-0.25));
  EXPECT_EQ(extract_score(constant.complete(req)).value, -0.25);

  MockClient per_user(MockRule::oracle(std::map<UserId, std::set<MovieId>>{{4, {10}}, {5, {11}}}));
  EXPECT_EQ(extract_score(per_user.complete(req)).value, 1.0);
  req.context->movie_id = 11;
  EXPECT_EQ(extract_score(per_user.complete(req)).value, 0.0);

  MockClient global(MockRule::oracle(std::set<MovieId>{11}));
  EXPECT_EQ(extract_score(global.complete(req)).value, 1.0);
  EXPECT_EQ(global.calls(), 1u);
}

TEST(Mock, FeatureLinearScore) {
  ScoringContext ctx;
  ctx.candidate_genres = {"Action", "Sci-Fi"};
  ctx.profile_genres = {"Sci-Fi"};
  ctx.candidate_year = 2014;
  ctx.year_range = std::pair{2000, 2020};
  ctx.imdb_rating = 8.5;
  ctx.popularity = 90.0;
  ctx.rating_pref = true;
  ctx.popularity_pref = true;
  // genre 0, era +1, rating 0.5, popularity 0.5
  EXPECT_NEAR(feature_linear_score(ctx), 0.3 + 0.05 + 0.05, 1e-12);
  ctx.candidate_year = 1990;
  EXPECT_NEAR(feature_linear_score(ctx), -0.3 + 0.1, 1e-12);
  ctx.profile_genres = {"Action", "Sci-Fi"};
  ctx.year_range.reset();
  ctx.rating_pref = ctx.popularity_pref = false;
  EXPECT_NEAR(feature_linear_score(ctx), 0.5, 1e-12);
}

TEST(Mock, DescriptionRequestsGetOneLine) {
  MockClient mock;
  const auto prompt = build_description_prompt("Heat (1995)");
  const auto text = mock.complete(ChatRequest{prompt.system, prompt.user, GenParams::description(),
                                              RequestKind::Description, std::nullopt});
  EXPECT_EQ(text, "A feature film titled Heat (1995).");
}

TEST(Mock, RuleParsing) {
  EXPECT_EQ(parse_mock_rule("mock:neutral").kind, MockRule::Kind::Constant);
  EXPECT_EQ(parse_mock_rule("constant:0.4").constant, 0.4);
  EXPECT_EQ(parse_mock_rule("oracle").kind, MockRule::Kind::Oracle);
  EXPECT_EQ(parse_mock_rule("feature").kind, MockRule::Kind::FeatureLinear);
  EXPECT_THROW(parse_mock_rule("constant:3"), Error);
  EXPECT_THROW(parse_mock_rule("magic"), Error);
}

TEST(InFlight, CapIsHonoured) {
  std::atomic<int> current{0}, peak{0};
  oracle::FunctionClient slow([&](const ChatRequest&) {
    const int now = ++current;
    int seen = peak.load();
    while (now > seen && !peak.compare_exchange_weak(seen, now)) {
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
    --current;
    return std::string("0.1");
  });
  InFlightLimiter limited(slow, 2);
  {
    std::vector<std::jthread> threads;
    for (int t = 0; t < 8; ++t) {
      threads.emplace_back([&] {
        for (int k = 0; k < 5; ++k) limited.complete(ChatRequest{});
      });
    }
  }
  EXPECT_LE(peak.load(), 2);
  EXPECT_GE(peak.load(), 1);
}
