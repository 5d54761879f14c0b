#include <gtest/gtest.h>

#include "llmrec/dataset.hpp"
#include "llmrec/metadata.hpp"
#include "llmrec/profiles.hpp"
#include "profile_rules.hpp"

using namespace llmrec;

namespace {

std::vector<Rating> abc_ratings() {
  return {{1, 10, 5.0, 100}, {1, 20, 4.0, 100}, {1, 30, 3.0, 100}};
}

}  // namespace

TEST(Favorites, HighestRatedFirst) {
  const auto r = abc_ratings();
  EXPECT_EQ(select_favorites(r, 2), (std::vector<MovieId>{10, 20}));
  EXPECT_EQ(select_favorites(r, 2, 10), (std::vector<MovieId>{20, 30}));
  EXPECT_EQ(select_favorites(r, 5), (std::vector<MovieId>{10, 20, 30}));
}

TEST(Favorites, TiesGoToNewerThenSmallerId) {
  const std::vector<Rating> r{{1, 10, 5.0, 10}, {1, 20, 5.0, 20}};
  EXPECT_EQ(select_favorites(r, 1), (std::vector<MovieId>{20}));
  const std::vector<Rating> same_time{{1, 30, 5.0, 10}, {1, 20, 5.0, 10}};
  EXPECT_EQ(select_favorites(same_time, 1), (std::vector<MovieId>{20}));
}

TEST(Favorites, NoRatingsLeft) {
  const std::vector<Rating> one{{1, 10, 5.0, 10}};
  try {
    select_favorites(one, 3, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NoRatings);
  }
}

TEST(ReleaseRange, TableDriven) {
  for (const auto& c : oracle::range_cases()) {
    const auto [lo, hi] = release_year_range(c.years, c.this_year);
    EXPECT_EQ(lo, c.expect_min) << c.years.front();
    EXPECT_EQ(hi, c.expect_max) << c.years.front();
  }
  EXPECT_EQ(release_year_range({}, 2025), (std::pair<int, int>{kEarliestProfileYear, 2025}));
}

TEST(AutoProfile, RuleTableHolds) {
  for (const auto& failure : oracle::profile_rule_failures()) ADD_FAILURE() << failure;
}

TEST(AutoProfile, ThresholdBoundaries) {
  using oracle::profile_for;
  EXPECT_FALSE(profile_for({{2000, 6.99, {}}}, 2025).rating_pref);
  EXPECT_TRUE(profile_for({{2000, 7.0, {}}}, 2025).rating_pref);
  EXPECT_FALSE(profile_for({{2000, {}, 799'000}}, 2025).popularity_pref);
  EXPECT_TRUE(profile_for({{2000, {}, 800'000}}, 2025).popularity_pref);
}

TEST(AutoProfile, RatingPreferenceIsMonotone) {
  std::vector<oracle::FavoriteSpec> favs{{2000, 6.0, {}}, {2001, 7.0, {}}, {2002, 7.5, {}}};
  bool was_on = oracle::profile_for(favs, 2025).rating_pref;
  for (int step = 0; step < 40; ++step) {
    *favs[static_cast<std::size_t>(step) % 3].imdb_rating += 0.1;
    const bool on = oracle::profile_for(favs, 2025).rating_pref;
    EXPECT_TRUE(on || !was_on);
    was_on = on;
  }
  EXPECT_TRUE(was_on);
}

TEST(AutoProfile, PreferenceTextFromTopGenres) {
  std::vector<FavoriteMovie> favs{{1, "A", 2000, {"Sci-Fi", "Action"}},
                                  {2, "B", 2000, {"Sci-Fi", "Drama"}},
                                  {3, "C", 2000, {"Action"}}};
  EXPECT_EQ(genre_preference_text(favs), "I enjoy action and sci-fi movies.");
  EXPECT_EQ(genre_preference_text({{1, "A", 2000, {"Comedy"}}}), "I enjoy comedy movies.");
  EXPECT_EQ(genre_preference_text({{1, "A", 2000, {}}}), "");
}

TEST(AutoProfile, HeldOutMovieNeverAFavoriteOnFixture) {
  const Dataset data = load_dataset(DatasetPaths::in_directory(std::filesystem::path(LLMREC_TEST_DATA) / "mini"));
  for (UserId user : data.users()) {
    const auto ratings = data.user_ratings(user);
    for (const auto& excluded : ratings) {
      if (ratings.size() < 2) continue;
      const auto p = build_auto_profile(user, ratings, data.catalog(), {}, {}, excluded.movie_id);
      EXPECT_FALSE(p.contains_favorite(excluded.movie_id)) << user << " " << excluded.movie_id;
      EXPECT_FALSE(p.favorites.empty());
      for (const auto& f : p.favorites) {
        if (f.year) {
          EXPECT_LE(p.year_min, *f.year);
          EXPECT_GE(p.year_max, *f.year);
        }
      }
    }
  }
}

TEST(ManualProfile, TextOnlyGetsFullRange) {
  const auto p = build_manual_profile("I enjoy heists.", {}, false, false, std::nullopt, 2025);
  EXPECT_TRUE(p.favorites.empty());
  EXPECT_EQ(p.year_min, kEarliestProfileYear);
  EXPECT_EQ(p.year_max, 2025);
}

TEST(ManualProfile, Errors) {
  try {
    build_manual_profile("x", {}, false, false, std::pair{2010, 2000}, 2025);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::InvalidRange);
  }
  try {
    build_manual_profile("   ", {}, false, false, std::nullopt, 2025);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::EmptyProfile);
  }
  EXPECT_THROW(build_manual_profile("x", {}, false, false, std::pair{1700, 2000}, 2025), Error);
  EXPECT_THROW(build_manual_profile("x", {}, false, false, std::pair{2000, 2030}, 2025), Error);
}

TEST(ManualProfile, JsonRoundTripAndIdLookup) {
  const Dataset data = load_dataset(DatasetPaths::in_directory(std::filesystem::path(LLMREC_TEST_DATA) / "mini"));
  const auto j = nlohmann::json::parse(
      R"({"preference_text": "I like space.", "favorites": [2571, 109487], "rating_pref": true, "year_min": 1990, "year_max": 2020})");
  const auto p = profile_from_json(j, &data.catalog(), 2025);
  ASSERT_EQ(p.favorites.size(), 2u);
  EXPECT_EQ(p.favorites[0].title, "The Matrix");
  EXPECT_EQ(p.favorites[1].year, 2014);
  EXPECT_TRUE(p.rating_pref);
  EXPECT_EQ(profile_from_json(to_json(p), nullptr, 2025), p);

  auto edited = p;
  edited.year_max = 2010;
  EXPECT_NE(profile_hash(edited), profile_hash(p));
  EXPECT_EQ(profile_hash(p), profile_hash(profile_from_json(to_json(p), nullptr, 2025)));

  EXPECT_THROW(profile_from_json(nlohmann::json::parse(R"({"favorites": [424242]})"), &data.catalog(), 2025), Error);
  EXPECT_THROW(profile_from_json(nlohmann::json::parse(R"({"favorites": "nope"})"), &data.catalog(), 2025), Error);
}
