#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrec/dataset.hpp"
#include "llmrec/error.hpp"
#include "llmrec/metadata.hpp"

namespace llmrec {

inline constexpr int kEarliestProfileYear = 1870;
inline constexpr std::size_t kDefaultFavoriteCount = 3;

struct FavoriteMovie {
  MovieId movie_id = 0;
  std::string title;  // display title without year
  std::optional<int> year;
  std::vector<std::string> genres;

  friend bool operator==(const FavoriteMovie&, const FavoriteMovie&) = default;
};

struct PreferenceProfile {
  std::optional<UserId> user_id;  // absent for anonymous profiles
  std::string preference_text;
  std::vector<FavoriteMovie> favorites;
  bool rating_pref = false;
  bool popularity_pref = false;
  int year_min = kEarliestProfileYear;
  int year_max = kEarliestProfileYear;

  bool contains_favorite(MovieId id) const {
    return std::any_of(favorites.begin(), favorites.end(), [id](const FavoriteMovie& f) { return f.movie_id == id; });
  }

  friend bool operator==(const PreferenceProfile&, const PreferenceProfile&) = default;
};

/// Prompt components that can be removed to measure their contribution.
struct AblationFlags {
  bool drop_user_text = false;
  bool drop_descriptions = false;
  bool drop_temporal = false;
  bool drop_popularity_rating = false;
  bool drop_favorites = false;

  bool any() const {
    return drop_user_text || drop_descriptions || drop_temporal || drop_popularity_rating || drop_favorites;
  }

  std::string name() const {
    if (!any()) return "full";
    std::string out;
    auto add = [&](bool on, const char* label) {
      if (!on) return;
      if (!out.empty()) out += "+";
      out += label;
    };
    add(drop_user_text, "drop_user_text");
    add(drop_descriptions, "drop_descriptions");
    add(drop_temporal, "drop_temporal");
    add(drop_popularity_rating, "drop_popularity_rating");
    add(drop_favorites, "drop_favorites");
    return out;
  }

  /// The five single-component drops, in a fixed order.
  static std::vector<AblationFlags> single_drops() {
    std::vector<AblationFlags> out(5);
    out[0].drop_user_text = true;
    out[1].drop_descriptions = true;
    out[2].drop_temporal = true;
    out[3].drop_popularity_rating = true;
    out[4].drop_favorites = true;
    return out;
  }

  friend bool operator==(const AblationFlags&, const AblationFlags&) = default;
};

struct ProfileThresholds {
  double rating = 7.0;       // average IMDb rating of favorites, out of 10
  double popularity = 80.0;  // average normalized popularity, out of 100
};

/// The k highest-rated movies; ties go to the newer rating, then the smaller id.
inline std::vector<MovieId> select_favorites(std::span<const Rating> ratings, std::size_t k,
                                             std::optional<MovieId> exclude = std::nullopt) {
  std::vector<Rating> pool;
  pool.reserve(ratings.size());
  for (const auto& r : ratings) {
    if (exclude && r.movie_id == *exclude) continue;
    pool.push_back(r);
  }
  if (pool.empty()) throw Error(Errc::NoRatings, "preference_profiles", "no ratings left to pick favorites from");
  const std::size_t keep = std::min(k, pool.size());
  std::partial_sort(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(keep), pool.end(),
                    [](const Rating& a, const Rating& b) {
                      if (a.value != b.value) return a.value > b.value;
                      if (a.timestamp != b.timestamp) return a.timestamp > b.timestamp;
                      return a.movie_id < b.movie_id;
                    });
  std::vector<MovieId> out;
  out.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) out.push_back(pool[i].movie_id);
  return out;
}

/// Decade-aligned range around `years`: the minimum rounds down to its decade,
/// the maximum up to the start of the next decade capped at `this_year`.
/// With no years, the whole catalog span.
inline std::pair<int, int> release_year_range(std::span<const int> years, int this_year) {
  if (years.empty()) return {kEarliestProfileYear, this_year};
  const auto [lo, hi] = std::minmax_element(years.begin(), years.end());
  const int year_min = (*lo / 10) * 10;
  const int year_max = std::min((*hi / 10) * 10 + 10, this_year);
  return {year_min, std::max(year_min, year_max)};
}

/// Genres named in free text, as MovieLens labels.
inline std::vector<std::string> genres_mentioned(std::string_view text) {
  static const std::pair<const char*, const char*> kStems[] = {
      {"action", "Action"},       {"adventure", "Adventure"}, {"animat", "Animation"},  {"children", "Children"},
      {"kids", "Children"},       {"comed", "Comedy"},        {"crime", "Crime"},       {"documentar", "Documentary"},
      {"drama", "Drama"},         {"fantasy", "Fantasy"},     {"noir", "Film-Noir"},    {"horror", "Horror"},
      {"imax", "IMAX"},           {"musical", "Musical"},     {"myster", "Mystery"},    {"romanc", "Romance"},
      {"romantic", "Romance"},    {"sci-fi", "Sci-Fi"},       {"science fiction", "Sci-Fi"},
      {"thriller", "Thriller"},   {"war", "War"},             {"western", "Western"},
  };
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  std::vector<std::string> out;
  for (const auto& [stem, label] : kStems) {
    std::size_t pos = lower.find(stem);
    bool found = false;
    while (pos != std::string::npos && !found) {
      // "war" must be a whole word; the other stems are distinctive enough.
      const bool word_start = pos == 0 || !std::isalpha(static_cast<unsigned char>(lower[pos - 1]));
      const std::size_t end = pos + std::strlen(stem);
      const bool word_end = end >= lower.size() || !std::isalpha(static_cast<unsigned char>(lower[end]));
      found = std::string_view(stem) == "war" ? (word_start && (word_end || lower.compare(end, 1, "s") == 0)) : word_start;
      pos = lower.find(stem, pos + 1);
    }
    if (found && std::find(out.begin(), out.end(), label) == out.end()) out.emplace_back(label);
  }
  return out;
}

/// "I enjoy <g1> and <g2> movies." from the two most frequent favorite genres.
inline std::string genre_preference_text(const std::vector<FavoriteMovie>& favorites) {
  std::map<std::string, int> counts;
  for (const auto& f : favorites) {
    for (const auto& g : f.genres) ++counts[g];
  }
  std::vector<std::pair<std::string, int>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  auto lower = [](std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
  };
  if (ranked.empty()) return {};
  if (ranked.size() == 1) return "I enjoy " + lower(ranked[0].first) + " movies.";
  return "I enjoy " + lower(ranked[0].first) + " and " + lower(ranked[1].first) + " movies.";
}

inline FavoriteMovie favorite_from(const MovieRecord& movie) {
  return {movie.movie_id, display_title(movie.title), movie.release_year, movie.genres};
}

struct AutoProfileOptions {
  std::size_t favorites = kDefaultFavoriteCount;
  ProfileThresholds thresholds;
  int this_year = current_year();
};

/// Builds a profile from a user's rating history. `exclude` (the held-out
/// movie under leave-one-out) never becomes a favorite.
inline PreferenceProfile build_auto_profile(UserId user, std::span<const Rating> ratings,
                                            const std::map<MovieId, MovieRecord>& catalog, const MetaLookup& meta,
                                            const AutoProfileOptions& options = {},
                                            std::optional<MovieId> exclude = std::nullopt) {
  const auto ids = select_favorites(ratings, options.favorites, exclude);
  PreferenceProfile p;
  p.user_id = user;
  std::vector<int> years;
  double rating_sum = 0.0, popularity_sum = 0.0;
  int rating_n = 0, popularity_n = 0;
  for (MovieId id : ids) {
    auto it = catalog.find(id);
    if (it == catalog.end()) {
      throw Error(Errc::DanglingReference, "preference_profiles", "favorite " + std::to_string(id) + " not in catalog");
    }
    p.favorites.push_back(favorite_from(it->second));
    if (it->second.release_year) years.push_back(*it->second.release_year);
    if (const MovieMeta* m = find_meta(meta, id)) {
      if (m->imdb_rating) {
        rating_sum += *m->imdb_rating;
        ++rating_n;
      }
      if (m->popularity) {
        popularity_sum += *m->popularity;
        ++popularity_n;
      }
    }
  }
  p.rating_pref = rating_n > 0 && rating_sum / rating_n >= options.thresholds.rating;
  p.popularity_pref = popularity_n > 0 && popularity_sum / popularity_n >= options.thresholds.popularity;
  std::tie(p.year_min, p.year_max) = release_year_range(years, options.this_year);
  p.preference_text = genre_preference_text(p.favorites);
  return p;
}

/// Manual profiles keep their inputs verbatim. Without an explicit range the
/// whole catalog span is used.
inline PreferenceProfile build_manual_profile(std::string text, std::vector<FavoriteMovie> favorites, bool rating_pref,
                                              bool popularity_pref, std::optional<std::pair<int, int>> range,
                                              int this_year = current_year()) {
  const bool blank = text.find_first_not_of(" \t\r\n") == std::string::npos;
  if (blank && favorites.empty()) {
    throw Error(Errc::EmptyProfile, "preference_profiles", "a profile needs preference text or favorites");
  }
  PreferenceProfile p;
  p.preference_text = std::move(text);
  p.favorites = std::move(favorites);
  p.rating_pref = rating_pref;
  p.popularity_pref = popularity_pref;
  if (range) {
    if (range->first > range->second) {
      throw Error(Errc::InvalidRange, "preference_profiles",
                  "year_min " + std::to_string(range->first) + " exceeds year_max " + std::to_string(range->second));
    }
    if (range->first < kEarliestProfileYear || range->second > this_year) {
      throw Error(Errc::InvalidRange, "preference_profiles",
                  "release range must lie within " + std::to_string(kEarliestProfileYear) + "-" + std::to_string(this_year));
    }
    std::tie(p.year_min, p.year_max) = *range;
  } else {
    p.year_min = kEarliestProfileYear;
    p.year_max = this_year;
  }
  return p;
}

// ---- JSON ----------------------------------------------------------------

inline nlohmann::json to_json(const FavoriteMovie& f) {
  nlohmann::json j{{"movie_id", f.movie_id}, {"title", f.title}, {"genres", f.genres}};
  j["year"] = f.year ? nlohmann::json(*f.year) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const PreferenceProfile& p) {
  nlohmann::json favorites = nlohmann::json::array();
  for (const auto& f : p.favorites) favorites.push_back(to_json(f));
  nlohmann::json j{{"preference_text", p.preference_text},
                   {"favorites", favorites},
                   {"rating_pref", p.rating_pref},
                   {"popularity_pref", p.popularity_pref},
                   {"year_min", p.year_min},
                   {"year_max", p.year_max}};
  j["user_id"] = p.user_id ? nlohmann::json(*p.user_id) : nlohmann::json(nullptr);
  return j;
}

/// Parses and validates a profile object. Favorites may be given as bare
/// movie ids when `catalog` is supplied to fill in titles.
inline PreferenceProfile profile_from_json(const nlohmann::json& j, const std::map<MovieId, MovieRecord>* catalog = nullptr,
                                           int this_year = current_year()) {
  try {
    std::vector<FavoriteMovie> favorites;
    for (const auto& f : j.value("favorites", nlohmann::json::array())) {
      FavoriteMovie fav;
      if (f.is_number_integer()) {
        fav.movie_id = f.get<MovieId>();
      } else {
        fav.movie_id = f.at("movie_id").get<MovieId>();
        fav.title = f.value("title", "");
        if (f.contains("year") && !f["year"].is_null()) fav.year = f["year"].get<int>();
        fav.genres = f.value("genres", std::vector<std::string>{});
      }
      if (catalog && fav.title.empty()) {
        auto it = catalog->find(fav.movie_id);
        if (it == catalog->end()) {
          throw Error(Errc::DanglingReference, "preference_profiles",
                      "favorite movie " + std::to_string(fav.movie_id) + " is not in the catalog");
        }
        fav = favorite_from(it->second);
      }
      favorites.push_back(std::move(fav));
    }
    std::optional<std::pair<int, int>> range;
    if (j.contains("year_min") || j.contains("year_max")) {
      range = std::pair{j.value("year_min", kEarliestProfileYear), j.value("year_max", this_year)};
    }
    auto p = build_manual_profile(j.value("preference_text", ""), std::move(favorites), j.value("rating_pref", false),
                                  j.value("popularity_pref", false), range, this_year);
    if (j.contains("user_id") && !j["user_id"].is_null()) p.user_id = j["user_id"].get<UserId>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::UsageError, "preference_profiles", std::string("malformed profile: ") + e.what());
  }
}

/// Stable content hash; changes whenever any profile field changes.
inline std::string profile_hash(const PreferenceProfile& p) { return fingerprint_of(to_json(p).dump()); }

}  // namespace llmrec
