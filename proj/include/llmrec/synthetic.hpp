#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "llmrec/dataset.hpp"
#include "llmrec/metadata.hpp"
#include "llmrec/rng.hpp"

namespace llmrec {

/// Shape of a generated MovieLens-style corpus. Defaults mirror the published
/// summary of ml-latest-small: 610 users, 9,742 movies, 100,836 ratings,
/// at least 20 ratings per user, observed rating mean ~3.5 and standard
/// deviation ~1.04.
struct SyntheticSpec {
  std::size_t users = 610;
  std::size_t movies = 9742;
  std::size_t target_ratings = 100836;
  std::size_t min_ratings_per_user = 20;
  std::size_t latent_dim = 8;
  double global_mean = 3.12;  // latent intercept; exposure skew lifts the observed mean to ~3.5
  double user_bias_std = 0.42;
  double item_bias_std = 0.42;
  double interaction_std = 0.45;
  double noise_std = 0.85;
  double broken_link_fraction = 0.03;   // snapshot lists the movie under another id
  double missing_meta_fraction = 0.01;  // snapshot has no record at all
  std::uint64_t seed = 20180926;
  int last_year = 2018;
};

struct SyntheticCorpus {
  Dataset data;
  std::vector<ProviderRecord> snapshot;
};

namespace detail {

inline const std::vector<std::pair<std::string, double>>& genre_weights() {
  // Roughly the genre frequencies of ml-latest-small.
  static const std::vector<std::pair<std::string, double>> g = {
      {"Drama", 4361},   {"Comedy", 3756},   {"Thriller", 1894},  {"Action", 1828},     {"Romance", 1596},
      {"Adventure", 1263}, {"Crime", 1199},  {"Sci-Fi", 980},     {"Horror", 978},      {"Fantasy", 779},
      {"Children", 664}, {"Animation", 611}, {"Mystery", 573},    {"Documentary", 440}, {"War", 382},
      {"Musical", 334},  {"Western", 167},   {"IMAX", 158},       {"Film-Noir", 87},
  };
  return g;
}

inline std::size_t weighted_pick(Rng& rng, const std::vector<double>& cumulative) {
  const double x = rng.uniform() * cumulative.back();
  return static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), x) - cumulative.begin());
}

inline std::string make_title(Rng& rng, std::size_t index) {
  static const char* kAdjectives[] = {"Silent", "Broken", "Golden", "Midnight", "Crimson", "Lost", "Hidden", "Electric",
                                      "Frozen", "Wild", "Last", "Secret", "Burning", "Distant", "Savage", "Gentle",
                                      "Iron", "Velvet", "Hollow", "Bright", "Dark", "Endless", "Little", "Grand"};
  static const char* kNouns[] = {"River", "Empire", "Garden", "Horizon", "Shadow", "Harbor", "Kingdom", "Storm",
                                 "Voyage", "Circus", "Mirror", "Frontier", "Orchard", "Signal", "Labyrinth", "Summer",
                                 "Winter", "Machine", "Station", "Island", "Canyon", "Letter", "Promise", "Dream"};
  static const char* kPeople[] = {"Stranger", "Detective", "Queen", "Pilot", "Gambler", "Teacher", "Ghost", "Thief",
                                  "Doctor", "Dancer", "Soldier", "Captain", "Witness", "Widow", "Prince", "Sheriff"};
  const auto a = kAdjectives[rng.below(std::size(kAdjectives))];
  const auto n = kNouns[rng.below(std::size(kNouns))];
  const auto p = kPeople[rng.below(std::size(kPeople))];
  std::string title;
  switch (rng.below(6)) {
    case 0: title = std::string(a) + " " + n; break;
    case 1: title = std::string(n) + " of the " + p; break;
    case 2: title = std::string(p) + ", The"; break;  // MovieLens trailing article
    case 3: title = std::string(a) + " " + p; break;
    case 4: title = std::string(n) + ", The"; break;
    default: title = std::string("The ") + a + " " + n; break;
  }
  if (rng.uniform() < 0.08) title += " " + std::to_string(2 + rng.below(3));  // sequel
  // Unique suffix keeps titles distinct without looking like a year.
  return title + " " + std::string(1, static_cast<char>('A' + index % 26)) + std::to_string(index / 26);
}

inline std::string make_plot(Rng& rng, const std::vector<std::string>& genres, int year) {
  static const char* kHooks[] = {"a reluctant hero", "two estranged siblings", "a small-town family",
                                 "an ambitious journalist", "a retired detective", "a group of friends",
                                 "a young inventor", "a disgraced officer"};
  static const char* kTurns[] = {"must confront a long-buried secret", "set out on an unlikely journey",
                                 "are drawn into a dangerous conspiracy", "try to save the place they call home",
                                 "discover that nothing is what it seems", "fight for a second chance"};
  std::string genre_text = "drama";
  if (!genres.empty()) {
    genre_text.clear();
    for (std::size_t i = 0; i < genres.size(); ++i) {
      std::string g = genres[i];
      std::transform(g.begin(), g.end(), g.begin(), [](unsigned char c) { return std::tolower(c); });
      genre_text += (i == 0 ? "" : (i + 1 == genres.size() ? " and " : ", ")) + g;
    }
  }
  return "A " + genre_text + " story from " + std::to_string(year) + " in which " + kHooks[rng.below(std::size(kHooks))] +
         " " + kTurns[rng.below(std::size(kTurns))] + ".";
}

}  // namespace detail

/// Deterministic low-rank corpus in the MovieLens layout plus a matching
/// provider snapshot. Item factors are tied to genres so genre-aware scoring
/// carries real signal, as it does on the real data.
inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec = {}) {
  Rng rng(spec.seed);
  const auto& genres = detail::genre_weights();
  std::vector<double> genre_cdf;
  double acc = 0.0;
  for (const auto& [_, w] : genres) genre_cdf.push_back(acc += w);

  const std::size_t d = spec.latent_dim;
  std::vector<std::vector<double>> genre_vec(genres.size(), std::vector<double>(d));
  for (auto& v : genre_vec)
    for (double& x : v) x = rng.normal();

  // Movies.
  std::vector<MovieRecord> movies(spec.movies);
  std::vector<std::vector<double>> item_vec(spec.movies, std::vector<double>(d));
  std::vector<double> item_bias(spec.movies), item_weight(spec.movies);
  std::vector<std::vector<std::size_t>> item_genres(spec.movies);
  for (std::size_t i = 0; i < spec.movies; ++i) {
    MovieRecord& m = movies[i];
    m.movie_id = static_cast<MovieId>(i + 1 + (i / 7) * 3);  // gaps like real MovieLens ids
    const std::size_t k = 1 + rng.below(3);
    std::set<std::size_t> picked;
    while (picked.size() < k) picked.insert(detail::weighted_pick(rng, genre_cdf));
    item_genres[i].assign(picked.begin(), picked.end());
    if (rng.uniform() > 0.003) {
      for (std::size_t g : picked) m.genres.push_back(genres[g].first);
    }
    const double age = -20.0 * std::log(1.0 - rng.uniform());
    m.release_year = std::max(1902, spec.last_year - static_cast<int>(age));
    m.title = detail::make_title(rng, i);
    for (std::size_t f = 0; f < d; ++f) {
      double s = 0.0;
      for (std::size_t g : picked) s += genre_vec[g][f];
      item_vec[i][f] = 0.8 * s / static_cast<double>(picked.size()) + rng.normal(0.0, 0.5);
    }
    item_bias[i] = rng.normal(0.0, spec.item_bias_std);
    // Zipf-like exposure, tilted towards well-liked titles.
    item_weight[i] = std::pow(static_cast<double>(i + 1), -0.9) * std::exp(1.5 * item_bias[i]);
    m.external_id = [&] {
      std::string id = std::to_string(100000 + i * 37 + rng.below(30));
      return std::string(7 - std::min<std::size_t>(7, id.size()), '0') + id;
    }();
    m.tmdb_id = std::to_string(1000 + i * 11);
  }
  // Shuffle exposure so popularity is not tied to id order.
  rng.shuffle(item_weight);

  // Users.
  std::vector<std::vector<double>> user_vec(spec.users, std::vector<double>(d));
  std::vector<double> user_bias(spec.users);
  std::vector<double> activity(spec.users);
  double activity_sum = 0.0;
  for (std::size_t u = 0; u < spec.users; ++u) {
    const std::size_t k = 2 + rng.below(2);
    for (std::size_t f = 0; f < d; ++f) user_vec[u][f] = rng.normal(0.0, 0.3);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t g = detail::weighted_pick(rng, genre_cdf);
      for (std::size_t f = 0; f < d; ++f) user_vec[u][f] += 0.8 * genre_vec[g][f] / static_cast<double>(k);
    }
    user_bias[u] = rng.normal(0.0, spec.user_bias_std);
    activity[u] = std::exp(rng.normal(0.0, 1.1));
    activity_sum += activity[u];
  }
  // Scale for the interaction term so its spread is interaction_std.
  double dot_sq = 0.0;
  for (std::size_t s = 0; s < 2000; ++s) {
    const auto& pu = user_vec[rng.below(spec.users)];
    const auto& qi = item_vec[rng.below(spec.movies)];
    double dot = 0.0;
    for (std::size_t f = 0; f < d; ++f) dot += pu[f] * qi[f];
    dot_sq += dot * dot;
  }
  const double scale = spec.interaction_std / std::sqrt(dot_sq / 2000.0);

  const double extra_total = static_cast<double>(spec.target_ratings) -
                             static_cast<double>(spec.users * spec.min_ratings_per_user);
  std::vector<Rating> ratings;
  ratings.reserve(spec.target_ratings + spec.users);
  std::vector<std::pair<double, std::size_t>> keys(spec.movies);
  for (std::size_t u = 0; u < spec.users; ++u) {
    auto n = spec.min_ratings_per_user +
             static_cast<std::size_t>(std::llround(std::max(0.0, extra_total) * activity[u] / activity_sum));
    n = std::min(n, spec.movies / 3);
    // Weighted sampling without replacement (Efraimidis-Spirakis keys).
    for (std::size_t i = 0; i < spec.movies; ++i) {
      double dot = 0.0;
      for (std::size_t f = 0; f < d; ++f) dot += user_vec[u][f] * item_vec[i][f];
      const double w = item_weight[i] * std::exp(1.2 * scale * dot / spec.interaction_std);
      double x = rng.uniform();
      while (x <= 0.0) x = rng.uniform();
      keys[i] = {std::log(x) / w, i};
    }
    std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(n), keys.end(),
                      [](const auto& a, const auto& b) { return a.first > b.first; });
    const std::int64_t start = 946684800 + static_cast<std::int64_t>(rng.below(18ULL * 365 * 86400));
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = keys[k].second;
      double dot = 0.0;
      for (std::size_t f = 0; f < d; ++f) dot += user_vec[u][f] * item_vec[i][f];
      const double raw = spec.global_mean + user_bias[u] + item_bias[i] + scale * dot + rng.normal(0.0, spec.noise_std);
      const double value = std::clamp(std::round(raw * 2.0) / 2.0, 0.5, 5.0);
      const std::int64_t ts = start + static_cast<std::int64_t>(rng.below(3ULL * 365 * 86400));
      ratings.push_back({static_cast<UserId>(u + 1), movies[i].movie_id, value, ts});
    }
  }
  std::sort(ratings.begin(), ratings.end(), [](const Rating& a, const Rating& b) {
    return a.user_id != b.user_id ? a.user_id < b.user_id : a.movie_id < b.movie_id;
  });

  // Provider snapshot.
  std::vector<ProviderRecord> snapshot;
  snapshot.reserve(spec.movies);
  for (std::size_t i = 0; i < spec.movies; ++i) {
    const MovieRecord& m = movies[i];
    const double roll = rng.uniform();
    if (roll < spec.missing_meta_fraction) continue;
    ProviderRecord r;
    r.external_id = *m.external_id;
    r.title = display_title(m.title);
    r.year = m.release_year;
    std::vector<std::string> names;
    for (std::size_t g : item_genres[i]) names.push_back(genres[g].first);
    r.plot = detail::make_plot(rng, names, *m.release_year);
    r.rating = std::round(std::clamp(6.4 + 2.2 * item_bias[i] + rng.normal(0.0, 0.5), 1.0, 9.5) * 10.0) / 10.0;
    const double rel = item_weight[i] / *std::max_element(item_weight.begin(), item_weight.end());
    r.votes = static_cast<std::int64_t>(std::llround(std::min(2.5e6, 2.0e6 * std::pow(rel, 0.6) * std::exp(rng.normal(0.0, 0.4)))));
    if (roll < spec.missing_meta_fraction + spec.broken_link_fraction) {
      r.external_id = "9" + r.external_id.substr(1);  // stale id in links.csv
    }
    snapshot.push_back(std::move(r));
  }
  return {Dataset(std::move(ratings), std::move(movies)), std::move(snapshot)};
}

/// Writes ratings/movies/links CSVs and provider_snapshot.jsonl into `dir`.
inline void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  write_dataset(corpus.data, dir);
  SnapshotProvider(corpus.snapshot).save(dir / "provider_snapshot.jsonl");
}

}  // namespace llmrec
