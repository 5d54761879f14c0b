#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "llmrec/dataset.hpp"
#include "llmrec/error.hpp"
#include "llmrec/rng.hpp"

namespace llmrec {

// ---- leave-one-out -----------------------------------------------------------

struct LooSplit {
  std::vector<Rating> train;
  std::map<UserId, Rating> held_out;
};

/// Holds out each user's most recent rating (ties: larger movie id). Users
/// with a single rating are not eligible and keep it in train. The rule is
/// deterministic; `seed` is recorded for report headers only.
inline LooSplit loo_split(std::span<const Rating> ratings, [[maybe_unused]] std::uint64_t seed = 0) {
  std::unordered_map<UserId, std::size_t> latest;
  std::unordered_map<UserId, std::size_t> counts;
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    const Rating& r = ratings[i];
    ++counts[r.user_id];
    auto [it, inserted] = latest.try_emplace(r.user_id, i);
    if (!inserted) {
      const Rating& best = ratings[it->second];
      if (r.timestamp > best.timestamp || (r.timestamp == best.timestamp && r.movie_id > best.movie_id)) it->second = i;
    }
  }
  LooSplit split;
  std::vector<bool> held(ratings.size(), false);
  for (const auto& [user, idx] : latest) {
    if (counts[user] < 2) continue;
    held[idx] = true;
    split.held_out.emplace(user, ratings[idx]);
  }
  split.train.reserve(ratings.size() - split.held_out.size());
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    if (!held[i]) split.train.push_back(ratings[i]);
  }
  return split;
}

using RankedLists = std::map<UserId, std::vector<MovieId>>;

namespace detail {

inline std::size_t hits_at(const RankedLists& recs, const std::map<UserId, Rating>& held_out, std::size_t n,
                           double threshold, std::size_t& denominator) {
  std::size_t hits = 0;
  denominator = 0;
  for (const auto& [user, rating] : held_out) {
    if (rating.value < threshold) continue;
    ++denominator;
    auto it = recs.find(user);
    if (it == recs.end()) {
      throw Error(Errc::MissingUser, "evaluation", "no recommendations for held-out user " + std::to_string(user));
    }
    const auto& list = it->second;
    const auto end = list.begin() + static_cast<std::ptrdiff_t>(std::min(n, list.size()));
    if (std::find(list.begin(), end, rating.movie_id) != end) ++hits;
  }
  return hits;
}

}  // namespace detail

/// Fraction of held-out users whose held-out movie is in their top-n.
inline double hit_rate(const RankedLists& recs, const std::map<UserId, Rating>& held_out, std::size_t n) {
  std::size_t denominator = 0;
  const std::size_t hits = detail::hits_at(recs, held_out, n, -std::numeric_limits<double>::infinity(), denominator);
  return denominator == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(denominator);
}

/// Hit rate restricted to held-out ratings >= threshold.
inline double cumulative_hit_rate(const RankedLists& recs, const std::map<UserId, Rating>& held_out, std::size_t n,
                                  double threshold = 4.0) {
  std::size_t denominator = 0;
  const std::size_t hits = detail::hits_at(recs, held_out, n, threshold, denominator);
  if (denominator == 0) {
    throw Error(Errc::EmptyFilteredSet, "evaluation", "no held-out rating reaches the threshold");
  }
  return static_cast<double>(hits) / static_cast<double>(denominator);
}

// ---- stratified split ----------------------------------------------------------

struct StratifiedSplit {
  std::vector<Rating> train;
  std::vector<Rating> test;
};

inline constexpr double kTestFraction = 0.25;

/// Per item: shuffle with the seed, send floor(count / 4) ratings (at least
/// one once the item has two) to test. Single-rating items stay in train.
inline StratifiedSplit stratified_split(std::span<const Rating> ratings, std::uint64_t seed) {
  std::map<MovieId, std::vector<std::size_t>> by_item;
  for (std::size_t i = 0; i < ratings.size(); ++i) by_item[ratings[i].movie_id].push_back(i);
  Rng rng(seed);
  std::vector<bool> in_test(ratings.size(), false);
  for (auto& [_, idx] : by_item) {
    if (idx.size() < 2) continue;
    rng.shuffle(idx);
    const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(kTestFraction * static_cast<double>(idx.size()))));
    for (std::size_t k = 0; k < n_test; ++k) in_test[idx[k]] = true;
  }
  StratifiedSplit split;
  for (std::size_t i = 0; i < ratings.size(); ++i) (in_test[i] ? split.test : split.train).push_back(ratings[i]);
  return split;
}

// ---- ranking metrics -----------------------------------------------------------

struct RankingMetrics {
  double ndcg = 0.0;
  double map = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t users = 0;  // users with a non-empty relevant set
};

struct UserRankingMetrics {
  double ndcg = 0.0;
  double average_precision = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

/// Binary-relevance metrics for one ranked list truncated at k.
inline UserRankingMetrics user_ranking_metrics(std::span<const MovieId> ranked, const std::set<MovieId>& relevant,
                                               std::size_t k) {
  UserRankingMetrics m;
  if (relevant.empty() || k == 0) return m;
  const std::size_t depth = std::min(k, ranked.size());
  double dcg = 0.0, ap_sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < depth; ++r) {
    if (!relevant.contains(ranked[r])) continue;
    ++hits;
    dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    ap_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  const std::size_t ideal_hits = std::min(k, relevant.size());
  double idcg = 0.0;
  for (std::size_t r = 0; r < ideal_hits; ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
  m.ndcg = dcg / idcg;
  m.average_precision = ap_sum / static_cast<double>(ideal_hits);
  m.precision = static_cast<double>(hits) / static_cast<double>(k);
  m.recall = static_cast<double>(hits) / static_cast<double>(relevant.size());
  return m;
}

/// Averages over users whose relevant set is non-empty, summed in user-id
/// order. Users without a ranked list count as empty lists.
inline RankingMetrics ranking_metrics(const RankedLists& ranked, const std::map<UserId, std::set<MovieId>>& relevant,
                                      std::size_t k) {
  RankingMetrics out;
  static const std::vector<MovieId> kEmpty;
  for (const auto& [user, items] : relevant) {
    if (items.empty()) continue;
    auto it = ranked.find(user);
    const auto& list = it == ranked.end() ? kEmpty : it->second;
    const auto m = user_ranking_metrics(list, items, k);
    out.ndcg += m.ndcg;
    out.map += m.average_precision;
    out.precision += m.precision;
    out.recall += m.recall;
    ++out.users;
  }
  if (out.users > 0) {
    const auto n = static_cast<double>(out.users);
    out.ndcg /= n;
    out.map /= n;
    out.precision /= n;
    out.recall /= n;
  }
  return out;
}

/// Relevance sets: every test interaction is relevant.
inline std::map<UserId, std::set<MovieId>> relevance_sets(std::span<const Rating> test) {
  std::map<UserId, std::set<MovieId>> out;
  for (const auto& r : test) out[r.user_id].insert(r.movie_id);
  return out;
}

// ---- improvement ratios --------------------------------------------------------

struct ImprovementRow {
  std::string metric;
  double enhanced = 0.0;
  double base = 0.0;
  std::optional<double> ratio;  // nullopt when base is zero

  std::string ratio_text() const {
    if (!ratio) return "∞";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", *ratio);
    return buf;
  }
};

/// enhanced / base per metric, in the key order of `base`.
inline std::vector<ImprovementRow> improvement_report(const std::vector<std::pair<std::string, double>>& enhanced,
                                                      const std::vector<std::pair<std::string, double>>& base) {
  if (enhanced.size() != base.size()) throw Error(Errc::KeyMismatch, "evaluation", "metric lists differ in length");
  std::vector<ImprovementRow> rows;
  rows.reserve(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto it = std::find_if(enhanced.begin(), enhanced.end(), [&](const auto& e) { return e.first == base[i].first; });
    if (it == enhanced.end()) throw Error(Errc::KeyMismatch, "evaluation", "metric '" + base[i].first + "' missing");
    ImprovementRow row{base[i].first, it->second, base[i].second, std::nullopt};
    if (row.base != 0.0) row.ratio = row.enhanced / row.base;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace llmrec
