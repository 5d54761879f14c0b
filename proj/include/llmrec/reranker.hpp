#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrec/dataset.hpp"
#include "llmrec/error.hpp"
#include "llmrec/llm.hpp"
#include "llmrec/metadata.hpp"
#include "llmrec/mf.hpp"
#include "llmrec/profiles.hpp"

namespace llmrec {

/// Candidate pool of N * T * 10^M base recommendations.
struct PoolSpec {
  int n = 10;         // final recommendation count
  double t = 1.0;     // tuning factor in (0, 1]
  int m = 1;          // exponent

  void validate() const {
    if (n < 1) throw Error(Errc::InvalidSpec, "reranker", "N must be >= 1");
    if (!(t > 0.0 && t <= 1.0)) throw Error(Errc::InvalidSpec, "reranker", "T must lie in (0, 1]");
    if (m < 0 || m > 9) throw Error(Errc::InvalidSpec, "reranker", "M must lie in [0, 9]");
  }

  /// A spec whose pool is `search_count` for the given N (T = search_count / (N * 10^M)).
  static PoolSpec with_search_count(int n, int search_count) {
    PoolSpec s{n, 1.0, 0};
    while (static_cast<double>(n) * std::pow(10.0, s.m) < search_count) ++s.m;
    s.t = static_cast<double>(search_count) / (static_cast<double>(n) * std::pow(10.0, s.m));
    return s;
  }
};

/// round(N * T * 10^M), at least N and at most `available`.
inline std::size_t pool_size(const PoolSpec& spec, std::size_t available = std::numeric_limits<std::size_t>::max()) {
  spec.validate();
  const double raw = static_cast<double>(spec.n) * spec.t * std::pow(10.0, spec.m);
  // Snapped to 1e-6 first: 47 * 0.85 * 10 gives 400.
  auto size = static_cast<std::size_t>(std::llround(std::round(raw * 1e6) / 1e6));
  size = std::max(size, static_cast<std::size_t>(spec.n));
  return std::min(size, available);
}

struct ScoredCandidate {
  MovieId movie_id = 0;
  double base_pred = 0.0;
  double sim = 0.0;
  int attempts = 1;

  friend bool operator==(const ScoredCandidate&, const ScoredCandidate&) = default;
};

/// Similarity descending, then base prediction descending, then id ascending.
inline bool reranked_before(const ScoredCandidate& a, const ScoredCandidate& b) {
  if (a.sim != b.sim) return a.sim > b.sim;
  if (a.base_pred != b.base_pred) return a.base_pred > b.base_pred;
  return a.movie_id < b.movie_id;
}

/// Optional memo of similarity scores keyed by (user, movie, profile+ablation hash).
class ScoreCache {
 public:
  using Key = std::tuple<std::int64_t, MovieId, std::string>;

  std::optional<SimilarityScore> get(const Key& key) const {
    std::lock_guard lock(mutex_);
    auto it = scores_.find(key);
    if (it == scores_.end()) return std::nullopt;
    return it->second;
  }
  void put(const Key& key, const SimilarityScore& score) {
    std::lock_guard lock(mutex_);
    scores_.insert_or_assign(key, score);
  }
  std::size_t size() const {
    std::lock_guard lock(mutex_);
    return scores_.size();
  }

 private:
  mutable std::mutex mutex_;
  std::map<Key, SimilarityScore> scores_;
};

struct RerankOptions {
  int retries = kDefaultRetries;
  AblationFlags ablation;
  int parallelism = 1;  // concurrent scoring calls for one user
  ScoreCache* score_cache = nullptr;
};

struct RecommendTiming {
  double base_ms = 0.0;
  double llm_ms = 0.0;
  double total_ms = 0.0;
};

struct Recommendation {
  std::vector<ScoredCandidate> items;
  std::vector<Candidate> pool;  // base candidates in base order
  RecommendTiming timing;
};

/// Scores a base pool against a profile, returned in pool order.
inline std::vector<ScoredCandidate> score_candidates(const PreferenceProfile& profile, const std::vector<Candidate>& pool,
                                                   const std::map<MovieId, MovieRecord>& catalog, const MetaLookup& meta,
                                                   LlmClient& llm, const RerankOptions& options) {
  std::vector<ScoredCandidate> scored(pool.size());
  const std::string key_hash = profile_hash(profile) + "/" + options.ablation.name();
  const std::int64_t user_key = profile.user_id.value_or(-1);

  auto score_one = [&](std::size_t k) {
    const Candidate& c = pool[k];
    auto it = catalog.find(c.movie_id);
    if (it == catalog.end()) {
      throw Error(Errc::DanglingReference, "reranker", "candidate " + std::to_string(c.movie_id) + " not in catalog");
    }
    const ScoreCache::Key key{user_key, c.movie_id, key_hash};
    std::optional<SimilarityScore> s;
    if (options.score_cache) s = options.score_cache->get(key);
    if (!s) {
      const auto request = similarity_request(profile, it->second, find_meta(meta, c.movie_id), options.ablation);
      s = score_similarity(llm, request, options.retries);
      if (options.score_cache) options.score_cache->put(key, *s);
    }
    scored[k] = {c.movie_id, c.predicted, s->value, s->attempts};
  };

  const auto workers = static_cast<std::size_t>(std::clamp(options.parallelism, 1, 64));
  if (workers == 1 || pool.size() < 2) {
    for (std::size_t k = 0; k < pool.size(); ++k) score_one(k);
    return scored;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> threads;
    for (std::size_t w = 0; w < std::min(workers, pool.size()); ++w) {
      threads.emplace_back([&] {
        for (std::size_t k = next++; k < pool.size(); k = next++) {
          try {
            score_one(k);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
  return scored;
}

/// Re-ranks base-model candidates by LLM similarity to a preference profile.
class Reranker {
 public:
  Reranker(const MfModel& model, const std::map<MovieId, MovieRecord>& catalog, const MetaLookup& meta, LlmClient& llm,
           RerankOptions options = {})
      : model_(model), catalog_(catalog), meta_(meta), llm_(llm), options_(std::move(options)) {}

  const RerankOptions& options() const { return options_; }

  /// Candidates are the top pool_size(spec) base predictions for `user`
  /// (profile.user_id when absent) outside `exclude`.
  Recommendation recommend(const PreferenceProfile& profile, const PoolSpec& spec, const std::set<MovieId>& exclude,
                           std::optional<UserId> user = std::nullopt) const {
    using clock = std::chrono::steady_clock;
    spec.validate();
    const auto start = clock::now();
    const UserId who = user ? *user : profile.user_id.value_or(std::numeric_limits<UserId>::min());
    const std::size_t available = model_.item_ids.size();
    Recommendation out;
    out.pool = top_candidates(model_, who, pool_size(spec, std::max<std::size_t>(available, 1)), exclude);
    const auto base_done = clock::now();
    if (out.pool.empty()) throw Error(Errc::NoCandidates, "reranker", "no candidates left after exclusions");

    out.items = score_pool(profile, out.pool);
    std::sort(out.items.begin(), out.items.end(), reranked_before);
    out.items.resize(std::min(out.items.size(), static_cast<std::size_t>(spec.n)));
    const auto end = clock::now();
    out.timing.base_ms = std::chrono::duration<double, std::milli>(base_done - start).count();
    out.timing.llm_ms = std::chrono::duration<double, std::milli>(end - base_done).count();
    out.timing.total_ms = std::chrono::duration<double, std::milli>(end - start).count();
    return out;
  }

  /// Scores an already-computed base pool, returned in pool order.
  std::vector<ScoredCandidate> score_pool(const PreferenceProfile& profile, const std::vector<Candidate>& pool) const {
    return score_candidates(profile, pool, catalog_, meta_, llm_, options_);
  }

 private:
  const MfModel& model_;
  const std::map<MovieId, MovieRecord>& catalog_;
  const MetaLookup& meta_;
  LlmClient& llm_;
  RerankOptions options_;
};

// ---- batch -----------------------------------------------------------------

struct TimingSummary {
  std::size_t users = 0;
  double base_mean_ms = 0.0, base_median_ms = 0.0;
  double llm_mean_ms = 0.0, llm_median_ms = 0.0;
  double total_mean_ms = 0.0, total_median_ms = 0.0;
};

inline TimingSummary summarize_timings(const std::vector<RecommendTiming>& timings) {
  TimingSummary s;
  s.users = timings.size();
  if (timings.empty()) return s;
  auto stats = [&](auto field, double& mean, double& median) {
    std::vector<double> v;
    v.reserve(timings.size());
    for (const auto& t : timings) v.push_back(t.*field);
    double sum = 0.0;
    for (double x : v) sum += x;
    mean = sum / static_cast<double>(v.size());
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    median = v.size() % 2 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
  };
  stats(&RecommendTiming::base_ms, s.base_mean_ms, s.base_median_ms);
  stats(&RecommendTiming::llm_ms, s.llm_mean_ms, s.llm_median_ms);
  stats(&RecommendTiming::total_ms, s.total_mean_ms, s.total_median_ms);
  return s;
}

struct BatchRequest {
  UserId user = 0;
  PreferenceProfile profile;
  std::set<MovieId> exclude;
};

struct BatchResult {
  std::map<UserId, Recommendation> results;
  std::vector<std::pair<UserId, std::string>> failures;
  TimingSummary timing;
};

/// Recommends for many users with up to `workers` users in flight. Results
/// equal sequential `recommend` calls; failures are reported per user.
inline BatchResult batch_recommend(const Reranker& reranker, const std::vector<BatchRequest>& requests, const PoolSpec& spec,
                                   int workers = 1) {
  BatchResult out;
  std::mutex mutex;
  std::atomic<std::size_t> next{0};
  auto run = [&] {
    for (std::size_t k = next++; k < requests.size(); k = next++) {
      const auto& req = requests[k];
      try {
        auto rec = reranker.recommend(req.profile, spec, req.exclude, req.user);
        std::lock_guard lock(mutex);
        out.results.emplace(req.user, std::move(rec));
      } catch (const Error& e) {
        std::lock_guard lock(mutex);
        out.failures.emplace_back(req.user, std::string(errc_name(e.code())) + ": " + e.what());
      }
    }
  };
  const int n = std::clamp(workers, 1, 64);
  if (n == 1) {
    run();
  } else {
    std::vector<std::jthread> threads;
    for (int i = 0; i < n; ++i) threads.emplace_back(run);
  }
  std::sort(out.failures.begin(), out.failures.end());
  std::vector<RecommendTiming> timings;
  for (const auto& [_, rec] : out.results) timings.push_back(rec.timing);
  out.timing = summarize_timings(timings);
  return out;
}

/// Recommendation output object: {user_id, items:[...], timing:{...}}.
inline nlohmann::json recommendation_json(std::optional<UserId> user, const Recommendation& rec,
                                          const std::map<MovieId, MovieRecord>& catalog) {
  nlohmann::json items = nlohmann::json::array();
  for (std::size_t r = 0; r < rec.items.size(); ++r) {
    const auto& it = rec.items[r];
    nlohmann::json item{{"movie_id", it.movie_id}, {"sim", it.sim}, {"base_pred", it.base_pred}, {"rank", r + 1}};
    auto m = catalog.find(it.movie_id);
    item["title"] = m == catalog.end() ? "" : display_title(m->second.title);
    item["year"] = (m != catalog.end() && m->second.release_year) ? nlohmann::json(*m->second.release_year)
                                                                  : nlohmann::json(nullptr);
    items.push_back(std::move(item));
  }
  nlohmann::json j{{"items", items},
                   {"timing",
                    {{"base_ms", rec.timing.base_ms}, {"llm_ms", rec.timing.llm_ms}, {"total_ms", rec.timing.total_ms}}}};
  j["user_id"] = user ? nlohmann::json(*user) : nlohmann::json(nullptr);
  return j;
}

}  // namespace llmrec
