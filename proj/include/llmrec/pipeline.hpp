#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrec/dataset.hpp"
#include "llmrec/error.hpp"
#include "llmrec/evaluation.hpp"
#include "llmrec/llm.hpp"
#include "llmrec/metadata.hpp"
#include "llmrec/mf.hpp"
#include "llmrec/profiles.hpp"
#include "llmrec/reranker.hpp"

namespace llmrec {

enum class Protocol { Loo, Ranking };

inline std::string_view to_string(Protocol p) { return p == Protocol::Loo ? "loo" : "ranking"; }

inline Protocol parse_protocol(std::string_view text) {
  if (text == "loo") return Protocol::Loo;
  if (text == "ranking") return Protocol::Ranking;
  throw Error(Errc::UsageError, "evaluation", "unknown protocol '" + std::string(text) + "' (expected loo|ranking)");
}

struct ProtocolOptions {
  MfKind algo = MfKind::Svd;
  std::optional<TrainConfig> train;  // defaults(algo) when absent
  std::vector<int> ns{1, 5, 10};
  int search_count = 100;
  std::size_t k = 10;
  double chr_threshold = 4.0;
  AutoProfileOptions profile;
  RerankOptions rerank;
  int workers = 1;
  std::uint64_t split_seed = 42;
  std::optional<std::size_t> max_users;    // first users by id, for quick runs
  std::filesystem::path pool_cache_dir;    // empty disables the on-disk pool cache

  TrainConfig train_config() const { return train.value_or(TrainConfig::defaults(algo)); }
};

/// Per-user state shared by both protocols: the base pool, the profile fed to
/// the scorer and, once scored, the re-ranked list.
struct UserRun {
  UserId user = 0;
  std::vector<Candidate> pool;
  std::optional<PreferenceProfile> profile;  // absent for users with no training ratings
  std::vector<ScoredCandidate> reranked;
  RecommendTiming timing;
};

struct PoolSet {
  std::map<UserId, std::vector<Candidate>> pools;
  std::map<UserId, double> base_ms;
  bool from_cache = false;
  std::optional<MfModel> model;  // present when trained in this run
};

// ---- pool cache ----------------------------------------------------------------

namespace detail {

inline std::string pool_cache_key(const Dataset& data, Protocol protocol, const ProtocolOptions& o,
                                  const std::vector<UserId>& users) {
  nlohmann::json k{{"dataset", data.fingerprint()}, {"protocol", to_string(protocol)}, {"algo", to_string(o.algo)},
                   {"train", to_json(o.train_config())}, {"split_seed", o.split_seed}, {"search_count", o.search_count},
                   {"users", users}};
  return fingerprint_of(k.dump());
}

inline std::optional<PoolSet> read_pool_cache(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) return std::nullopt;
  try {
    const auto j = nlohmann::json::from_cbor(in);
    PoolSet set;
    set.from_cache = true;
    for (const auto& entry : j.at("pools")) {
      const UserId user = entry.at("user").get<UserId>();
      auto& pool = set.pools[user];
      for (const auto& c : entry.at("items")) pool.push_back({c.at(0).get<MovieId>(), c.at(1).get<double>()});
      set.base_ms[user] = entry.value("base_ms", 0.0);
    }
    return set;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;  // stale or truncated cache: recompute
  }
}

inline void write_pool_cache(const std::filesystem::path& file, const PoolSet& set) {
  nlohmann::json pools = nlohmann::json::array();
  for (const auto& [user, pool] : set.pools) {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& c : pool) items.push_back({c.movie_id, c.predicted});
    pools.push_back({{"user", user}, {"items", items}, {"base_ms", set.base_ms.at(user)}});
  }
  std::filesystem::create_directories(file.parent_path());
  const auto bytes = nlohmann::json::to_cbor(nlohmann::json{{"pools", pools}});
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(Errc::IoError, "evaluation", "cannot write pool cache " + file.string());
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads; rethrows the first failure.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  const auto w = static_cast<std::size_t>(std::clamp(workers, 1, 64));
  if (w == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mutex;
  {
    std::vector<std::jthread> threads;
    for (std::size_t t = 0; t < std::min(w, n); ++t) {
      threads.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

inline std::map<UserId, std::vector<Rating>> group_by_user(std::span<const Rating> ratings) {
  std::map<UserId, std::vector<Rating>> out;
  for (const auto& r : ratings) out[r.user_id].push_back(r);
  return out;
}

}  // namespace detail

inline MfModel train_model(std::span<const Rating> train, const ProtocolOptions& options) {
  return llmrec::train(train, options.train_config(), options.algo);
}

/// Base pools of `search_count` candidates per user, excluding the user's
/// training ratings. Loaded from the on-disk cache when one matches.
inline PoolSet build_pools(const Dataset& data, Protocol protocol, std::span<const Rating> train,
                           const std::vector<UserId>& users, const ProtocolOptions& options) {
  std::filesystem::path cache_file;
  if (!options.pool_cache_dir.empty()) {
    cache_file = options.pool_cache_dir / (detail::pool_cache_key(data, protocol, options, users) + ".cbor");
    if (auto cached = detail::read_pool_cache(cache_file)) return std::move(*cached);
  }
  PoolSet set;
  set.model = train_model(train, options);
  const auto by_user = detail::group_by_user(train);
  std::vector<std::vector<Candidate>> pools(users.size());
  std::vector<double> times(users.size());
  detail::parallel_for(users.size(), options.workers, [&](std::size_t i) {
    const auto start = std::chrono::steady_clock::now();
    std::set<MovieId> exclude;
    if (auto it = by_user.find(users[i]); it != by_user.end()) {
      for (const auto& r : it->second) exclude.insert(r.movie_id);
    }
    pools[i] = top_candidates(*set.model, users[i], static_cast<std::size_t>(options.search_count), exclude);
    times[i] = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  });
  for (std::size_t i = 0; i < users.size(); ++i) {
    set.pools.emplace(users[i], std::move(pools[i]));
    set.base_ms.emplace(users[i], times[i]);
  }
  if (!cache_file.empty()) detail::write_pool_cache(cache_file, set);
  return set;
}

/// Builds profiles and scores every pool. `held_out` movies never become favorites.
inline std::vector<UserRun> score_users(const Dataset& data, const MetaLookup& meta, LlmClient& llm,
                                        std::span<const Rating> train, const PoolSet& pools,
                                        const std::map<UserId, MovieId>& held_out, const ProtocolOptions& options) {
  const auto by_user = detail::group_by_user(train);
  std::vector<UserRun> runs;
  for (const auto& [user, pool] : pools.pools) runs.push_back({user, pool, std::nullopt, {}, {}});
  detail::parallel_for(runs.size(), options.workers, [&](std::size_t i) {
    UserRun& run = runs[i];
    const auto start = std::chrono::steady_clock::now();
    auto it = by_user.find(run.user);
    if (it != by_user.end()) {
      std::optional<MovieId> exclude;
      if (auto h = held_out.find(run.user); h != held_out.end()) exclude = h->second;
      run.profile = build_auto_profile(run.user, it->second, data.catalog(), meta, options.profile, exclude);
    }
    if (run.profile) {
      run.reranked = score_candidates(*run.profile, run.pool, data.catalog(), meta, llm, options.rerank);
    } else {
      for (const auto& c : run.pool) run.reranked.push_back({c.movie_id, c.predicted, 0.0, 0});
    }
    std::stable_sort(run.reranked.begin(), run.reranked.end(), reranked_before);
    run.timing.base_ms = pools.base_ms.count(run.user) ? pools.base_ms.at(run.user) : 0.0;
    run.timing.llm_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    run.timing.total_ms = run.timing.base_ms + run.timing.llm_ms;
  });
  return runs;
}

inline RankedLists base_lists(const std::vector<UserRun>& runs) {
  RankedLists out;
  for (const auto& r : runs) {
    auto& list = out[r.user];
    for (const auto& c : r.pool) list.push_back(c.movie_id);
  }
  return out;
}

inline RankedLists enhanced_lists(const std::vector<UserRun>& runs) {
  RankedLists out;
  for (const auto& r : runs) {
    auto& list = out[r.user];
    for (const auto& c : r.reranked) list.push_back(c.movie_id);
  }
  return out;
}

// ---- protocols -------------------------------------------------------------------

struct HitRates {
  std::map<int, double> hr;
  std::map<int, double> chr;
};

struct LooOutcome {
  LooSplit split;
  std::vector<UserRun> runs;
  HitRates base;
  HitRates enhanced;
  std::size_t chr_users = 0;
  bool pools_from_cache = false;
  std::optional<MfModel> model;
};

inline std::vector<UserId> limit_users(std::vector<UserId> users, const std::optional<std::size_t>& max_users) {
  std::sort(users.begin(), users.end());
  if (max_users && users.size() > *max_users) users.resize(*max_users);
  return users;
}

inline HitRates hit_rates(const RankedLists& lists, const std::map<UserId, Rating>& held_out, const std::vector<int>& ns,
                          double chr_threshold) {
  HitRates out;
  for (int n : ns) {
    out.hr[n] = hit_rate(lists, held_out, static_cast<std::size_t>(n));
    out.chr[n] = cumulative_hit_rate(lists, held_out, static_cast<std::size_t>(n), chr_threshold);
  }
  return out;
}

/// Leave-one-out: the latest rating of each user is held out, the model is
/// trained on the rest, and each user's pool is re-ranked once. Top-N for
/// every N is a prefix of that one ranking.
inline LooOutcome run_loo(const Dataset& data, const MetaLookup& meta, LlmClient& llm, const ProtocolOptions& options) {
  LooOutcome out;
  out.split = loo_split(data.ratings(), options.split_seed);
  std::vector<UserId> users;
  for (const auto& [u, _] : out.split.held_out) users.push_back(u);
  users = limit_users(std::move(users), options.max_users);
  std::map<UserId, Rating> held;
  std::map<UserId, MovieId> held_ids;
  for (UserId u : users) {
    held.emplace(u, out.split.held_out.at(u));
    held_ids.emplace(u, out.split.held_out.at(u).movie_id);
  }
  out.split.held_out = std::move(held);

  PoolSet pools = build_pools(data, Protocol::Loo, out.split.train, users, options);
  out.pools_from_cache = pools.from_cache;
  out.runs = score_users(data, meta, llm, out.split.train, pools, held_ids, options);
  out.model = std::move(pools.model);
  out.base = hit_rates(base_lists(out.runs), out.split.held_out, options.ns, options.chr_threshold);
  out.enhanced = hit_rates(enhanced_lists(out.runs), out.split.held_out, options.ns, options.chr_threshold);
  for (const auto& [_, r] : out.split.held_out) out.chr_users += r.value >= options.chr_threshold ? 1 : 0;
  return out;
}

struct RankingOutcome {
  StratifiedSplit split;
  std::vector<UserRun> runs;
  RankingMetrics base;
  RankingMetrics enhanced;
  std::size_t cold_users = 0;  // test users with no training ratings
  bool pools_from_cache = false;
  std::optional<MfModel> model;
};

/// Item-stratified 75/25 split; every test interaction is relevant.
inline RankingOutcome run_ranking(const Dataset& data, const MetaLookup& meta, LlmClient& llm,
                                  const ProtocolOptions& options) {
  RankingOutcome out;
  out.split = stratified_split(data.ratings(), options.split_seed);
  auto relevant = relevance_sets(out.split.test);
  std::vector<UserId> users;
  for (const auto& [u, _] : relevant) users.push_back(u);
  users = limit_users(std::move(users), options.max_users);
  std::map<UserId, std::set<MovieId>> kept;
  for (UserId u : users) kept.emplace(u, std::move(relevant.at(u)));

  PoolSet pools = build_pools(data, Protocol::Ranking, out.split.train, users, options);
  out.pools_from_cache = pools.from_cache;
  out.runs = score_users(data, meta, llm, out.split.train, pools, {}, options);
  out.model = std::move(pools.model);
  for (const auto& r : out.runs) out.cold_users += r.profile ? 0 : 1;
  out.base = ranking_metrics(base_lists(out.runs), kept, options.k);
  out.enhanced = ranking_metrics(enhanced_lists(out.runs), kept, options.k);
  return out;
}

// ---- profiles artifact -------------------------------------------------------------

inline void write_profiles(const std::filesystem::path& path, const std::vector<PreferenceProfile>& profiles) {
  std::string text;
  for (const auto& p : profiles) text += to_json(p).dump() + "\n";
  write_text(path, text);
}

inline std::vector<PreferenceProfile> read_profiles(const std::filesystem::path& path,
                                                    const std::map<MovieId, MovieRecord>* catalog = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::MissingFile, "preference_profiles", "profiles file not found: " + path.string());
  std::vector<PreferenceProfile> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (trim(line).empty()) continue;
    try {
      out.push_back(profile_from_json(nlohmann::json::parse(line), catalog));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::MalformedRow, "preference_profiles", path.string() + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

/// Users whose profile lists their held-out movie as a favorite.
inline std::vector<UserId> profile_integrity_violations(const std::vector<PreferenceProfile>& profiles,
                                                        const std::map<UserId, Rating>& held_out) {
  std::vector<UserId> bad;
  for (const auto& p : profiles) {
    if (!p.user_id) continue;
    auto it = held_out.find(*p.user_id);
    if (it == held_out.end()) continue;
    for (const auto& f : p.favorites) {
      if (f.movie_id == it->second.movie_id) {
        bad.push_back(*p.user_id);
        break;
      }
    }
  }
  return bad;
}

inline std::vector<PreferenceProfile> profiles_of(const std::vector<UserRun>& runs) {
  std::vector<PreferenceProfile> out;
  for (const auto& r : runs) {
    if (r.profile) out.push_back(*r.profile);
  }
  return out;
}

// ---- reports -----------------------------------------------------------------------

/// Published FastAI ranking numbers, shown as a fixed reference row.
inline constexpr RankingMetrics kFastAiReference{0.135, 0.023, 0.114, 0.047, 0};

struct ReportHeader {
  std::string config_hash;
  std::string dataset_fingerprint;
  std::string algo;
  std::string llm;
  std::uint64_t split_seed = 0;
  std::uint64_t train_seed = 0;
  nlohmann::json parameters = nlohmann::json::object();

  nlohmann::json to_json() const {
    return {{"config_hash", config_hash}, {"dataset_fingerprint", dataset_fingerprint},
            {"algo", algo},               {"llm", llm},
            {"seeds", {{"split", split_seed}, {"train", train_seed}}},
            {"parameters", parameters}};
  }
};

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

inline std::string algo_label(std::string_view algo) { return algo == "svdpp" ? "SVD++" : "SVD"; }

inline std::vector<std::pair<std::string, double>> hit_rate_metrics(const HitRates& h, double chr_threshold) {
  std::vector<std::pair<std::string, double>> out;
  for (const auto& [n, v] : h.hr) out.emplace_back("Hit Rate N@" + std::to_string(n), v);
  for (const auto& [n, v] : h.chr) {
    out.emplace_back("Cumulative Hit (>= " + fixed(chr_threshold, 1) + ") N@" + std::to_string(n), v);
  }
  return out;
}

inline nlohmann::json timing_json(const TimingSummary& t) {
  return {{"users", t.users},
          {"base_mean_s", t.base_mean_ms / 1000.0},
          {"base_median_s", t.base_median_ms / 1000.0},
          {"llm_mean_s", t.llm_mean_ms / 1000.0},
          {"llm_median_s", t.llm_median_ms / 1000.0},
          {"total_mean_s", t.total_mean_ms / 1000.0},
          {"total_median_s", t.total_median_ms / 1000.0}};
}

inline TimingSummary run_timings(const std::vector<UserRun>& runs) {
  std::vector<RecommendTiming> t;
  for (const auto& r : runs) t.push_back(r.timing);
  return summarize_timings(t);
}

inline nlohmann::json loo_report_json(const ReportHeader& header, const LooOutcome& o, const ProtocolOptions& options) {
  nlohmann::json rows = nlohmann::json::array();
  const auto base = hit_rate_metrics(o.base, options.chr_threshold);
  const auto enhanced = hit_rate_metrics(o.enhanced, options.chr_threshold);
  for (const auto& row : improvement_report(enhanced, base)) {
    rows.push_back({{"metric", row.metric},
                    {"enhanced", row.enhanced},
                    {"base", row.base},
                    {"ratio", row.ratio ? nlohmann::json(*row.ratio) : nlohmann::json("∞")}});
  }
  auto avg = [](const std::map<int, double>& m) {
    double s = 0.0;
    for (const auto& [_, v] : m) s += v;
    return m.empty() ? 0.0 : s / static_cast<double>(m.size());
  };
  auto as_json = [](const std::map<int, double>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [n, v] : m) j[std::to_string(n)] = v;
    return j;
  };
  return {{"header", header.to_json()},
          {"protocol", "loo"},
          {"held_out_users", o.split.held_out.size()},
          {"chr_users", o.chr_users},
          {"pools_from_cache", o.pools_from_cache},
          {"base", {{"hr", as_json(o.base.hr)}, {"chr", as_json(o.base.chr)}}},
          {"enhanced", {{"hr", as_json(o.enhanced.hr)}, {"chr", as_json(o.enhanced.chr)}}},
          {"averages",
           {{"base_hr", avg(o.base.hr)},
            {"base_chr", avg(o.base.chr)},
            {"enhanced_hr", avg(o.enhanced.hr)},
            {"enhanced_chr", avg(o.enhanced.chr)}}},
          {"improvement", rows},
          {"timing", timing_json(run_timings(o.runs))}};
}

inline nlohmann::json ranking_metrics_json(const RankingMetrics& m) {
  return {{"ndcg", m.ndcg}, {"map", m.map}, {"precision", m.precision}, {"recall", m.recall}, {"users", m.users}};
}

inline nlohmann::json ranking_report_json(const ReportHeader& header, const RankingOutcome& o,
                                          const ProtocolOptions& options) {
  const auto pairs = [](const RankingMetrics& m) {
    return std::vector<std::pair<std::string, double>>{
        {"NDCG", m.ndcg}, {"MAP", m.map}, {"Precision", m.precision}, {"Recall", m.recall}};
  };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : improvement_report(pairs(o.enhanced), pairs(o.base))) {
    rows.push_back({{"metric", row.metric + "@" + std::to_string(options.k)},
                    {"enhanced", row.enhanced},
                    {"base", row.base},
                    {"ratio", row.ratio ? nlohmann::json(*row.ratio) : nlohmann::json("∞")}});
  }
  return {{"header", header.to_json()},
          {"protocol", "ranking"},
          {"k", options.k},
          {"train_size", o.split.train.size()},
          {"test_size", o.split.test.size()},
          {"cold_users", o.cold_users},
          {"pools_from_cache", o.pools_from_cache},
          {"base", ranking_metrics_json(o.base)},
          {"enhanced", ranking_metrics_json(o.enhanced)},
          {"reference_fastai", ranking_metrics_json(kFastAiReference)},
          {"improvement", rows},
          {"timing", timing_json(run_timings(o.runs))}};
}

namespace detail {

/// Left-aligned first column, right-aligned others.
inline std::string render_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  auto cells = [](const std::string& s) {
    std::size_t n = 0;
    for (unsigned char c : s) n += (c & 0xC0) != 0x80;  // count code points
    return n;
  };
  for (const auto& row : rows) {
    width.resize(std::max(width.size(), row.size()));
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], cells(row[c]));
  }
  std::string out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const auto pad = std::string(width[c] - cells(rows[r][c]), ' ');
      out += c == 0 ? rows[r][c] + pad : "  " + pad + rows[r][c];
    }
    out += "\n";
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : width) total += w + 2;
      out += std::string(total - 2, '-') + "\n";
    }
  }
  return out;
}

inline std::string header_text(const nlohmann::json& h) {
  std::ostringstream out;
  out << "# config " << h.at("config_hash").get<std::string>() << "  dataset " << h.at("dataset_fingerprint").get<std::string>()
      << "\n# seeds split=" << h.at("seeds").at("split") << " train=" << h.at("seeds").at("train")
      << "  llm " << h.at("llm").get<std::string>() << "\n";
  for (const auto& [k, v] : h.at("parameters").items()) out << "# " << k << " = " << v.dump() << "\n";
  return out.str();
}

}  // namespace detail

inline std::string timing_text(const nlohmann::json& t, std::string_view algo) {
  const std::string label = algo_label(algo);
  return detail::render_table({{"Metric (sec., mean / median)", "Value"},
                               {label + " Time", fixed(t.at("base_mean_s"), 3) + " / " + fixed(t.at("base_median_s"), 3)},
                               {label + " LLM Time", fixed(t.at("llm_mean_s"), 3) + " / " + fixed(t.at("llm_median_s"), 3)},
                               {"Total Time", fixed(t.at("total_mean_s"), 3) + " / " + fixed(t.at("total_median_s"), 3)}});
}

/// Aligned-column rendering of a report produced by loo_report_json or
/// ranking_report_json.
inline std::string report_text(const nlohmann::json& report) {
  const auto& h = report.at("header");
  const std::string algo = h.at("algo");
  const std::string label = algo_label(algo);
  std::string out = detail::header_text(h) + "\n";
  if (report.at("protocol") == "loo") {
    out += label + " LLM vs. " + label + " (leave-one-out, " + std::to_string(report.at("held_out_users").get<int>()) +
           " held-out users, " + std::to_string(report.at("chr_users").get<int>()) + " at or above threshold)\n\n";
    std::vector<std::vector<std::string>> rows{{"Metric", label + " LLM", label, "Improvement Ratio"}};
    for (const auto& r : report.at("improvement")) {
      rows.push_back({r.at("metric"), fixed(r.at("enhanced"), 6), fixed(r.at("base"), 6),
                      r.at("ratio").is_string() ? r.at("ratio").get<std::string>() : fixed(r.at("ratio"), 3)});
    }
    out += detail::render_table(rows) + "\n";
    const auto& a = report.at("averages");
    out += detail::render_table({{"Metric", label, label + " LLM"},
                                 {"Average Hit Rate", fixed(a.at("base_hr"), 6), fixed(a.at("enhanced_hr"), 6)},
                                 {"Average Cumulative Hit Rate", fixed(a.at("base_chr"), 6), fixed(a.at("enhanced_chr"), 6)}});
  } else {
    const std::string k = std::to_string(report.at("k").get<int>());
    out += "Ranking metrics (item-stratified 75/25 split, K=" + k + ")\n\n";
    auto row = [&](const std::string& name, const nlohmann::json& m) {
      return std::vector<std::string>{name, fixed(m.at("ndcg"), 3), fixed(m.at("map"), 3), fixed(m.at("precision"), 3),
                                      fixed(m.at("recall"), 3)};
    };
    out += detail::render_table({{"Algorithm", "NDCG@" + k, "MAP@" + k, "Precision@" + k, "Recall@" + k},
                                 row(label, report.at("base")),
                                 row(label + " LLM", report.at("enhanced")),
                                 row("FastAI (reference)", report.at("reference_fastai"))});
  }
  out += "\n" + timing_text(report.at("timing"), algo);
  return out;
}

// ---- ablation ----------------------------------------------------------------------

struct AblationRow {
  AblationFlags flags;
  HitRates rates;
};

/// Leave-one-out with the full prompt and with each component dropped in
/// turn. Pools and profiles are computed once and shared by every row.
inline std::vector<AblationRow> run_ablation(const Dataset& data, const MetaLookup& meta, LlmClient& llm,
                                             const ProtocolOptions& options) {
  ProtocolOptions o = options;
  o.rerank.ablation = {};
  LooOutcome full = run_loo(data, meta, llm, o);
  std::vector<AblationRow> rows{{AblationFlags{}, full.enhanced}};

  PoolSet pools;
  for (const auto& r : full.runs) {
    pools.pools.emplace(r.user, r.pool);
    pools.base_ms.emplace(r.user, r.timing.base_ms);
  }
  std::map<UserId, MovieId> held_ids;
  for (const auto& [u, r] : full.split.held_out) held_ids.emplace(u, r.movie_id);
  for (const auto& flags : AblationFlags::single_drops()) {
    o.rerank.ablation = flags;
    const auto runs = score_users(data, meta, llm, full.split.train, pools, held_ids, o);
    rows.push_back({flags, hit_rates(enhanced_lists(runs), full.split.held_out, o.ns, o.chr_threshold)});
  }
  return rows;
}

inline nlohmann::json ablation_report_json(const ReportHeader& header, const std::vector<AblationRow>& rows) {
  nlohmann::json out{{"header", header.to_json()}, {"protocol", "ablation"}, {"rows", nlohmann::json::array()}};
  for (const auto& r : rows) {
    nlohmann::json ns = nlohmann::json::array(), hr = nlohmann::json::array(), chr = nlohmann::json::array();
    for (const auto& [n, v] : r.rates.hr) {
      ns.push_back(n);
      hr.push_back(v);
      chr.push_back(r.rates.chr.at(n));
    }
    out["rows"].push_back({{"variant", r.flags.name()}, {"n", ns}, {"hr", hr}, {"chr", chr}});
  }
  return out;
}

inline std::string ablation_text(const nlohmann::json& report) {
  std::vector<std::vector<std::string>> rows{{"Variant"}};
  const auto& ns = report.at("rows").at(0).at("n");
  for (const auto& n : ns) rows[0].push_back("HR@" + n.dump());
  for (const auto& n : ns) rows[0].push_back("CHR@" + n.dump());
  for (const auto& r : report.at("rows")) {
    std::vector<std::string> row{r.at("variant")};
    for (const auto& v : r.at("hr")) row.push_back(fixed(v, 6));
    for (const auto& v : r.at("chr")) row.push_back(fixed(v, 6));
    rows.push_back(std::move(row));
  }
  return detail::header_text(report.at("header")) + "\n" + detail::render_table(rows);
}

}  // namespace llmrec
