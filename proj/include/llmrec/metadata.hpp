#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrec/dataset.hpp"
#include "llmrec/error.hpp"

namespace llmrec {

inline constexpr std::int64_t kVotesForFullPopularity = 1'000'000;

/// Linear map of IMDb vote counts onto [0, 100], saturating at one million votes.
inline double normalize_popularity(std::int64_t votes) {
  const double score = 100.0 * static_cast<double>(votes) / static_cast<double>(kVotesForFullPopularity);
  return std::min(100.0, std::max(0.0, score));
}

enum class MetaSource { Provider, Generated, Manual };

inline std::string_view to_string(MetaSource s) {
  switch (s) {
    case MetaSource::Provider: return "provider";
    case MetaSource::Generated: return "generated";
    case MetaSource::Manual: return "manual";
  }
  return "provider";
}

inline std::optional<MetaSource> parse_meta_source(std::string_view s) {
  if (s == "provider") return MetaSource::Provider;
  if (s == "generated") return MetaSource::Generated;
  if (s == "manual") return MetaSource::Manual;
  return std::nullopt;
}

struct MovieMeta {
  MovieId movie_id = 0;
  std::string description;
  std::optional<double> imdb_rating;
  std::optional<std::int64_t> votes;
  std::optional<double> popularity;
  MetaSource source = MetaSource::Provider;

  /// Sets votes together with the derived popularity.
  void set_votes(std::optional<std::int64_t> v) {
    votes = v;
    popularity = v ? std::optional<double>(normalize_popularity(*v)) : std::nullopt;
  }

  bool valid() const {
    if (description.find_first_of("\r\n") != std::string::npos) return false;
    if (imdb_rating && !(*imdb_rating >= 0.0 && *imdb_rating <= 10.0)) return false;
    if (votes.has_value() != popularity.has_value()) return false;
    if (votes && (*votes < 0 || *popularity != normalize_popularity(*votes))) return false;
    return true;
  }

  friend bool operator==(const MovieMeta&, const MovieMeta&) = default;
};

/// Read-only view used by the profile builder and the re-ranker.
using MetaLookup = std::unordered_map<MovieId, MovieMeta>;

inline const MovieMeta* find_meta(const MetaLookup& lookup, MovieId id) {
  auto it = lookup.find(id);
  return it == lookup.end() ? nullptr : &it->second;
}

inline constexpr std::size_t kMaxDescriptionChars = 600;

/// Single-line description: newlines become spaces, runs of whitespace
/// collapse, and text over 600 characters is cut at the last sentence end.
inline std::string sanitize_description(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (c == '\n' || c == '\r' || c == '\t' || c == ' ') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  if (out.size() <= kMaxDescriptionChars) return out;

  std::size_t cut = std::string::npos;
  for (std::size_t i = kMaxDescriptionChars; i > 0; --i) {
    const char c = out[i - 1];
    if ((c == '.' || c == '!' || c == '?') && (i == out.size() || out[i] == ' ')) {
      cut = i;
      break;
    }
  }
  if (cut == std::string::npos) {
    cut = out.rfind(' ', kMaxDescriptionChars);
    if (cut == std::string::npos || cut == 0) cut = kMaxDescriptionChars;
  }
  out.resize(cut);
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

// ---- fuzzy title matching --------------------------------------------------

inline constexpr double kFuzzyMatchThreshold = 0.85;

/// Case-folded alphanumeric tokens; punctuation separates tokens. Bytes
/// outside ASCII are kept so accented titles still compare.
inline std::vector<std::string> title_tokens(std::string_view title) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : title) {
    if (std::isalnum(c) || c >= 0x80) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (c == '\'') {
      continue;  // "Schindler's" == "Schindlers"
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

inline std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t subst = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, subst});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace detail {

// Sequel markers must match exactly: "2" vs "3" or "ii" vs "iii" are different films.
inline bool is_ordinal_token(std::string_view t) {
  if (std::all_of(t.begin(), t.end(), [](char c) { return c >= '0' && c <= '9'; })) return true;
  return t.find_first_not_of("ivx") == std::string_view::npos && t.size() <= 4;
}

inline double token_similarity(std::string_view a, std::string_view b) {
  if (a == b) return 1.0;
  if (is_ordinal_token(a) || is_ordinal_token(b)) return 0.0;
  const double longest = static_cast<double>(std::max(a.size(), b.size()));
  return 1.0 - static_cast<double>(levenshtein(a, b)) / longest;
}

inline double coverage(const std::vector<std::string>& from, const std::vector<std::string>& to) {
  double total = 0.0;
  for (const auto& a : from) {
    double best = 0.0;
    for (const auto& b : to) best = std::max(best, token_similarity(a, b));
    total += best;
  }
  return total;
}

}  // namespace detail

/// Symmetric token-alignment similarity in [0, 1]: every token on either side
/// is paired with its closest counterpart (normalized edit distance) and the
/// scores are averaged.
inline double title_similarity(std::string_view a, std::string_view b) {
  const auto ta = title_tokens(a);
  const auto tb = title_tokens(b);
  if (ta.empty() || tb.empty()) return ta.empty() && tb.empty() ? 1.0 : 0.0;
  const double total = detail::coverage(ta, tb) + detail::coverage(tb, ta);
  return total / static_cast<double>(ta.size() + tb.size());
}

/// Search ranking score: mostly how well the query tokens are covered, with a
/// smaller symmetric term so shorter exact titles rank first.
inline double search_score(std::string_view query, std::string_view title) {
  const auto tq = title_tokens(query);
  const auto tt = title_tokens(title);
  if (tq.empty() || tt.empty()) return 0.0;
  const double covered = detail::coverage(tq, tt) / static_cast<double>(tq.size());
  return 0.7 * covered + 0.3 * title_similarity(query, title);
}

// ---- provider ------------------------------------------------------------

/// Copyable call counter for instrumenting providers and clients.
class CallCounter {
 public:
  CallCounter() = default;
  CallCounter(const CallCounter& other) : count_(other.count_.load()) {}
  CallCounter& operator=(const CallCounter& other) {
    count_ = other.count_.load();
    return *this;
  }
  void bump() const { count_.fetch_add(1, std::memory_order_relaxed); }
  std::size_t value() const { return count_.load(std::memory_order_relaxed); }

 private:
  mutable std::atomic<std::size_t> count_{0};
};

struct ProviderRecord {
  std::string external_id;
  std::string title;
  std::optional<int> year;
  std::string plot;
  std::optional<double> rating;
  std::optional<std::int64_t> votes;

  friend bool operator==(const ProviderRecord&, const ProviderRecord&) = default;
};

struct ProviderMatch {
  ProviderRecord record;
  double similarity = 0.0;
};

/// External metadata source. Lookups are read-only and idempotent; transient
/// failures are reported as Errc::ProviderUnavailable.
class MetadataProvider {
 public:
  virtual ~MetadataProvider() = default;
  virtual std::optional<ProviderRecord> lookup_by_external_id(const std::string& external_id) const = 0;
  /// Matches ranked by similarity, best first.
  virtual std::vector<ProviderMatch> search_by_title(const std::string& title) const = 0;
};

inline nlohmann::json to_json(const ProviderRecord& r) {
  nlohmann::json j{{"external_id", r.external_id}, {"title", r.title}, {"plot", r.plot}};
  j["year"] = r.year ? nlohmann::json(*r.year) : nlohmann::json(nullptr);
  j["rating"] = r.rating ? nlohmann::json(*r.rating) : nlohmann::json(nullptr);
  j["votes"] = r.votes ? nlohmann::json(*r.votes) : nlohmann::json(nullptr);
  return j;
}

inline ProviderRecord provider_record_from_json(const nlohmann::json& j) {
  ProviderRecord r;
  r.external_id = j.at("external_id").get<std::string>();
  r.title = j.at("title").get<std::string>();
  r.plot = j.value("plot", "");
  if (j.contains("year") && !j["year"].is_null()) r.year = j["year"].get<int>();
  if (j.contains("rating") && !j["rating"].is_null()) r.rating = j["rating"].get<double>();
  if (j.contains("votes") && !j["votes"].is_null()) r.votes = j["votes"].get<std::int64_t>();
  return r;
}

/// Offline provider backed by a JSON-lines snapshot
/// (`{"external_id","title","year","plot","rating","votes"}` per line).
class SnapshotProvider : public MetadataProvider {
 public:
  SnapshotProvider() = default;
  explicit SnapshotProvider(std::vector<ProviderRecord> records) {
    for (auto& r : records) add(std::move(r));
  }

  static SnapshotProvider load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::MissingFile, "metadata_enrichment", "cannot open snapshot " + path.string());
    SnapshotProvider provider;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
      ++line_number;
      if (line.empty()) continue;
      try {
        provider.add(provider_record_from_json(nlohmann::json::parse(line)));
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::MalformedRow, "metadata_enrichment",
                    path.filename().string() + ":" + std::to_string(line_number) + ": " + e.what());
      }
    }
    return provider;
  }

  void save(const std::filesystem::path& path) const {
    std::string text;
    for (const auto& [_, r] : records_) text += to_json(r).dump() + "\n";
    write_text(path, text);
  }

  void add(ProviderRecord record) {
    std::string key = record.external_id;
    records_.insert_or_assign(std::move(key), std::move(record));
  }

  std::size_t size() const { return records_.size(); }

  std::optional<ProviderRecord> lookup_by_external_id(const std::string& external_id) const override {
    lookups_.bump();
    auto it = records_.find(external_id);
    if (it == records_.end()) return std::nullopt;
    return it->second;
  }

  std::vector<ProviderMatch> search_by_title(const std::string& title) const override {
    searches_.bump();
    std::vector<ProviderMatch> matches;
    for (const auto& [_, r] : records_) {
      const double s = title_similarity(title, r.title);
      if (s > 0.0) matches.push_back({r, s});
    }
    std::stable_sort(matches.begin(), matches.end(),
                     [](const ProviderMatch& a, const ProviderMatch& b) { return a.similarity > b.similarity; });
    if (matches.size() > 20) matches.resize(20);
    return matches;
  }

  std::size_t lookup_calls() const { return lookups_.value(); }
  std::size_t search_calls() const { return searches_.value(); }

 private:
  std::map<std::string, ProviderRecord> records_;
  CallCounter lookups_;
  CallCounter searches_;
};

// ---- cache -----------------------------------------------------------------

inline constexpr int kMetaSchemaVersion = 1;

inline nlohmann::json to_json(const MovieMeta& m) {
  nlohmann::json j{{"schema_version", kMetaSchemaVersion},
                   {"movie_id", m.movie_id},
                   {"description", m.description},
                   {"source", to_string(m.source)}};
  j["imdb_rating"] = m.imdb_rating ? nlohmann::json(*m.imdb_rating) : nlohmann::json(nullptr);
  j["votes"] = m.votes ? nlohmann::json(*m.votes) : nlohmann::json(nullptr);
  j["popularity"] = m.popularity ? nlohmann::json(*m.popularity) : nlohmann::json(nullptr);
  return j;
}

/// nullopt when the object is not a valid MovieMeta record.
inline std::optional<MovieMeta> movie_meta_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("schema_version", 0) != kMetaSchemaVersion) return std::nullopt;
    MovieMeta m;
    m.movie_id = j.at("movie_id").get<MovieId>();
    m.description = j.at("description").get<std::string>();
    auto source = parse_meta_source(j.at("source").get<std::string>());
    if (!source) return std::nullopt;
    m.source = *source;
    if (!j.at("imdb_rating").is_null()) m.imdb_rating = j["imdb_rating"].get<double>();
    if (!j.at("votes").is_null()) m.votes = j["votes"].get<std::int64_t>();
    if (!j.at("popularity").is_null()) m.popularity = j["popularity"].get<double>();
    if (!m.valid()) return std::nullopt;
    return m;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

/// Append-only JSON-lines cache of MovieMeta; the last record per movie wins.
/// Reads may run concurrently; writes go through one lock.
class MetaCache {
 public:
  MetaCache() = default;
  explicit MetaCache(std::filesystem::path path) : path_(std::move(path)) { reload(); }

  /// Re-reads the backing file. Returns the number of corrupted lines skipped.
  std::size_t reload() {
    std::unique_lock lock(mutex_);
    records_.clear();
    warnings_ = 0;
    if (path_.empty() || !std::filesystem::exists(path_)) return 0;
    std::ifstream in(path_);
    if (!in) throw Error(Errc::IoError, "metadata_enrichment", "cannot read cache " + path_.string());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::optional<MovieMeta> meta;
      try {
        meta = movie_meta_from_json(nlohmann::json::parse(line));
      } catch (const nlohmann::json::exception&) {
      }
      if (!meta) {
        ++warnings_;
        continue;
      }
      records_.insert_or_assign(meta->movie_id, std::move(*meta));
    }
    return warnings_;
  }

  std::optional<MovieMeta> get(MovieId id) const {
    std::shared_lock lock(mutex_);
    auto it = records_.find(id);
    if (it == records_.end()) return std::nullopt;
    return it->second;
  }

  void store(const MovieMeta& meta) {
    if (!meta.valid()) {
      throw Error(Errc::IoError, "metadata_enrichment", "refusing to cache invalid metadata for movie " +
                                                            std::to_string(meta.movie_id));
    }
    std::unique_lock lock(mutex_);
    if (!path_.empty()) {
      if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
      std::ofstream out(path_, std::ios::app);
      if (!out) throw Error(Errc::IoError, "metadata_enrichment", "cannot append to cache " + path_.string());
      out << to_json(meta).dump() << '\n';
      if (!out) throw Error(Errc::IoError, "metadata_enrichment", "write failed for cache " + path_.string());
    }
    records_.insert_or_assign(meta.movie_id, meta);
  }

  std::size_t size() const {
    std::shared_lock lock(mutex_);
    return records_.size();
  }

  std::size_t warning_count() const {
    std::shared_lock lock(mutex_);
    return warnings_;
  }

  MetaLookup snapshot() const {
    std::shared_lock lock(mutex_);
    return {records_.begin(), records_.end()};
  }

 private:
  std::filesystem::path path_;
  mutable std::shared_mutex mutex_;
  std::map<MovieId, MovieMeta> records_;
  std::size_t warnings_ = 0;
};

}  // namespace llmrec
