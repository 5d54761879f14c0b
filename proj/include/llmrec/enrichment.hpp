#pragma once

#include <algorithm>
#include <atomic>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "llmrec/dataset.hpp"
#include "llmrec/error.hpp"
#include "llmrec/llm.hpp"
#include "llmrec/metadata.hpp"

namespace llmrec {

struct ResolveOptions {
  double match_threshold = kFuzzyMatchThreshold;
  int generation_retries = kDefaultRetries;
};

inline MovieMeta meta_from_provider(MovieId id, const ProviderRecord& record) {
  MovieMeta m;
  m.movie_id = id;
  m.description = sanitize_description(record.plot);
  if (record.rating && *record.rating >= 0.0 && *record.rating <= 10.0) m.imdb_rating = record.rating;
  if (record.votes && *record.votes >= 0) m.set_votes(record.votes);
  m.source = MetaSource::Provider;
  return m;
}

/// Asks the model for a one-line description, retrying empty answers.
inline std::string generate_description(LlmClient& llm, std::string_view title, int retries = kDefaultRetries) {
  const Prompt prompt = build_description_prompt(title);
  ChatRequest request{prompt.system, prompt.user, GenParams::description(), RequestKind::Description, std::nullopt};
  for (int attempt = 0; attempt <= retries; ++attempt) {
    std::string text = sanitize_description(llm.complete(request));
    if (!text.empty()) return text;
  }
  throw Error(Errc::GenerationFailed, "metadata_enrichment",
              "no usable description for '" + std::string(title) + "' after " + std::to_string(retries + 1) + " attempts");
}

/// Cache, then provider by external id, then fuzzy title search, then a
/// generated description. The result is cached before it is returned.
inline MovieMeta resolve_metadata(const MovieRecord& movie, const IdMap& id_map, const MetadataProvider& provider,
                                  LlmClient& llm, MetaCache& cache, const ResolveOptions& options = {}) {
  if (auto cached = cache.get(movie.movie_id)) return *cached;

  std::optional<ProviderRecord> record;
  if (auto external = id_map.external(movie.movie_id)) record = provider.lookup_by_external_id(*external);
  if (record && trim(record->plot).empty()) record.reset();

  if (!record) {
    const std::string query = display_title(movie.title);
    for (const auto& match : provider.search_by_title(query)) {
      if (title_similarity(query, match.record.title) < options.match_threshold) break;
      if (trim(match.record.plot).empty()) continue;
      record = match.record;
      break;
    }
  }

  MovieMeta meta;
  if (record) {
    meta = meta_from_provider(movie.movie_id, *record);
  } else {
    meta.movie_id = movie.movie_id;
    meta.description = generate_description(llm, title_with_year(movie), options.generation_retries);
    meta.source = MetaSource::Generated;
  }
  cache.store(meta);
  return meta;
}

struct ResolveSummary {
  std::size_t resolved = 0;
  std::size_t from_cache = 0;
  std::size_t generated = 0;
  std::vector<std::pair<MovieId, std::string>> failures;
};

/// Resolves every catalog movie with at most `in_flight` concurrent workers.
inline ResolveSummary resolve_all(const Dataset& data, const MetadataProvider& provider, LlmClient& llm, MetaCache& cache,
                                  int in_flight = 1, const ResolveOptions& options = {}) {
  std::vector<const MovieRecord*> movies;
  for (const auto& [_, m] : data.catalog()) movies.push_back(&m);

  ResolveSummary summary;
  std::mutex summary_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < movies.size(); k = next++) {
      const MovieRecord& m = *movies[k];
      const bool cached = cache.get(m.movie_id).has_value();
      try {
        const MovieMeta meta = resolve_metadata(m, data.id_map(), provider, llm, cache, options);
        std::lock_guard lock(summary_mutex);
        ++summary.resolved;
        if (cached) ++summary.from_cache;
        if (!cached && meta.source == MetaSource::Generated) ++summary.generated;
      } catch (const Error& e) {
        std::lock_guard lock(summary_mutex);
        summary.failures.emplace_back(m.movie_id, e.what());
      }
    }
  };
  const int workers = std::clamp(in_flight, 1, 64);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
  }
  std::sort(summary.failures.begin(), summary.failures.end());
  return summary;
}

}  // namespace llmrec
