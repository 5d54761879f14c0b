#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <mutex>
#include <optional>
#include <regex>
#include <semaphore>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "llmrec/dataset.hpp"
#include "llmrec/error.hpp"
#include "llmrec/metadata.hpp"
#include "llmrec/profiles.hpp"

namespace llmrec {

enum class LlmMode { Development, Production, Mock };

inline std::string_view to_string(LlmMode mode) {
  switch (mode) {
    case LlmMode::Development: return "development";
    case LlmMode::Production: return "production";
    case LlmMode::Mock: return "mock";
  }
  return "mock";
}

inline LlmMode parse_llm_mode(std::string_view text) {
  if (text == "development" || text == "dev") return LlmMode::Development;
  if (text == "production" || text == "prod") return LlmMode::Production;
  if (text == "mock") return LlmMode::Mock;
  throw Error(Errc::ConfigError, "llm_gateway", "unknown llm.mode '" + std::string(text) + "'");
}

struct GenParams {
  double temperature = 0.0;
  int max_tokens = 8;
  std::vector<std::string> stop;

  static GenParams scoring() { return {0.0, 8, {}}; }
  static GenParams description() { return {0.7, 160, {}}; }

  void validate() const {
    if (!(temperature >= 0.0) || max_tokens < 1) {
      throw Error(Errc::UsageError, "llm_gateway", "GenParams requires temperature >= 0 and max_tokens >= 1");
    }
  }
};

enum class RequestKind { Description, Similarity };

/// Prompt-visible features of one (profile, candidate) pair. Sent alongside a
/// similarity request so deterministic mock backends can score without
/// parsing prompt text; never transmitted to a real endpoint.
struct ScoringContext {
  std::optional<UserId> user_id;
  MovieId movie_id = 0;
  std::vector<std::string> candidate_genres;  // empty when descriptions are ablated
  std::vector<std::string> profile_genres;    // from favorites and preference text
  std::optional<int> candidate_year;
  std::optional<std::pair<int, int>> year_range;
  std::optional<double> imdb_rating;
  std::optional<double> popularity;
  bool rating_pref = false;
  bool popularity_pref = false;
};

struct ChatRequest {
  std::string system;
  std::string user;
  GenParams params;
  RequestKind kind = RequestKind::Similarity;
  std::optional<ScoringContext> context;
};

/// OpenAI-style chat completion. Implementations throw Errc::TransportError
/// when the backend cannot be reached.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const ChatRequest& request) = 0;
  virtual LlmMode mode() const = 0;

  std::string complete(const std::string& system, const std::string& user, const GenParams& params) {
    return complete(ChatRequest{system, user, params, RequestKind::Similarity, std::nullopt});
  }
};

/// Caps concurrent requests to a wrapped client.
class InFlightLimiter : public LlmClient {
 public:
  using LlmClient::complete;

  InFlightLimiter(LlmClient& inner, int cap) : inner_(inner), slots_(std::clamp(cap, 1, 1024)) {}

  std::string complete(const ChatRequest& request) override {
    slots_.acquire();
    struct Release {
      std::counting_semaphore<1024>& s;
      ~Release() { s.release(); }
    } release{slots_};
    return inner_.complete(request);
  }
  LlmMode mode() const override { return inner_.mode(); }

 private:
  LlmClient& inner_;
  std::counting_semaphore<1024> slots_;
};

// ---- prompts ---------------------------------------------------------------

struct Prompt {
  std::string system;
  std::string user;
};

struct DescriptionExample {
  std::string title;
  std::string description;
};

inline const std::vector<DescriptionExample>& default_description_examples() {
  static const std::vector<DescriptionExample> examples = {
      {"Inception",
       "A thief who steals corporate secrets through dream-sharing technology is tasked with implanting an idea into a "
       "CEO's mind."},
      {"The Matrix", "A computer hacker discovers his reality is an illusion and joins rebels to fight its controllers."},
  };
  return examples;
}

inline constexpr std::string_view kDescriptionSystemPrompt =
    "You are a helpful assistant that generates concise movie descriptions. Do not use newlines in your response. The "
    "examples provided are for context only and should not appear in your output. Return only the description.";

inline std::string trim(std::string_view text) {
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(" \t\r\n");
  return std::string(text.substr(first, last - first + 1));
}

inline Prompt build_description_prompt(std::string_view title,
                                       const std::vector<DescriptionExample>& examples = default_description_examples()) {
  const std::string clean = trim(title);
  if (clean.empty()) throw Error(Errc::UsageError, "llm_gateway", "description prompt needs a title");
  std::string user;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    user += "Example " + std::to_string(i + 1) + ":\n";
    user += "Movie title: " + examples[i].title + "\n";
    user += "Description: " + examples[i].description + "\n\n";
  }
  user += "Generate a description for this movie:\n\n";
  user += "Movie title: " + clean + "\n\n";
  user += "Description:";
  return {std::string(kDescriptionSystemPrompt), user};
}

inline constexpr std::string_view kSimilaritySystemPrompt =
    "You are a movie recommendation assistant. Your task is to evaluate how well a movie description aligns with a "
    "user's stated preferences and their favorite movies. Always respond with a number between -1.0 and 1.0, where:\n"
    "-1.0 means the movie goes completely against their preferences,\n"
    "0 means neutral or there isn't enough information,\n"
    "1.0 is a perfect match. You must respond with only the number, without any additional text or formatting under "
    "all circumstances.";

inline constexpr std::string_view kRatingPreferenceSentence = "I prefer movies with high IMDb ratings.";
inline constexpr std::string_view kPopularityPreferenceSentence = "I prefer popular/trending movies.";
inline constexpr std::string_view kRateQuestion =
    "Rate how likely you think the movie aligns with the user's interests (respond with a number in range [-1, 1]):";

/// Everything the similarity prompt shows about one candidate.
struct CandidateView {
  std::string title;  // display title without year
  std::optional<int> year;
  std::optional<double> imdb_rating;
  std::optional<double> popularity;
  std::string description;
};

inline CandidateView candidate_view(const MovieRecord& movie, const MovieMeta* meta) {
  CandidateView v{display_title(movie.title), movie.release_year, std::nullopt, std::nullopt, {}};
  if (meta) {
    v.imdb_rating = meta->imdb_rating;
    v.popularity = meta->popularity;
    v.description = meta->description;
  }
  return v;
}

struct SimilarityExample {
  PreferenceProfile profile;
  CandidateView candidate;
  std::string answer;
};

namespace detail {

inline std::string titled(const std::string& title, std::optional<int> year) {
  return year ? title + " (" + std::to_string(*year) + ")" : title;
}

inline std::string format_one_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", v);
  return buf;
}

// Profile half of a query block; identical for every candidate of one profile.
inline std::string render_profile_block(const PreferenceProfile& p, const AblationFlags& ablation) {
  std::string out;
  const std::string text = trim(p.preference_text);
  if (!ablation.drop_user_text && !text.empty()) out += "User input: " + text + "\n\n";
  if (!ablation.drop_popularity_rating) {
    if (p.rating_pref) out += std::string(kRatingPreferenceSentence) + "\n\n";
    if (p.popularity_pref) out += std::string(kPopularityPreferenceSentence) + "\n\n";
  }
  if (!ablation.drop_favorites && !p.favorites.empty()) {
    out += "User's favorite movies:\n\n";
    for (const auto& f : p.favorites) out += "Movie title: " + titled(f.title, f.year) + "\n\n";
  }
  if (!ablation.drop_temporal) {
    out += "Preferred Release Date Range: I prefer movies released between " + std::to_string(p.year_min) + " and " +
           std::to_string(p.year_max) + ".\n\n";
  }
  return out;
}

inline std::string render_candidate_block(const CandidateView& c, const AblationFlags& ablation) {
  std::string out = "New movie to evaluate:\n\n";
  out += "Movie title: " + titled(c.title, c.year) + "\n\n";
  if (!ablation.drop_popularity_rating) {
    if (c.imdb_rating) out += "IMDb Rating: " + format_one_decimal(*c.imdb_rating) + "/10\n\n";
    if (c.popularity) out += "Popularity Score: " + std::to_string(std::lround(*c.popularity)) + "/100\n\n";
  }
  const std::string description = trim(c.description);
  if (!ablation.drop_descriptions && !description.empty()) out += "Movie description: " + description + "\n\n";
  out += std::string(kRateQuestion);
  return out;
}

inline PreferenceProfile example_profile(std::string text, bool rating, bool popularity,
                                         std::vector<std::pair<std::string, int>> favorites, int lo, int hi) {
  PreferenceProfile p;
  p.preference_text = std::move(text);
  p.rating_pref = rating;
  p.popularity_pref = popularity;
  for (auto& [title, year] : favorites) p.favorites.push_back({0, std::move(title), year, {}});
  p.year_min = lo;
  p.year_max = hi;
  return p;
}

}  // namespace detail

/// The three worked examples that precede every live similarity query.
inline const std::vector<SimilarityExample>& default_similarity_examples() {
  static const std::vector<SimilarityExample> examples = {
      {detail::example_profile("I love science fiction with deep philosophical themes.", true, false,
                               {{"The Matrix", 1999}, {"Blade Runner", 1982}, {"Interstellar", 2014}}, 1980, 2020),
       {"Inception", 2010, 8.8, 93.0,
        "A thief who steals corporate secrets through the use of dream-sharing technology is given the inverse task of "
        "planting an idea into the mind of a C.E.O., but his tragic past may doom the project and his team to "
        "disaster."},
       "0.9"},
      {detail::example_profile("I enjoy light-hearted comedies with a lot of humor.", false, true,
                               {{"The Hangover", 2009}, {"Superbad", 2007}, {"Step Brothers", 2008}}, 2000, 2010),
       {"The Dark Knight", 2008, 9.0, 98.0,
        "Set within a year after the events of Batman Begins (2005), Batman, Lieutenant James Gordon, and new District "
        "Attorney Harvey Dent successfully begin to round up the criminals that plague Gotham City, until a mysterious "
        "and sadistic criminal mastermind known only as \"The Joker\" appears in Gotham, creating a new wave of chaos."},
       "-0.7"},
      {detail::example_profile("I am fascinated by historical documentaries.", false, false,
                               {{"They shall not grow old", 2018}, {"Apollo 11", 2019}, {"13th", 2016}}, 2010, 2020),
       {"The Lord of the Rings: The Fellowship of the Ring", 2001, 8.8, 95.0,
        "A meek Hobbit from the Shire and eight companions set out on a journey to destroy the powerful One Ring and "
        "save Middle-earth from the Dark Lord Sauron."},
       "-0.5"},
  };
  return examples;
}

/// Few-shot similarity prompt. The system message, the examples and the
/// profile half of the live query do not depend on the candidate, so prompts
/// for one profile share everything up to "New movie to evaluate:".
inline Prompt build_similarity_prompt(const PreferenceProfile& profile, const CandidateView& candidate,
                                      const AblationFlags& ablation = {},
                                      const std::vector<SimilarityExample>& examples = default_similarity_examples()) {
  std::string user;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    user += "Example " + std::to_string(i + 1) + ":\n\n";
    user += detail::render_profile_block(examples[i].profile, ablation);
    user += detail::render_candidate_block(examples[i].candidate, ablation);
    user += "\n\n" + examples[i].answer + "\n\n";
  }
  user += "Now, respond to the following prompt:\n\n";
  user += detail::render_profile_block(profile, ablation);
  user += detail::render_candidate_block(candidate, ablation);
  return {std::string(kSimilaritySystemPrompt), user};
}

inline Prompt build_similarity_prompt(const PreferenceProfile& profile, const MovieRecord& movie, const MovieMeta* meta,
                                      const AblationFlags& ablation = {}) {
  return build_similarity_prompt(profile, candidate_view(movie, meta), ablation);
}

/// Features the prompt exposes, after ablation, for mock scoring.
inline ScoringContext scoring_context(const PreferenceProfile& profile, const MovieRecord& movie, const MovieMeta* meta,
                                      const AblationFlags& ablation) {
  ScoringContext ctx;
  ctx.user_id = profile.user_id;
  ctx.movie_id = movie.movie_id;
  ctx.candidate_year = movie.release_year;
  if (!ablation.drop_descriptions) ctx.candidate_genres = movie.genres;
  std::set<std::string> genres;
  if (!ablation.drop_favorites) {
    for (const auto& f : profile.favorites) genres.insert(f.genres.begin(), f.genres.end());
  }
  if (!ablation.drop_user_text) {
    for (auto& g : genres_mentioned(profile.preference_text)) genres.insert(std::move(g));
  }
  ctx.profile_genres.assign(genres.begin(), genres.end());
  if (!ablation.drop_temporal) ctx.year_range = std::pair{profile.year_min, profile.year_max};
  if (!ablation.drop_popularity_rating) {
    if (meta) {
      ctx.imdb_rating = meta->imdb_rating;
      ctx.popularity = meta->popularity;
    }
    ctx.rating_pref = profile.rating_pref;
    ctx.popularity_pref = profile.popularity_pref;
  }
  return ctx;
}

inline ChatRequest similarity_request(const PreferenceProfile& profile, const MovieRecord& movie, const MovieMeta* meta,
                                      const AblationFlags& ablation = {}) {
  auto prompt = build_similarity_prompt(profile, movie, meta, ablation);
  return {std::move(prompt.system), std::move(prompt.user), GenParams::scoring(), RequestKind::Similarity,
          scoring_context(profile, movie, meta, ablation)};
}

// ---- score extraction --------------------------------------------------------

struct SimilarityScore {
  double value = 0.0;
  int attempts = 1;
  bool fallback = false;  // neutral score after every attempt failed extraction
};

struct Extraction {
  enum class Status { Ok, NoNumberFound, OutOfRange };
  Status status = Status::NoNumberFound;
  double value = 0.0;  // parsed number, also set for OutOfRange

  bool ok() const { return status == Status::Ok; }
};

/// First signed decimal number in the completion; valid iff within [-1, 1].
inline Extraction extract_score(std::string_view completion) {
  static const std::regex kNumber(R"([-+]?(?:\d+(?:\.\d*)?|\.\d+))");
  std::match_results<std::string_view::const_iterator> match;
  if (!std::regex_search(completion.begin(), completion.end(), match, kNumber)) {
    return {Extraction::Status::NoNumberFound, 0.0};
  }
  const std::string token = match.str();
  char* end = nullptr;
  const double value = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || !std::isfinite(value)) return {Extraction::Status::NoNumberFound, 0.0};
  if (value < -1.0 || value > 1.0) return {Extraction::Status::OutOfRange, value};
  return {Extraction::Status::Ok, value};
}

inline constexpr int kDefaultRetries = 3;

/// Asks for a score, retrying on unusable completions; after `retries`
/// failed retries returns the neutral 0.0. Transport errors propagate.
inline SimilarityScore score_similarity(LlmClient& client, const ChatRequest& request, int retries = kDefaultRetries) {
  if (retries < 0) throw Error(Errc::UsageError, "llm_gateway", "retries must be >= 0");
  for (int attempt = 1; attempt <= retries + 1; ++attempt) {
    const Extraction e = extract_score(client.complete(request));
    if (e.ok()) return {e.value, attempt, false};
  }
  return {0.0, retries + 1, true};
}

inline std::string format_score(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

// ---- mock backend ----------------------------------------------------------

/// Scoring rule for the deterministic mock backend.
struct MockRule {
  enum class Kind { Constant, Oracle, FeatureLinear };
  Kind kind = Kind::Constant;
  double constant = 0.0;
  std::map<UserId, std::set<MovieId>> user_targets;  // oracle, per user
  std::set<MovieId> any_user_targets;                // oracle, every user

  static MockRule neutral() { return constant_score(0.0); }
  static MockRule constant_score(double c) { return {Kind::Constant, c, {}, {}}; }
  static MockRule oracle(std::set<MovieId> targets) { return {Kind::Oracle, 0.0, {}, std::move(targets)}; }
  static MockRule oracle(std::map<UserId, std::set<MovieId>> per_user) {
    return {Kind::Oracle, 0.0, std::move(per_user), {}};
  }
  static MockRule feature_linear() { return {Kind::FeatureLinear, 0.0, {}, {}}; }
};

/// The feature-linear rule, clamped to [-1, 1]:
///   0.5 * genre  + 0.3 * era  + 0.1 * rating  + 0.1 * popularity
/// genre      = 2 * (share of candidate genres found in the profile) - 1, 0 if either side is unknown
/// era        = +1 inside the preferred release range, -1 outside, 0 if unknown
/// rating     = clamp((imdb - 7) / 3, -1, 1) when the profile prefers high ratings, else 0
/// popularity = clamp((pop - 80) / 20, -1, 1) when the profile prefers popular titles, else 0
inline double feature_linear_score(const ScoringContext& ctx) {
  double genre = 0.0;
  if (!ctx.candidate_genres.empty() && !ctx.profile_genres.empty()) {
    std::size_t shared = 0;
    for (const auto& g : ctx.candidate_genres) {
      if (std::find(ctx.profile_genres.begin(), ctx.profile_genres.end(), g) != ctx.profile_genres.end()) ++shared;
    }
    genre = 2.0 * static_cast<double>(shared) / static_cast<double>(ctx.candidate_genres.size()) - 1.0;
  }
  double era = 0.0;
  if (ctx.year_range && ctx.candidate_year) {
    era = (*ctx.candidate_year >= ctx.year_range->first && *ctx.candidate_year <= ctx.year_range->second) ? 1.0 : -1.0;
  }
  double rating = 0.0;
  if (ctx.rating_pref && ctx.imdb_rating) rating = std::clamp((*ctx.imdb_rating - 7.0) / 3.0, -1.0, 1.0);
  double popularity = 0.0;
  if (ctx.popularity_pref && ctx.popularity) popularity = std::clamp((*ctx.popularity - 80.0) / 20.0, -1.0, 1.0);
  return std::clamp(0.5 * genre + 0.3 * era + 0.1 * rating + 0.1 * popularity, -1.0, 1.0);
}

/// Deterministic backend for tests and offline runs. Similarity requests are
/// answered from the rule; description requests get a fixed one-line text.
class MockClient : public LlmClient {
 public:
  using LlmClient::complete;

  explicit MockClient(MockRule rule = MockRule::neutral()) : rule_(std::move(rule)) {}

  std::string complete(const ChatRequest& request) override {
    calls_.bump();
    if (request.kind == RequestKind::Description) return describe(request.user);
    return format_score(score(request.context));
  }

  LlmMode mode() const override { return LlmMode::Mock; }
  std::size_t calls() const { return calls_.value(); }
  const MockRule& rule() const { return rule_; }

  double score(const std::optional<ScoringContext>& ctx) const {
    switch (rule_.kind) {
      case MockRule::Kind::Constant:
        return rule_.constant;
      case MockRule::Kind::Oracle: {
        if (!ctx) return 0.0;
        if (rule_.any_user_targets.contains(ctx->movie_id)) return 1.0;
        if (ctx->user_id) {
          auto it = rule_.user_targets.find(*ctx->user_id);
          if (it != rule_.user_targets.end() && it->second.contains(ctx->movie_id)) return 1.0;
        }
        return 0.0;
      }
      case MockRule::Kind::FeatureLinear:
        return ctx ? feature_linear_score(*ctx) : 0.0;
    }
    return 0.0;
  }

 private:
  static std::string describe(const std::string& user_prompt) {
    const std::string marker = "Movie title: ";
    const auto pos = user_prompt.rfind(marker);
    std::string title = "this film";
    if (pos != std::string::npos) {
      const auto end = user_prompt.find('\n', pos);
      title = trim(user_prompt.substr(pos + marker.size(), end == std::string::npos ? std::string::npos : end - pos - marker.size()));
    }
    return "A feature film titled " + title + ".";
  }

  MockRule rule_;
  CallCounter calls_;
};

/// Parses "neutral", "constant:<c>", "oracle", "feature" (optionally prefixed
/// with "mock:"). Oracle targets are filled in by the caller.
inline MockRule parse_mock_rule(std::string_view spec) {
  if (spec.starts_with("mock:")) spec.remove_prefix(5);
  if (spec == "neutral" || spec.empty()) return MockRule::neutral();
  if (spec == "oracle") return MockRule::oracle(std::set<MovieId>{});
  if (spec == "feature" || spec == "feature-linear") return MockRule::feature_linear();
  if (spec.starts_with("constant:")) {
    const std::string number(spec.substr(9));
    char* end = nullptr;
    const double c = std::strtod(number.c_str(), &end);
    if (end == number.c_str() || *end != '\0' || c < -1.0 || c > 1.0) {
      throw Error(Errc::UsageError, "llm_gateway", "constant mock score must be a number in [-1, 1]");
    }
    return MockRule::constant_score(c);
  }
  throw Error(Errc::UsageError, "llm_gateway", "unknown mock rule '" + std::string(spec) + "'");
}

}  // namespace llmrec
