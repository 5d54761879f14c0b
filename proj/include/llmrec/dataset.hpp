#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "llmrec/error.hpp"

namespace llmrec {

using UserId = std::int64_t;
using MovieId = std::int64_t;

inline constexpr int kEarliestReleaseYear = 1874;

inline int current_year() {
  const auto now = std::chrono::system_clock::now();
  const std::chrono::year_month_day ymd{std::chrono::floor<std::chrono::days>(now)};
  return static_cast<int>(ymd.year());
}

struct Rating {
  UserId user_id = 0;
  MovieId movie_id = 0;
  double value = 0.0;
  std::int64_t timestamp = 0;

  friend bool operator==(const Rating&, const Rating&) = default;
};

/// True when `value` lies on the 0.5-step grid in [0.5, 5.0].
inline bool valid_rating_value(double value) {
  if (!(value >= 0.5 && value <= 5.0)) return false;
  const double doubled = value * 2.0;
  return doubled == std::floor(doubled);
}

struct MovieRecord {
  MovieId movie_id = 0;
  std::string title;  // without the trailing "(YYYY)"
  std::optional<int> release_year;
  std::vector<std::string> genres;
  std::optional<std::string> external_id;  // IMDb id, zero-padded text
  std::optional<std::string> tmdb_id;

  friend bool operator==(const MovieRecord&, const MovieRecord&) = default;
};

/// Title with a MovieLens trailing article ("Matrix, The") moved to the front.
inline std::string display_title(std::string_view title) {
  static constexpr std::string_view kArticles[] = {", The", ", A", ", An", ", Les", ", La", ", Le", ", Il", ", Die", ", Das", ", El"};
  for (auto article : kArticles) {
    if (title.size() > article.size() && title.ends_with(article)) {
      std::string head(title.substr(0, title.size() - article.size()));
      return std::string(article.substr(2)) + " " + head;
    }
  }
  return std::string(title);
}

/// "Title (Year)" as shown in prompts and search results.
inline std::string title_with_year(const MovieRecord& movie) {
  std::string out = display_title(movie.title);
  if (movie.release_year) out += " (" + std::to_string(*movie.release_year) + ")";
  return out;
}

class IdMap {
 public:
  void insert(MovieId movie_id, const std::string& external_id) {
    forward_[movie_id] = external_id;
    reverse_.try_emplace(external_id, movie_id);  // first mapping wins on duplicates
  }

  std::optional<std::string> external(MovieId movie_id) const {
    auto it = forward_.find(movie_id);
    if (it == forward_.end()) return std::nullopt;
    return it->second;
  }

  std::optional<MovieId> internal(const std::string& external_id) const {
    auto it = reverse_.find(external_id);
    if (it == reverse_.end()) return std::nullopt;
    return it->second;
  }

  const std::map<MovieId, std::string>& forward() const { return forward_; }
  const std::map<std::string, MovieId>& reverse() const { return reverse_; }

  friend bool operator==(const IdMap&, const IdMap&) = default;

 private:
  std::map<MovieId, std::string> forward_;
  std::map<std::string, MovieId> reverse_;
};

namespace csv {

/// Splits one CSV record. Quoted fields may contain commas and doubled quotes.
inline std::optional<std::vector<std::string>> split(std::string_view line) {
  std::vector<std::string> fields;
  std::string field;
  bool quoted = false;
  bool field_was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
    } else if (c == '"') {
      if (!field.empty() || field_was_quoted) return std::nullopt;
      quoted = true;
      field_was_quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(field));
      field.clear();
      field_was_quoted = false;
    } else {
      if (field_was_quoted) return std::nullopt;
      field.push_back(c);
    }
  }
  if (quoted) return std::nullopt;
  fields.push_back(std::move(field));
  return fields;
}

inline std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\n") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

template <typename T>
bool parse_number(std::string_view text, T& out) {
  if (text.empty()) return false;
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

}  // namespace csv

/// Splits "Title (1995)" into ("Title", 1995). Titles without a plausible
/// trailing year are returned unchanged with no year.
inline std::pair<std::string, std::optional<int>> split_title_year(std::string_view raw) {
  auto is_space = [](char c) { return c == ' ' || c == '\t'; };
  std::size_t end = raw.size();
  while (end > 0 && is_space(raw[end - 1])) --end;
  std::string_view trimmed = raw.substr(0, end);
  if (trimmed.size() >= 6 && trimmed.back() == ')' && trimmed[trimmed.size() - 6] == '(') {
    std::string_view digits = trimmed.substr(trimmed.size() - 5, 4);
    int year = 0;
    if (std::all_of(digits.begin(), digits.end(), [](char c) { return c >= '0' && c <= '9'; }) &&
        csv::parse_number(digits, year) && year >= kEarliestReleaseYear && year <= current_year()) {
      std::size_t title_end = trimmed.size() - 6;
      while (title_end > 0 && is_space(trimmed[title_end - 1])) --title_end;
      return {std::string(trimmed.substr(0, title_end)), year};
    }
  }
  return {std::string(raw), std::nullopt};
}

inline std::string format_rating(double value) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(1);
  out << value;
  return out.str();
}

/// 64-bit FNV-1a, used for dataset and config fingerprints.
class Fingerprint {
 public:
  void update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t value() const { return state_; }
  std::string hex() const {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(16, '0');
    std::uint64_t v = state_;
    for (int i = 15; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = kDigits[v & 0xF];
      v >>= 4;
    }
    return out;
  }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string fingerprint_of(std::string_view bytes) {
  Fingerprint fp;
  fp.update(bytes);
  return fp.hex();
}

struct DatasetPaths {
  std::filesystem::path ratings;
  std::filesystem::path movies;
  std::filesystem::path links;

  static DatasetPaths in_directory(const std::filesystem::path& dir) {
    return {dir / "ratings.csv", dir / "movies.csv", dir / "links.csv"};
  }
};

/// Immutable ratings + catalog + id mapping. Safe for concurrent reads.
class Dataset {
 public:
  Dataset() = default;

  /// Validates the invariants and builds the per-user index.
  Dataset(std::vector<Rating> ratings, std::vector<MovieRecord> movies, std::string fingerprint = {})
      : ratings_(std::move(ratings)), fingerprint_(std::move(fingerprint)) {
    for (auto& movie : movies) {
      const MovieId id = movie.movie_id;
      if (movie.external_id) id_map_.insert(id, *movie.external_id);
      if (!catalog_.emplace(id, std::move(movie)).second) {
        throw Error(Errc::MalformedRow, "dataset", "duplicate movieId " + std::to_string(id));
      }
    }
    std::set<std::pair<UserId, MovieId>> seen;
    for (std::size_t i = 0; i < ratings_.size(); ++i) {
      const Rating& r = ratings_[i];
      if (!catalog_.contains(r.movie_id)) {
        throw Error(Errc::DanglingReference, "dataset",
                    "rating references unknown movieId " + std::to_string(r.movie_id));
      }
      if (!valid_rating_value(r.value)) {
        throw Error(Errc::MalformedRow, "dataset", "rating value off the 0.5 grid: " + std::to_string(r.value));
      }
      if (!seen.emplace(r.user_id, r.movie_id).second) {
        throw Error(Errc::MalformedRow, "dataset",
                    "duplicate rating for user " + std::to_string(r.user_id) + " movie " + std::to_string(r.movie_id));
      }
      by_user_[r.user_id].push_back(i);
    }
    if (fingerprint_.empty()) fingerprint_ = compute_fingerprint();
  }

  const std::vector<Rating>& ratings() const { return ratings_; }
  const std::map<MovieId, MovieRecord>& catalog() const { return catalog_; }
  const IdMap& id_map() const { return id_map_; }
  const std::string& fingerprint() const { return fingerprint_; }

  const MovieRecord* movie(MovieId id) const {
    auto it = catalog_.find(id);
    return it == catalog_.end() ? nullptr : &it->second;
  }

  std::vector<UserId> users() const {
    std::vector<UserId> out;
    out.reserve(by_user_.size());
    for (const auto& [user, _] : by_user_) out.push_back(user);
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Ratings of one user in load order; empty for an unknown user.
  std::vector<Rating> user_ratings(UserId user) const {
    std::vector<Rating> out;
    auto it = by_user_.find(user);
    if (it == by_user_.end()) return out;
    out.reserve(it->second.size());
    for (std::size_t idx : it->second) out.push_back(ratings_[idx]);
    return out;
  }

  std::set<MovieId> user_rated_items(UserId user) const {
    std::set<MovieId> out;
    auto it = by_user_.find(user);
    if (it == by_user_.end()) return out;
    for (std::size_t idx : it->second) out.insert(ratings_[idx].movie_id);
    return out;
  }

  std::size_t user_count() const { return by_user_.size(); }

  /// A new dataset sharing this catalog with a different rating list.
  Dataset with_ratings(std::vector<Rating> ratings) const {
    std::vector<MovieRecord> movies;
    movies.reserve(catalog_.size());
    for (const auto& [_, m] : catalog_) movies.push_back(m);
    return Dataset(std::move(ratings), std::move(movies));
  }

 private:
  std::string compute_fingerprint() const {
    Fingerprint fp;
    for (const auto& r : ratings_) {
      fp.update(std::to_string(r.user_id) + "," + std::to_string(r.movie_id) + "," + format_rating(r.value) + "," +
                std::to_string(r.timestamp) + "\n");
    }
    for (const auto& [id, m] : catalog_) {
      fp.update(std::to_string(id) + "," + m.title + "," + (m.release_year ? std::to_string(*m.release_year) : "") +
                "," + m.external_id.value_or("") + "\n");
      for (const auto& g : m.genres) fp.update(g + "|");
    }
    return fp.hex();
  }

  std::vector<Rating> ratings_;
  std::map<MovieId, MovieRecord> catalog_;
  IdMap id_map_;
  std::unordered_map<UserId, std::vector<std::size_t>> by_user_;
  std::string fingerprint_;
};

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingFile, "dataset", "cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

// Calls `row(fields, line_number)` for every data row after checking the header.
template <typename RowFn>
void for_each_row(const std::filesystem::path& path, const std::string& content, std::string_view header, RowFn&& row) {
  std::istringstream in(content);
  std::string line;
  std::size_t line_number = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header_seen) {
      if (line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
      if (line != header) {
        throw Error(Errc::MalformedRow, "dataset",
                    path.filename().string() + ":1: expected header '" + std::string(header) + "'");
      }
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    auto fields = csv::split(line);
    if (!fields) {
      throw Error(Errc::MalformedRow, "dataset",
                  path.filename().string() + ":" + std::to_string(line_number) + ": unbalanced quotes");
    }
    row(*fields, line_number);
  }
  if (!header_seen) {
    throw Error(Errc::MalformedRow, "dataset", path.filename().string() + ":1: missing header");
  }
}

[[noreturn]] inline void malformed(const std::filesystem::path& path, std::size_t line, const std::string& what) {
  throw Error(Errc::MalformedRow, "dataset", path.filename().string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace detail

inline std::vector<MovieRecord> parse_movies_csv(const std::filesystem::path& path, const std::string& content) {
  std::vector<MovieRecord> movies;
  detail::for_each_row(path, content, "movieId,title,genres", [&](const std::vector<std::string>& f, std::size_t line) {
    if (f.size() != 3) detail::malformed(path, line, "expected 3 fields");
    MovieRecord m;
    if (!csv::parse_number(f[0], m.movie_id)) detail::malformed(path, line, "bad movieId");
    auto [title, year] = split_title_year(f[1]);
    m.title = std::move(title);
    m.release_year = year;
    if (f[2] != "(no genres listed)" && !f[2].empty()) {
      std::string_view rest = f[2];
      while (true) {
        auto bar = rest.find('|');
        m.genres.emplace_back(rest.substr(0, bar));
        if (bar == std::string_view::npos) break;
        rest.remove_prefix(bar + 1);
      }
    }
    movies.push_back(std::move(m));
  });
  return movies;
}

inline Dataset load_dataset(const DatasetPaths& paths) {
  const std::string ratings_text = detail::read_file(paths.ratings);
  const std::string movies_text = detail::read_file(paths.movies);
  const std::string links_text = detail::read_file(paths.links);

  std::vector<MovieRecord> movies = parse_movies_csv(paths.movies, movies_text);
  std::unordered_map<MovieId, std::size_t> index;
  for (std::size_t i = 0; i < movies.size(); ++i) {
    if (!index.emplace(movies[i].movie_id, i).second) {
      throw Error(Errc::MalformedRow, "dataset", "movies.csv: duplicate movieId " + std::to_string(movies[i].movie_id));
    }
  }

  detail::for_each_row(paths.links, links_text, "movieId,imdbId,tmdbId", [&](const std::vector<std::string>& f, std::size_t line) {
    if (f.size() != 3) detail::malformed(paths.links, line, "expected 3 fields");
    MovieId id = 0;
    if (!csv::parse_number(f[0], id)) detail::malformed(paths.links, line, "bad movieId");
    auto it = index.find(id);
    if (it == index.end()) {
      throw Error(Errc::DanglingReference, "dataset", "links.csv references unknown movieId " + std::to_string(id));
    }
    MovieRecord& m = movies[it->second];
    if (!f[1].empty()) m.external_id = f[1];
    if (!f[2].empty()) m.tmdb_id = f[2];
  });

  std::vector<Rating> ratings;
  ratings.reserve(static_cast<std::size_t>(std::count(ratings_text.begin(), ratings_text.end(), '\n')));
  std::set<std::pair<UserId, MovieId>> seen;
  detail::for_each_row(paths.ratings, ratings_text, "userId,movieId,rating,timestamp",
                       [&](const std::vector<std::string>& f, std::size_t line) {
                         if (f.size() != 4) detail::malformed(paths.ratings, line, "expected 4 fields");
                         Rating r;
                         if (!csv::parse_number(f[0], r.user_id)) detail::malformed(paths.ratings, line, "bad userId");
                         if (!csv::parse_number(f[1], r.movie_id)) detail::malformed(paths.ratings, line, "bad movieId");
                         if (!csv::parse_number(f[2], r.value) || !valid_rating_value(r.value)) {
                           detail::malformed(paths.ratings, line, "rating must be in [0.5, 5.0] on a 0.5 grid");
                         }
                         if (!csv::parse_number(f[3], r.timestamp)) detail::malformed(paths.ratings, line, "bad timestamp");
                         if (!seen.emplace(r.user_id, r.movie_id).second) {
                           detail::malformed(paths.ratings, line, "duplicate (userId, movieId) pair");
                         }
                         if (!index.contains(r.movie_id)) {
                           throw Error(Errc::DanglingReference, "dataset",
                                       "ratings.csv:" + std::to_string(line) + ": unknown movieId " + std::to_string(r.movie_id));
                         }
                         ratings.push_back(r);
                       });

  Fingerprint fp;
  fp.update(ratings_text);
  fp.update(movies_text);
  fp.update(links_text);
  return Dataset(std::move(ratings), std::move(movies), fp.hex());
}

inline Dataset load_dataset(const std::filesystem::path& ratings, const std::filesystem::path& movies,
                            const std::filesystem::path& links) {
  return load_dataset(DatasetPaths{ratings, movies, links});
}

inline std::string movies_csv(const Dataset& data) {
  std::string out = "movieId,title,genres\n";
  for (const auto& [id, m] : data.catalog()) {
    std::string title = m.title;
    if (m.release_year) title += " (" + std::to_string(*m.release_year) + ")";
    std::string genres;
    for (std::size_t i = 0; i < m.genres.size(); ++i) genres += (i ? "|" : "") + m.genres[i];
    if (genres.empty()) genres = "(no genres listed)";
    out += std::to_string(id) + "," + csv::quote(title) + "," + csv::quote(genres) + "\n";
  }
  return out;
}

inline std::string links_csv(const Dataset& data) {
  std::string out = "movieId,imdbId,tmdbId\n";
  for (const auto& [id, m] : data.catalog()) {
    out += std::to_string(id) + "," + m.external_id.value_or("") + "," + m.tmdb_id.value_or("") + "\n";
  }
  return out;
}

inline std::string ratings_csv(const std::vector<Rating>& ratings) {
  std::string out = "userId,movieId,rating,timestamp\n";
  for (const auto& r : ratings) {
    out += std::to_string(r.user_id) + "," + std::to_string(r.movie_id) + "," + format_rating(r.value) + "," +
           std::to_string(r.timestamp) + "\n";
  }
  return out;
}

inline void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "dataset", "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::IoError, "dataset", "write failed for " + path.string());
}

/// Writes ratings.csv, movies.csv and links.csv in the MovieLens layout.
inline void write_dataset(const Dataset& data, const std::filesystem::path& dir) {
  const auto paths = DatasetPaths::in_directory(dir);
  write_text(paths.ratings, ratings_csv(data.ratings()));
  write_text(paths.movies, movies_csv(data));
  write_text(paths.links, links_csv(data));
}

}  // namespace llmrec
