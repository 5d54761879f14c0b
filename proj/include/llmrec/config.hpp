#pragma once

#include <cctype>
#include <charconv>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>

#include <nlohmann/json.hpp>

#include "llmrec/dataset.hpp"
#include "llmrec/error.hpp"
#include "llmrec/llm.hpp"
#include "llmrec/mf.hpp"
#include "llmrec/openai_client.hpp"
#include "llmrec/profiles.hpp"
#include "llmrec/reranker.hpp"

namespace llmrec {

// ---- minimal TOML ------------------------------------------------------------
//
// Tables, `key = value` pairs, comments, basic strings, integers, floats and
// booleans. Arrays and inline tables are rejected.

using TomlValue = std::variant<std::string, std::int64_t, double, bool>;
using TomlTable = std::map<std::string, TomlValue>;  // dotted keys: "llm.model"

namespace detail {

[[noreturn]] inline void toml_error(std::size_t line, const std::string& what) {
  throw Error(Errc::ConfigError, "service_cli", "config line " + std::to_string(line) + ": " + what);
}

inline std::string_view strip(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline bool bare_key(std::string_view k) {
  if (k.empty()) return false;
  for (char c : k) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-' && c != '.') return false;
  }
  return true;
}

inline TomlValue parse_toml_value(std::string_view raw, std::size_t line) {
  if (raw.empty()) toml_error(line, "missing value");
  if (raw.front() == '"') {
    std::string out;
    std::size_t i = 1;
    for (; i < raw.size() && raw[i] != '"'; ++i) {
      if (raw[i] != '\\') {
        out += raw[i];
        continue;
      }
      if (++i == raw.size()) toml_error(line, "unterminated escape");
      switch (raw[i]) {
        case 'n': out += '\n'; break;
        case 't': out += '\t'; break;
        case '"': out += '"'; break;
        case '\\': out += '\\'; break;
        default: toml_error(line, "unsupported escape");
      }
    }
    if (i >= raw.size()) toml_error(line, "unterminated string");
    auto rest = strip(raw.substr(i + 1));
    if (!rest.empty() && rest.front() != '#') toml_error(line, "trailing characters after string");
    return out;
  }
  if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = strip(raw.substr(0, hash));
  if (raw == "true") return true;
  if (raw == "false") return false;
  std::string digits;
  for (char c : raw) {
    if (c != '_') digits += c;
  }
  const char* first = digits.data();
  const char* last = first + digits.size();
  if (*first == '+') ++first;
  if (digits.find_first_of(".eE") == std::string::npos) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec == std::errc{} && p == last) return v;
  } else {
    double v = 0.0;
    auto [p, ec] = std::from_chars(first, last, v);
    if (ec == std::errc{} && p == last) return v;
  }
  toml_error(line, "cannot parse value '" + std::string(raw) + "'");
}

}  // namespace detail

inline TomlTable parse_toml(std::string_view text) {
  TomlTable out;
  std::string section;
  std::istringstream in{std::string(text)};
  std::string raw_line;
  std::size_t line_no = 0;
  while (std::getline(in, raw_line)) {
    ++line_no;
    auto line = detail::strip(raw_line);
    if (line.empty() || line.front() == '#') continue;
    if (line.front() == '[') {
      const auto close = line.find(']');
      if (close == std::string_view::npos || line.starts_with("[[")) detail::toml_error(line_no, "bad table header");
      section = std::string(detail::strip(line.substr(1, close - 1)));
      if (!detail::bare_key(section)) detail::toml_error(line_no, "bad table name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) detail::toml_error(line_no, "expected key = value");
    const auto key = detail::strip(line.substr(0, eq));
    if (!detail::bare_key(key)) detail::toml_error(line_no, "bad key");
    const std::string full = section.empty() ? std::string(key) : section + "." + std::string(key);
    if (!out.emplace(full, detail::parse_toml_value(detail::strip(line.substr(eq + 1)), line_no)).second) {
      detail::toml_error(line_no, "duplicate key '" + full + "'");
    }
  }
  return out;
}

// ---- application config ----------------------------------------------------------

struct AppConfig {
  std::filesystem::path data_dir = "data/ml-latest-small";
  std::filesystem::path snapshot;  // provider snapshot; defaults to <data_dir>/provider_snapshot.jsonl
  std::filesystem::path work_dir = "work";

  EndpointConfig llm;
  int llm_retries = kDefaultRetries;
  int in_flight_cap = 4;

  MfKind algo = MfKind::Svd;
  PoolSpec rerank{10, 1.0, 1};
  ProfileThresholds thresholds;
  double chr_threshold = 4.0;
  std::size_t favorites = 3;

  std::uint64_t split_seed = 42;
  std::uint64_t train_seed = 42;
  int this_year = current_year();

  std::filesystem::path snapshot_path() const {
    return snapshot.empty() ? data_dir / "provider_snapshot.jsonl" : snapshot;
  }
  std::filesystem::path meta_cache_path() const { return work_dir / "metadata_cache.jsonl"; }
  std::filesystem::path profiles_path() const { return work_dir / "profiles.jsonl"; }
  std::filesystem::path checkpoint_path(MfKind kind) const {
    return work_dir / ("model_" + std::string(to_string(kind)) + ".cbor");
  }
  std::filesystem::path pool_cache_dir() const { return work_dir / "pools"; }

  void validate() const {
    rerank.validate();
    auto bad = [](const std::string& what) { throw Error(Errc::ConfigError, "service_cli", what); };
    if (thresholds.rating < 0.0 || thresholds.rating > 10.0) bad("thresholds.rating_pref must lie in [0, 10]");
    if (thresholds.popularity < 0.0 || thresholds.popularity > 100.0) bad("thresholds.popularity_pref must lie in [0, 100]");
    if (chr_threshold < kMinRating || chr_threshold > kMaxRating) bad("thresholds.chr must lie in [0.5, 5]");
    if (llm_retries < 0) bad("llm.retries must be >= 0");
    if (in_flight_cap < 1) bad("llm.in_flight_cap must be >= 1");
    if (favorites < 1) bad("profile.favorites must be >= 1");
  }

  nlohmann::json to_json() const {
    return {{"dataset", {{"dir", data_dir.string()}, {"snapshot", snapshot_path().string()}}},
            {"paths", {{"work_dir", work_dir.string()}}},
            {"llm",
             {{"base_url", llm.base_url},
              {"model", llm.model},
              {"mode", to_string(llm.mode)},
              {"retries", llm_retries},
              {"in_flight_cap", in_flight_cap},
              {"api_key_env", llm.api_key_env},
              {"timeout_s", llm.timeout.count()}}},
            {"model", {{"algo", to_string(algo)}}},
            {"rerank", {{"n", rerank.n}, {"t", rerank.t}, {"m", rerank.m}}},
            {"thresholds",
             {{"rating_pref", thresholds.rating}, {"popularity_pref", thresholds.popularity}, {"chr", chr_threshold}}},
            {"profile", {{"favorites", favorites}, {"this_year", this_year}}},
            {"seeds", {{"split", split_seed}, {"train", train_seed}}}};
  }

  /// Content hash of the effective configuration, for report headers.
  std::string hash() const { return fingerprint_of(to_json().dump()); }
};

namespace detail {

template <class T>
T toml_as(const TomlValue& v, const std::string& key);

template <>
inline std::string toml_as<std::string>(const TomlValue& v, const std::string& key) {
  if (auto s = std::get_if<std::string>(&v)) return *s;
  throw Error(Errc::ConfigError, "service_cli", key + " must be a string");
}
template <>
inline std::int64_t toml_as<std::int64_t>(const TomlValue& v, const std::string& key) {
  if (auto i = std::get_if<std::int64_t>(&v)) return *i;
  throw Error(Errc::ConfigError, "service_cli", key + " must be an integer");
}
template <>
inline double toml_as<double>(const TomlValue& v, const std::string& key) {
  if (auto d = std::get_if<double>(&v)) return *d;
  if (auto i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
  throw Error(Errc::ConfigError, "service_cli", key + " must be a number");
}

using ConfigSetter = std::function<void(AppConfig&, const TomlValue&, const std::string&)>;

inline const std::map<std::string, ConfigSetter>& config_setters() {
  using S = std::string;
  using I = std::int64_t;
  static const std::map<std::string, ConfigSetter> setters = {
      {"dataset.dir", [](AppConfig& c, const TomlValue& v, const S& k) { c.data_dir = toml_as<S>(v, k); }},
      {"dataset.snapshot", [](AppConfig& c, const TomlValue& v, const S& k) { c.snapshot = toml_as<S>(v, k); }},
      {"paths.work_dir", [](AppConfig& c, const TomlValue& v, const S& k) { c.work_dir = toml_as<S>(v, k); }},
      {"llm.base_url", [](AppConfig& c, const TomlValue& v, const S& k) { c.llm.base_url = toml_as<S>(v, k); }},
      {"llm.model", [](AppConfig& c, const TomlValue& v, const S& k) { c.llm.model = toml_as<S>(v, k); }},
      {"llm.mode", [](AppConfig& c, const TomlValue& v, const S& k) { c.llm.mode = parse_llm_mode(toml_as<S>(v, k)); }},
      {"llm.retries", [](AppConfig& c, const TomlValue& v, const S& k) { c.llm_retries = static_cast<int>(toml_as<I>(v, k)); }},
      {"llm.in_flight_cap",
       [](AppConfig& c, const TomlValue& v, const S& k) { c.in_flight_cap = static_cast<int>(toml_as<I>(v, k)); }},
      {"llm.api_key_env", [](AppConfig& c, const TomlValue& v, const S& k) { c.llm.api_key_env = toml_as<S>(v, k); }},
      {"llm.timeout_s",
       [](AppConfig& c, const TomlValue& v, const S& k) { c.llm.timeout = std::chrono::seconds(toml_as<I>(v, k)); }},
      {"model.algo", [](AppConfig& c, const TomlValue& v, const S& k) { c.algo = parse_mf_kind(toml_as<S>(v, k)); }},
      {"rerank.n", [](AppConfig& c, const TomlValue& v, const S& k) { c.rerank.n = static_cast<int>(toml_as<I>(v, k)); }},
      {"rerank.t", [](AppConfig& c, const TomlValue& v, const S& k) { c.rerank.t = toml_as<double>(v, k); }},
      {"rerank.m", [](AppConfig& c, const TomlValue& v, const S& k) { c.rerank.m = static_cast<int>(toml_as<I>(v, k)); }},
      {"thresholds.rating_pref",
       [](AppConfig& c, const TomlValue& v, const S& k) { c.thresholds.rating = toml_as<double>(v, k); }},
      {"thresholds.popularity_pref",
       [](AppConfig& c, const TomlValue& v, const S& k) { c.thresholds.popularity = toml_as<double>(v, k); }},
      {"thresholds.chr", [](AppConfig& c, const TomlValue& v, const S& k) { c.chr_threshold = toml_as<double>(v, k); }},
      {"profile.favorites",
       [](AppConfig& c, const TomlValue& v, const S& k) { c.favorites = static_cast<std::size_t>(toml_as<I>(v, k)); }},
      {"profile.this_year",
       [](AppConfig& c, const TomlValue& v, const S& k) { c.this_year = static_cast<int>(toml_as<I>(v, k)); }},
      {"seeds.split",
       [](AppConfig& c, const TomlValue& v, const S& k) { c.split_seed = static_cast<std::uint64_t>(toml_as<I>(v, k)); }},
      {"seeds.train",
       [](AppConfig& c, const TomlValue& v, const S& k) { c.train_seed = static_cast<std::uint64_t>(toml_as<I>(v, k)); }},
  };
  return setters;
}

/// "llm.in_flight_cap" -> "LLMREC_LLM_IN_FLIGHT_CAP".
inline std::string env_name(std::string_view key) {
  std::string out = "LLMREC_";
  for (char c : key) out += c == '.' || c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace detail

/// Applies a parsed table; unknown keys are rejected so typos surface.
inline void apply_toml(AppConfig& config, const TomlTable& table) {
  const auto& setters = detail::config_setters();
  for (const auto& [key, value] : table) {
    auto it = setters.find(key);
    if (it == setters.end()) throw Error(Errc::ConfigError, "service_cli", "unknown config key '" + key + "'");
    it->second(config, value, key);
  }
}

/// LLMREC_<SECTION>_<KEY> variables override file values. Values are parsed
/// verbatim for string keys and as TOML scalars otherwise.
inline void apply_env_overrides(AppConfig& config,
                                const std::function<const char*(const char*)>& getenv = [](const char* n) {
                                  return std::getenv(n);
                                }) {
  for (const auto& [key, setter] : detail::config_setters()) {
    const char* raw = getenv(detail::env_name(key).c_str());
    if (!raw) continue;
    static const std::set<std::string> kStringKeys = {"dataset.dir", "dataset.snapshot", "paths.work_dir",
                                                      "llm.base_url", "llm.model",        "llm.mode",
                                                      "llm.api_key_env", "model.algo"};
    const TomlValue value =
        kStringKeys.contains(key) ? TomlValue(std::string(raw)) : detail::parse_toml_value(detail::strip(raw), 0);
    setter(config, value, detail::env_name(key));
  }
}

/// Defaults, then the TOML file (if given), then environment overrides.
inline AppConfig load_config(const std::filesystem::path& path = {},
                             const std::function<const char*(const char*)>& getenv = [](const char* n) {
                               return std::getenv(n);
                             }) {
  AppConfig config;
  if (!path.empty()) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::MissingFile, "service_cli", "config file not found: " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    apply_toml(config, parse_toml(buf.str()));
  }
  apply_env_overrides(config, getenv);
  config.validate();
  return config;
}

}  // namespace llmrec
