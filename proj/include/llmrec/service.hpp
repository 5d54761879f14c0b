#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "llmrec/dataset.hpp"
#include "llmrec/error.hpp"
#include "llmrec/llm.hpp"
#include "llmrec/metadata.hpp"
#include "llmrec/mf.hpp"
#include "llmrec/profiles.hpp"
#include "llmrec/reranker.hpp"

namespace llmrec {

/// HTTP status for a domain error.
inline int http_status(Errc code) {
  switch (code) {
    case Errc::InvalidRange:
    case Errc::EmptyProfile:
    case Errc::InvalidSpec:
    case Errc::UsageError:
    case Errc::MalformedRow:
    case Errc::DanglingReference:
    case Errc::NoCandidates:
      return 400;
    case Errc::MissingUser:
    case Errc::NotFound:
      return 404;
    case Errc::TransportError:
    case Errc::ProviderUnavailable:
      return 503;
    default:
      return 500;
  }
}

inline nlohmann::json error_body(Errc code, std::string_view module, std::string_view message) {
  return {{"error", {{"code", errc_name(code)}, {"module", module}, {"message", message}}}};
}

struct ServiceOptions {
  PoolSpec default_spec{10, 1.0, 1};
  AutoProfileOptions profile;
  std::size_t search_limit = 10;
  std::filesystem::path static_dir;  // served at "/" when set
};

/// JSON API under /api/v1. Holds read-only references; requests never mutate
/// the dataset or the model.
class Service {
 public:
  Service(const Dataset& data, const MfModel& model, const MetaLookup& meta, const MetadataProvider* provider,
          LlmClient& llm, RerankOptions rerank = {}, ServiceOptions options = {})
      : data_(data),
        model_(model),
        meta_(meta),
        provider_(provider),
        llm_(llm),
        reranker_(model, data.catalog(), meta, llm, std::move(rerank)),
        options_(std::move(options)) {}

  void mount(httplib::Server& server) const {
    server.Get("/api/v1/health", [this](const httplib::Request&, httplib::Response& res) { reply(res, 200, health()); });
    server.Get("/api/v1/search", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::size_t limit = options_.search_limit;
        if (req.has_param("limit")) limit = parse_size(req.get_param_value("limit"), "limit");
        return search(req.get_param_value("q"), limit);
      });
    });
    server.Post("/api/v1/profile", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { return nlohmann::json{{"profile", to_json(parse_profile(parse_body(req)))}}; });
    });
    server.Post("/api/v1/recommend", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { return recommend(parse_body(req)); });
    });
    server.Get(R"(/api/v1/movies/(-?\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] { return movie(std::stoll(req.matches[1])); });
    });
    if (!options_.static_dir.empty()) server.set_mount_point("/", options_.static_dir.string());
  }

  nlohmann::json health() const {
    return {{"status", "ok"},
            {"model", to_string(model_.kind)},
            {"dataset", data_.fingerprint()},
            {"movies", data_.catalog().size()},
            {"llm_mode", to_string(llm_.mode())}};
  }

  /// Fuzzy title search over the catalog, plus provider records that map back to it.
  nlohmann::json search(const std::string& query, std::size_t limit) const {
    if (trim(query).empty()) throw Error(Errc::UsageError, "service_cli", "query parameter q is required");
    std::map<MovieId, double> best;
    for (const auto& [id, m] : data_.catalog()) {
      const double s = search_score(query, display_title(m.title));
      if (s >= kSearchFloor) best[id] = s;
    }
    nlohmann::json provider_only = nlohmann::json::array();
    if (provider_) {
      for (const auto& match : provider_->search_by_title(query)) {
        if (match.similarity < kSearchFloor) continue;
        if (auto id = data_.id_map().internal(match.record.external_id)) {
          auto& s = best[*id];
          s = std::max(s, match.similarity);
        } else if (provider_only.size() < limit) {
          nlohmann::json r{{"movie_id", nullptr}, {"title", match.record.title}, {"score", match.similarity},
                           {"external_id", match.record.external_id}, {"source", "provider"}};
          r["year"] = match.record.year ? nlohmann::json(*match.record.year) : nlohmann::json(nullptr);
          provider_only.push_back(std::move(r));
        }
      }
    }
    std::vector<std::pair<MovieId, double>> ranked(best.begin(), best.end());
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    nlohmann::json results = nlohmann::json::array();
    for (const auto& [id, score] : ranked) {
      if (results.size() >= limit) break;
      const MovieRecord& m = data_.catalog().at(id);
      nlohmann::json r{{"movie_id", id}, {"title", title_with_year(m)}, {"genres", m.genres}, {"score", score},
                       {"source", "catalog"}};
      r["year"] = m.release_year ? nlohmann::json(*m.release_year) : nlohmann::json(nullptr);
      r["external_id"] = m.external_id ? nlohmann::json(*m.external_id) : nlohmann::json(nullptr);
      results.push_back(std::move(r));
    }
    for (auto& r : provider_only) {
      if (results.size() >= limit) break;
      results.push_back(std::move(r));
    }
    return {{"query", query}, {"results", results}};
  }

  PreferenceProfile parse_profile(const nlohmann::json& body) const {
    const auto& j = body.contains("profile") ? body.at("profile") : body;
    if (!j.is_object()) throw Error(Errc::UsageError, "service_cli", "profile must be a JSON object");
    return profile_from_json(j, &data_.catalog(), options_.profile.this_year);
  }

  /// Body: {profile?: {...}, user_id?: int, n?: int, t?: real, m?: int}.
  nlohmann::json recommend(const nlohmann::json& body) const {
    if (!body.is_object()) throw Error(Errc::UsageError, "service_cli", "request body must be a JSON object");
    PoolSpec spec = options_.default_spec;
    try {
      spec.n = body.value("n", spec.n);
      spec.t = body.value("t", spec.t);
      spec.m = body.value("m", spec.m);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::UsageError, "service_cli", std::string("bad pool parameters: ") + e.what());
    }
    spec.validate();

    std::optional<UserId> user;
    if (body.contains("user_id") && !body["user_id"].is_null()) {
      if (!body["user_id"].is_number_integer()) throw Error(Errc::UsageError, "service_cli", "user_id must be an integer");
      user = body["user_id"].get<UserId>();
    }
    std::set<MovieId> exclude;
    PreferenceProfile profile;
    if (body.contains("profile")) {
      profile = parse_profile(body);
      if (user) profile.user_id = user;
      for (const auto& f : profile.favorites) exclude.insert(f.movie_id);
    } else if (user) {
      const auto ratings = data_.user_ratings(*user);
      if (ratings.empty()) throw Error(Errc::MissingUser, "service_cli", "unknown user " + std::to_string(*user));
      profile = build_auto_profile(*user, ratings, data_.catalog(), meta_, options_.profile);
    } else {
      throw Error(Errc::UsageError, "service_cli", "provide a profile or a user_id");
    }
    if (user) {
      for (MovieId id : data_.user_rated_items(*user)) exclude.insert(id);
    }
    const auto rec = reranker_.recommend(profile, spec, exclude, user);
    auto out = recommendation_json(user, rec, data_.catalog());
    for (std::size_t i = 0; i < rec.items.size(); ++i) out["items"][i]["attempts"] = rec.items[i].attempts;
    out["profile"] = to_json(profile);
    out["pool_size"] = rec.pool.size();
    return out;
  }

  nlohmann::json movie(MovieId id) const {
    const MovieRecord* m = data_.movie(id);
    if (!m) throw Error(Errc::NotFound, "service_cli", "unknown movie " + std::to_string(id));
    nlohmann::json j{{"movie_id", id}, {"title", display_title(m->title)}, {"genres", m->genres}};
    j["year"] = m->release_year ? nlohmann::json(*m->release_year) : nlohmann::json(nullptr);
    j["external_id"] = m->external_id ? nlohmann::json(*m->external_id) : nlohmann::json(nullptr);
    j["tmdb_id"] = m->tmdb_id ? nlohmann::json(*m->tmdb_id) : nlohmann::json(nullptr);
    const MovieMeta* meta = find_meta(meta_, id);
    j["metadata"] = meta ? to_json(*meta) : nlohmann::json(nullptr);
    return j;
  }

 private:
  static constexpr double kSearchFloor = 0.3;

  static nlohmann::json parse_body(const httplib::Request& req) {
    try {
      return nlohmann::json::parse(req.body);
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::UsageError, "service_cli", std::string("invalid JSON body: ") + e.what());
    }
  }

  static std::size_t parse_size(const std::string& text, const char* name) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(text, &used);
      if (used == text.size() && v > 0 && v <= 1000) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw Error(Errc::UsageError, "service_cli", std::string(name) + " must be an integer in [1, 1000]");
  }

  static void reply(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <class Fn>
  static void guarded(httplib::Response& res, Fn&& fn) {
    try {
      reply(res, 200, fn());
    } catch (const Error& e) {
      reply(res, http_status(e.code()), error_body(e.code(), e.module(), e.what()));
    } catch (const std::exception& e) {
      reply(res, 500, error_body(Errc::IoError, "service_cli", e.what()));
    }
  }

  const Dataset& data_;
  const MfModel& model_;
  const MetaLookup& meta_;
  const MetadataProvider* provider_;
  LlmClient& llm_;
  Reranker reranker_;
  ServiceOptions options_;
};

}  // namespace llmrec
