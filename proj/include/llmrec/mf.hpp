#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "llmrec/dataset.hpp"
#include "llmrec/error.hpp"
#include "llmrec/rng.hpp"

namespace llmrec {

enum class MfKind { Svd, SvdPlusPlus };

inline std::string_view to_string(MfKind kind) { return kind == MfKind::Svd ? "svd" : "svdpp"; }

inline MfKind parse_mf_kind(std::string_view text) {
  if (text == "svd") return MfKind::Svd;
  if (text == "svdpp" || text == "svd++") return MfKind::SvdPlusPlus;
  throw Error(Errc::UsageError, "matrix_factorization", "unknown algorithm '" + std::string(text) + "'");
}

inline constexpr double kMinRating = 0.5;
inline constexpr double kMaxRating = 5.0;

struct TrainConfig {
  int factors = 100;
  int epochs = 20;
  double learning_rate = 0.005;
  double regularization = 0.02;
  std::uint64_t seed = 42;
  double init_std = 0.1;

  // Surprise's defaults for the respective algorithm.
  static TrainConfig defaults(MfKind kind) {
    TrainConfig c;
    if (kind == MfKind::SvdPlusPlus) {
      c.factors = 20;
      c.learning_rate = 0.007;
    }
    return c;
  }

  void validate() const {
    if (factors < 1 || epochs < 1 || !(learning_rate > 0.0) || !(regularization >= 0.0) || !(init_std >= 0.0)) {
      throw Error(Errc::UsageError, "matrix_factorization",
                  "TrainConfig requires factors >= 1, epochs >= 1, learning_rate > 0, regularization >= 0");
    }
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Dense row-major matrix; one row per user or item.
class FactorMatrix {
 public:
  FactorMatrix() = default;
  FactorMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  friend bool operator==(const FactorMatrix&, const FactorMatrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// A rating expressed in the model's dense user/item indices.
struct InnerRating {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  double value = 0.0;
};

struct MfModel {
  MfKind kind = MfKind::Svd;
  TrainConfig config;
  std::string dataset_fingerprint;
  double global_mean = 0.0;

  std::vector<UserId> user_ids;  // inner index -> raw id
  std::vector<MovieId> item_ids;
  std::unordered_map<UserId, std::uint32_t> user_index;
  std::unordered_map<MovieId, std::uint32_t> item_index;

  std::vector<double> user_bias;
  std::vector<double> item_bias;
  FactorMatrix user_factors;
  FactorMatrix item_factors;
  FactorMatrix implicit_factors;                     // SVD++ only
  std::vector<std::vector<std::uint32_t>> rated_by;  // N(u) per inner user; SVD++ only

  std::size_t factors() const { return item_factors.cols(); }

  std::optional<std::uint32_t> inner_user(UserId id) const {
    auto it = user_index.find(id);
    if (it == user_index.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::uint32_t> inner_item(MovieId id) const {
    auto it = item_index.find(id);
    if (it == item_index.end()) return std::nullopt;
    return it->second;
  }

  /// p_u for SVD; p_u + |N(u)|^-1/2 * sum y_j for SVD++.
  std::vector<double> user_vector(std::uint32_t u) const {
    auto pu = user_factors.row(u);
    std::vector<double> z(pu.begin(), pu.end());
    if (kind == MfKind::SvdPlusPlus && !rated_by[u].empty()) {
      const double scale = 1.0 / std::sqrt(static_cast<double>(rated_by[u].size()));
      for (std::uint32_t j : rated_by[u]) {
        auto yj = implicit_factors.row(j);
        for (std::size_t f = 0; f < z.size(); ++f) z[f] += scale * yj[f];
      }
    }
    return z;
  }

  /// Unclamped estimate on inner indices.
  double estimate(std::uint32_t u, std::uint32_t i) const {
    const auto z = user_vector(u);
    return estimate_with(u, i, z);
  }

  double estimate_with(std::uint32_t u, std::uint32_t i, std::span<const double> user_vec) const {
    auto qi = item_factors.row(i);
    double dot = 0.0;
    for (std::size_t f = 0; f < qi.size(); ++f) dot += qi[f] * user_vec[f];
    return global_mean + user_bias[u] + item_bias[i] + dot;
  }

  void validate() const {
    const bool implicit = !implicit_factors.empty();
    if (user_factors.cols() != item_factors.cols() || (implicit && implicit_factors.cols() != item_factors.cols())) {
      throw Error(Errc::IoError, "matrix_factorization", "factor matrices disagree on the factor count");
    }
    if (implicit != (kind == MfKind::SvdPlusPlus)) {
      throw Error(Errc::IoError, "matrix_factorization", "implicit factors must exist exactly for SVD++");
    }
  }
};

inline double clamp_rating(double raw) { return std::clamp(raw, kMinRating, kMaxRating); }

/// Raw (unclamped) score with the unknown-entity fallback: biases of whichever
/// side is known, interaction term only when both are.
inline double predict_raw(const MfModel& model, UserId user, MovieId movie) {
  const auto u = model.inner_user(user);
  const auto i = model.inner_item(movie);
  if (u && i) return model.estimate(*u, *i);
  double est = model.global_mean;
  if (u) est += model.user_bias[*u];
  if (i) est += model.item_bias[*i];
  return est;
}

inline double predict(const MfModel& model, UserId user, MovieId movie) {
  return clamp_rating(predict_raw(model, user, movie));
}

/// Per-rating gradient of 0.5*err^2 + 0.5*reg*(|b_u|^2+|b_i|^2+|p_u|^2+|q_i|^2+sum_j |y_j|^2).
/// The gradient for each y_j is `implicit_common + reg * y_j`.
struct LocalGradient {
  double error = 0.0;
  double user_bias = 0.0;
  double item_bias = 0.0;
  std::vector<double> user_factors;
  std::vector<double> item_factors;
  std::vector<double> implicit_common;  // SVD++ only
  std::vector<double> implicit_sum;     // |N(u)|^-1/2 * sum y_j, kept for the update

  std::vector<double> implicit_gradient(const MfModel& model, std::uint32_t j) const {
    auto yj = model.implicit_factors.row(j);
    std::vector<double> g(implicit_common);
    for (std::size_t f = 0; f < g.size(); ++f) g[f] += model.config.regularization * yj[f];
    return g;
  }
};

inline void compute_gradient(const MfModel& model, const InnerRating& r, LocalGradient& out) {
  const std::size_t nf = model.factors();
  const double reg = model.config.regularization;
  auto pu = model.user_factors.row(r.user);
  auto qi = model.item_factors.row(r.item);
  const bool plus = model.kind == MfKind::SvdPlusPlus;

  out.implicit_sum.assign(plus ? nf : 0, 0.0);
  double scale = 0.0;
  if (plus && !model.rated_by[r.user].empty()) {
    scale = 1.0 / std::sqrt(static_cast<double>(model.rated_by[r.user].size()));
    for (std::uint32_t j : model.rated_by[r.user]) {
      auto yj = model.implicit_factors.row(j);
      for (std::size_t f = 0; f < nf; ++f) out.implicit_sum[f] += yj[f];
    }
    for (auto& v : out.implicit_sum) v *= scale;
  }

  double dot = 0.0;
  for (std::size_t f = 0; f < nf; ++f) dot += qi[f] * (pu[f] + (plus ? out.implicit_sum[f] : 0.0));
  const double err = r.value - (model.global_mean + model.user_bias[r.user] + model.item_bias[r.item] + dot);
  out.error = err;
  out.user_bias = -err + reg * model.user_bias[r.user];
  out.item_bias = -err + reg * model.item_bias[r.item];
  out.user_factors.resize(nf);
  out.item_factors.resize(nf);
  out.implicit_common.assign(plus ? nf : 0, 0.0);
  for (std::size_t f = 0; f < nf; ++f) {
    out.user_factors[f] = -err * qi[f] + reg * pu[f];
    out.item_factors[f] = -err * (pu[f] + (plus ? out.implicit_sum[f] : 0.0)) + reg * qi[f];
    if (plus) out.implicit_common[f] = -err * qi[f] * scale;
  }
}

/// Objective whose gradient `compute_gradient` returns; used for gradient checks.
inline double rating_objective(const MfModel& model, const InnerRating& r) {
  const double reg = model.config.regularization;
  const double err = r.value - model.estimate(r.user, r.item);
  double penalty = model.user_bias[r.user] * model.user_bias[r.user] + model.item_bias[r.item] * model.item_bias[r.item];
  for (double v : model.user_factors.row(r.user)) penalty += v * v;
  for (double v : model.item_factors.row(r.item)) penalty += v * v;
  if (model.kind == MfKind::SvdPlusPlus) {
    for (std::uint32_t j : model.rated_by[r.user]) {
      for (double v : model.implicit_factors.row(j)) penalty += v * v;
    }
  }
  return 0.5 * err * err + 0.5 * reg * penalty;
}

/// One SGD step: every parameter moves by -learning_rate * gradient, with all
/// gradients taken at the pre-step parameters.
inline void sgd_step(MfModel& model, const InnerRating& r, LocalGradient& scratch) {
  compute_gradient(model, r, scratch);
  const double lr = model.config.learning_rate;
  const std::size_t nf = model.factors();
  model.user_bias[r.user] -= lr * scratch.user_bias;
  model.item_bias[r.item] -= lr * scratch.item_bias;
  auto pu = model.user_factors.row(r.user);
  auto qi = model.item_factors.row(r.item);
  for (std::size_t f = 0; f < nf; ++f) {
    pu[f] -= lr * scratch.user_factors[f];
    qi[f] -= lr * scratch.item_factors[f];
  }
  if (model.kind == MfKind::SvdPlusPlus) {
    const double reg = model.config.regularization;
    for (std::uint32_t j : model.rated_by[r.user]) {
      auto yj = model.implicit_factors.row(j);
      for (std::size_t f = 0; f < nf; ++f) yj[f] -= lr * (scratch.implicit_common[f] + reg * yj[f]);
    }
  }
}

namespace detail {

inline void fill_normal(FactorMatrix& m, Rng& rng, double stddev) {
  for (double& v : m.data()) v = rng.normal(0.0, stddev);
}

}  // namespace detail

/// Builds an untrained model: index maps, mu, zero biases, seeded factors.
inline MfModel init_model(std::span<const Rating> ratings, const TrainConfig& config, MfKind kind,
                          std::vector<InnerRating>* inner_out = nullptr) {
  config.validate();
  if (ratings.empty()) throw Error(Errc::EmptyDataset, "matrix_factorization", "cannot train on zero ratings");

  MfModel model;
  model.kind = kind;
  model.config = config;
  std::vector<InnerRating> inner;
  inner.reserve(ratings.size());
  double sum = 0.0;
  for (const Rating& r : ratings) {
    auto [uit, unew] = model.user_index.try_emplace(r.user_id, static_cast<std::uint32_t>(model.user_ids.size()));
    if (unew) model.user_ids.push_back(r.user_id);
    auto [iit, inew] = model.item_index.try_emplace(r.movie_id, static_cast<std::uint32_t>(model.item_ids.size()));
    if (inew) model.item_ids.push_back(r.movie_id);
    inner.push_back({uit->second, iit->second, r.value});
    sum += r.value;
  }
  model.global_mean = sum / static_cast<double>(ratings.size());

  const std::size_t nu = model.user_ids.size();
  const std::size_t ni = model.item_ids.size();
  const auto nf = static_cast<std::size_t>(config.factors);
  model.user_bias.assign(nu, 0.0);
  model.item_bias.assign(ni, 0.0);
  model.user_factors = FactorMatrix(nu, nf);
  model.item_factors = FactorMatrix(ni, nf);

  Rng rng(config.seed);
  detail::fill_normal(model.user_factors, rng, config.init_std);
  detail::fill_normal(model.item_factors, rng, config.init_std);
  if (kind == MfKind::SvdPlusPlus) {
    model.implicit_factors = FactorMatrix(ni, nf);
    detail::fill_normal(model.implicit_factors, rng, config.init_std);
    model.rated_by.assign(nu, {});
    for (const auto& r : inner) model.rated_by[r.user].push_back(r.item);
  }
  if (inner_out) *inner_out = std::move(inner);
  return model;
}

/// Mean squared error of the unclamped estimate over `ratings`.
inline double training_mse(const MfModel& model, std::span<const InnerRating> ratings) {
  if (ratings.empty()) return 0.0;
  double total = 0.0;
  std::optional<std::uint32_t> cached_user;
  std::vector<double> z;
  for (const auto& r : ratings) {
    if (cached_user != r.user) {
      z = model.user_vector(r.user);
      cached_user = r.user;
    }
    const double err = r.value - model.estimate_with(r.user, r.item, z);
    total += err * err;
  }
  return total / static_cast<double>(ratings.size());
}

/// Per-epoch callback receives (epoch index, model after that epoch).
template <typename EpochFn>
MfModel train(std::span<const Rating> ratings, const TrainConfig& config, MfKind kind, EpochFn&& on_epoch) {
  std::vector<InnerRating> inner;
  MfModel model = init_model(ratings, config, kind, &inner);
  // Separate stream from initialisation so changing f does not alter the visit order.
  Rng order_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::uint32_t> order(inner.size());
  LocalGradient scratch;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::uint32_t k = 0; k < order.size(); ++k) order[k] = k;
    order_rng.shuffle(order);
    for (std::uint32_t k : order) sgd_step(model, inner[k], scratch);
    on_epoch(epoch, static_cast<const MfModel&>(model), std::span<const InnerRating>(inner));
  }
  return model;
}

inline MfModel train(std::span<const Rating> ratings, const TrainConfig& config, MfKind kind) {
  return train(ratings, config, kind, [](int, const MfModel&, std::span<const InnerRating>) {});
}

inline MfModel train(std::span<const Rating> ratings, MfKind kind) {
  return train(ratings, TrainConfig::defaults(kind), kind);
}

struct Candidate {
  MovieId movie_id = 0;
  double predicted = 0.0;

  friend bool operator==(const Candidate&, const Candidate&) = default;
};

/// Orders by predicted rating descending, then movie id ascending.
inline bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.predicted != b.predicted) return a.predicted > b.predicted;
  return a.movie_id < b.movie_id;
}

/// Highest-predicted items of `universe` (the model's known items when empty)
/// minus `exclude`.
inline std::vector<Candidate> top_candidates(const MfModel& model, UserId user, std::size_t pool_size,
                                             const std::set<MovieId>& exclude,
                                             std::span<const MovieId> universe = {}) {
  if (pool_size < 1) throw Error(Errc::InvalidSpec, "matrix_factorization", "pool_size must be >= 1");
  std::span<const MovieId> items = universe.empty() ? std::span<const MovieId>(model.item_ids) : universe;
  const auto u = model.inner_user(user);
  std::vector<double> z;
  if (u) z = model.user_vector(*u);

  std::vector<Candidate> scored;
  scored.reserve(items.size());
  for (MovieId movie : items) {
    if (exclude.contains(movie)) continue;
    const auto i = model.inner_item(movie);
    double raw;
    if (u && i) {
      raw = model.estimate_with(*u, *i, z);
    } else {
      raw = model.global_mean + (u ? model.user_bias[*u] : 0.0) + (i ? model.item_bias[*i] : 0.0);
    }
    scored.push_back({movie, clamp_rating(raw)});
  }
  const std::size_t keep = std::min(pool_size, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), candidate_before);
  scored.resize(keep);
  return scored;
}

// ---- checkpoint ------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"factors", c.factors},       {"epochs", c.epochs}, {"learning_rate", c.learning_rate},
          {"regularization", c.regularization}, {"seed", c.seed},     {"init_std", c.init_std}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.factors = j.at("factors").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.regularization = j.at("regularization").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.init_std = j.at("init_std").get<double>();
  return c;
}

/// Versioned CBOR container with every model field, the training config and
/// the dataset fingerprint.
inline void save_checkpoint(const MfModel& model, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = "llmrec-mf";
  j["version"] = kCheckpointVersion;
  j["kind"] = to_string(model.kind);
  j["config"] = to_json(model.config);
  j["dataset_fingerprint"] = model.dataset_fingerprint;
  j["global_mean"] = model.global_mean;
  j["user_ids"] = model.user_ids;
  j["item_ids"] = model.item_ids;
  j["user_bias"] = model.user_bias;
  j["item_bias"] = model.item_bias;
  j["factors"] = model.factors();
  j["user_factors"] = model.user_factors.data();
  j["item_factors"] = model.item_factors.data();
  if (model.kind == MfKind::SvdPlusPlus) {
    j["implicit_factors"] = model.implicit_factors.data();
    j["rated_by"] = model.rated_by;
  }
  const auto bytes = nlohmann::json::to_cbor(j);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "matrix_factorization", "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

inline MfModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::MissingFile, "matrix_factorization", "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  nlohmann::json j;
  try {
    j = nlohmann::json::from_cbor(bytes);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::IoError, "matrix_factorization", "corrupt checkpoint " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "llmrec-mf" || j.value("version", 0) != kCheckpointVersion) {
    throw Error(Errc::IoError, "matrix_factorization", "unsupported checkpoint format in " + path.string());
  }
  MfModel m;
  m.kind = parse_mf_kind(j.at("kind").get<std::string>());
  m.config = train_config_from_json(j.at("config"));
  m.dataset_fingerprint = j.at("dataset_fingerprint").get<std::string>();
  m.global_mean = j.at("global_mean").get<double>();
  m.user_ids = j.at("user_ids").get<std::vector<UserId>>();
  m.item_ids = j.at("item_ids").get<std::vector<MovieId>>();
  m.user_bias = j.at("user_bias").get<std::vector<double>>();
  m.item_bias = j.at("item_bias").get<std::vector<double>>();
  const auto nf = j.at("factors").get<std::size_t>();
  m.user_factors = FactorMatrix(m.user_ids.size(), nf);
  m.item_factors = FactorMatrix(m.item_ids.size(), nf);
  m.user_factors.data() = j.at("user_factors").get<std::vector<double>>();
  m.item_factors.data() = j.at("item_factors").get<std::vector<double>>();
  if (m.kind == MfKind::SvdPlusPlus) {
    m.implicit_factors = FactorMatrix(m.item_ids.size(), nf);
    m.implicit_factors.data() = j.at("implicit_factors").get<std::vector<double>>();
    m.rated_by = j.at("rated_by").get<std::vector<std::vector<std::uint32_t>>>();
  }
  if (m.user_factors.data().size() != m.user_ids.size() * nf || m.item_factors.data().size() != m.item_ids.size() * nf ||
      m.user_bias.size() != m.user_ids.size() || m.item_bias.size() != m.item_ids.size()) {
    throw Error(Errc::IoError, "matrix_factorization", "checkpoint arrays have inconsistent sizes");
  }
  for (std::uint32_t k = 0; k < m.user_ids.size(); ++k) m.user_index.emplace(m.user_ids[k], k);
  for (std::uint32_t k = 0; k < m.item_ids.size(); ++k) m.item_index.emplace(m.item_ids[k], k);
  m.validate();
  return m;
}

}  // namespace llmrec
