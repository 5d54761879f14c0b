#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "llmrec/mf.hpp"

namespace llmrec::oracle {

struct GradientMismatch {
  std::string parameter;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative = 0.0;
};

inline double relative_error(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale < 1e-8) return std::abs(a - b);
  return std::abs(a - b) / scale;
}

/// Compares `compute_gradient` with central finite differences of
/// `rating_objective` for every parameter touched by each rating.
/// Returns the worst relative error seen; mismatches above `tolerance` are
/// appended to `failures`.
inline double check_gradients(MfModel model, const std::vector<InnerRating>& ratings, double tolerance,
                              std::vector<GradientMismatch>* failures = nullptr, double h = 1e-6) {
  double worst = 0.0;
  LocalGradient g;
  auto probe = [&](const InnerRating& r, double& param, double analytic, const std::string& name) {
    const double saved = param;
    param = saved + h;
    const double up = rating_objective(model, r);
    param = saved - h;
    const double down = rating_objective(model, r);
    param = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double rel = relative_error(analytic, numeric);
    worst = std::max(worst, rel);
    if (rel > tolerance && failures) failures->push_back({name, analytic, numeric, rel});
  };
  for (const auto& r : ratings) {
    compute_gradient(model, r, g);
    const auto user_grad = g.user_factors;
    const auto item_grad = g.item_factors;
    const double ub = g.user_bias;
    const double ib = g.item_bias;
    const std::string tag = "(u" + std::to_string(r.user) + ",i" + std::to_string(r.item) + ")";
    probe(r, model.user_bias[r.user], ub, "b_u" + tag);
    probe(r, model.item_bias[r.item], ib, "b_i" + tag);
    for (std::size_t f = 0; f < model.factors(); ++f) {
      probe(r, model.user_factors.row(r.user)[f], user_grad[f], "p_u[" + std::to_string(f) + "]" + tag);
      probe(r, model.item_factors.row(r.item)[f], item_grad[f], "q_i[" + std::to_string(f) + "]" + tag);
    }
    if (model.kind == MfKind::SvdPlusPlus) {
      for (std::uint32_t j : model.rated_by[r.user]) {
        const auto yg = g.implicit_gradient(model, j);
        for (std::size_t f = 0; f < model.factors(); ++f) {
          probe(r, model.implicit_factors.row(j)[f], yg[f],
                "y_" + std::to_string(j) + "[" + std::to_string(f) + "]" + tag);
        }
      }
    }
  }
  return worst;
}

/// 2 users x 2 items, every pair rated, with non-trivial random parameters.
inline MfModel gradient_fixture(MfKind kind, std::vector<InnerRating>& inner) {
  const std::vector<Rating> ratings{{1, 10, 4.0, 0}, {1, 20, 2.5, 0}, {2, 10, 1.0, 0}, {2, 20, 5.0, 0}};
  TrainConfig config;
  config.factors = 3;
  config.epochs = 1;
  config.regularization = 0.05;
  config.init_std = 0.5;
  config.seed = 7;
  MfModel model = init_model(ratings, config, kind, &inner);
  Rng rng(99);
  for (double& b : model.user_bias) b = rng.normal(0.0, 0.3);
  for (double& b : model.item_bias) b = rng.normal(0.0, 0.3);
  return model;
}

}  // namespace llmrec::oracle
