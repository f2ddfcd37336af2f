#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cavrec/cftrain.hpp"
#include "cavrec/kernels.hpp"

namespace cavrec {

namespace {

kernels::SparseRows build_rows(const std::vector<Rating>& ratings,
                               const std::vector<double>& weights, int num_rows, bool by_user) {
  kernels::SparseRows rows;
  rows.num_rows = num_rows;
  rows.offsets.assign(num_rows + 1, 0);
  for (const auto& r : ratings) ++rows.offsets[(by_user ? r.user : r.item) + 1];
  std::partial_sum(rows.offsets.begin(), rows.offsets.end(), rows.offsets.begin());
  rows.cols.resize(ratings.size());
  rows.values.resize(ratings.size());
  rows.weights.resize(ratings.size());
  std::vector<std::size_t> cursor(rows.offsets.begin(), rows.offsets.end() - 1);
  for (std::size_t k = 0; k < ratings.size(); ++k) {
    const auto& r = ratings[k];
    std::size_t slot = cursor[by_user ? r.user : r.item]++;
    rows.cols[slot] = by_user ? r.item : r.user;
    rows.values[slot] = r.value;
    rows.weights[slot] = weights[k];
  }
  return rows;
}

void check_ratings(const std::vector<Rating>& ratings, int num_users, int num_items) {
  if (ratings.empty()) throw DataError("no ratings to train on");
  for (const auto& r : ratings) {
    if (r.user < 0 || r.user >= num_users || r.item < 0 || r.item >= num_items) {
      throw std::out_of_range("rating index out of range");
    }
  }
}

}  // namespace

std::vector<double> confidence_weights(const std::vector<Rating>& ratings, int num_items,
                                       double beta) {
  std::vector<double> mass(num_items, 0.0);
  for (const auto& r : ratings) mass[r.item] += r.value;
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (const auto& r : ratings) {
    lo = std::min(lo, mass[r.item]);
    hi = std::max(hi, mass[r.item]);
  }
  std::vector<double> w(ratings.size(), 1.0);
  if (ratings.empty()) return w;
  for (std::size_t k = 0; k < ratings.size(); ++k) {
    double pop = hi > lo ? (mass[ratings[k].item] - lo) / (hi - lo) : 0.0;
    w[k] = 1.0 + beta * (1.0 - pop);
  }
  double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
  for (auto& x : w) x /= mean;
  return w;
}

double rmse(const LinearEmbeddingModel& model, const std::vector<Rating>& ratings) {
  if (ratings.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : ratings) {
    double e = predict_rating(model, r.user, r.item) - r.value;
    total += e * e;
  }
  return std::sqrt(total / static_cast<double>(ratings.size()));
}

WalsResult train_wals(const std::vector<Rating>& ratings, int num_users, int num_items,
                      const WalsConfig& config) {
  if (config.dim < 1) throw ConfigError("WALS dimension must be positive");
  if (config.kappa <= 0) throw ConfigError("WALS kappa must be positive");
  if (config.iterations < 1) throw ConfigError("WALS needs at least one iteration");
  if (config.validation_fraction < 0 || config.validation_fraction >= 1) {
    throw ConfigError("validation_fraction must lie in [0,1)");
  }
  check_ratings(ratings, num_users, num_items);

  Rng rng = derive_rng(config.seed, {0x3a15});
  std::vector<Rating> train, valid;
  if (config.validation_fraction > 0) {
    std::vector<std::size_t> order(ratings.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    auto holdout = static_cast<std::size_t>(config.validation_fraction * ratings.size());
    std::vector<char> held(ratings.size(), 0);
    for (std::size_t k = 0; k < holdout; ++k) held[order[k]] = 1;
    for (std::size_t k = 0; k < ratings.size(); ++k) (held[k] ? valid : train).push_back(ratings[k]);
    if (train.empty()) throw DataError("validation split left no training ratings");
  } else {
    train = ratings;
  }

  auto weights = confidence_weights(train, num_items, config.confidence_beta);
  auto by_user = build_rows(train, weights, num_users, true);
  auto by_item = build_rows(train, weights, num_items, false);

  const int d = config.dim;
  std::normal_distribution<double> init(0.0, 0.1 / std::sqrt(static_cast<double>(d)));
  LinearEmbeddingModel model;
  model.kappa = config.kappa;
  model.user_vecs.resize(num_users, d);
  model.item_vecs.resize(num_items, d);
  for (Eigen::Index k = 0; k < model.user_vecs.size(); ++k) model.user_vecs.data()[k] = init(rng);
  for (Eigen::Index k = 0; k < model.item_vecs.size(); ++k) model.item_vecs.data()[k] = init(rng);

  auto objective = [&] {
    return kernels::weighted_sq_error(by_user, model.user_vecs, model.item_vecs) +
           config.kappa * (model.user_vecs.squaredNorm() + model.item_vecs.squaredNorm());
  };

  WalsResult out;
  out.objective_trace.push_back(objective());
  LinearEmbeddingModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  for (int it = 1; it <= config.iterations; ++it) {
    kernels::solve_rows(by_user, model.item_vecs, config.kappa, model.user_vecs);
    out.objective_trace.push_back(objective());
    kernels::solve_rows(by_item, model.user_vecs, config.kappa, model.item_vecs);
    out.objective_trace.push_back(objective());
    if (!model.user_vecs.allFinite() || !model.item_vecs.allFinite()) {
      throw DataError("WALS produced non-finite factors at iteration " + std::to_string(it));
    }
    if (valid.empty()) {
      best = model;
      out.best_iteration = it;
      continue;
    }
    double v = rmse(model, valid);
    out.validation_rmse.push_back(v);
    if (v < best_val) {
      best_val = v;
      best = model;
      out.best_iteration = it;
      since_best = 0;
    } else if (config.patience > 0 && ++since_best >= config.patience) {
      break;
    }
  }
  out.model = std::move(best);
  return out;
}

Mat item_representations(const LinearEmbeddingModel& model) { return model.item_vecs; }

Vec item_representation(const LinearEmbeddingModel& model, ItemId item) {
  if (item < 0 || item >= model.item_vecs.rows()) throw std::out_of_range("item id out of range");
  return model.item_vecs.row(item).transpose();
}

double predict_rating(const LinearEmbeddingModel& model, UserId user, ItemId item) {
  return model.user_vecs.row(user).dot(model.item_vecs.row(item));
}

}  // namespace cavrec
