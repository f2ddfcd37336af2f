#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "cavrec/cftrain.hpp"

namespace cavrec {

namespace {

Vec relu(const Vec& x) { return x.cwiseMax(0.0); }

Tower zero_like(const Tower& t) {
  return {Mat::Zero(t.emb.rows(), t.emb.cols()), Mat::Zero(t.w2.rows(), t.w2.cols()),
          Vec::Zero(t.b2.size()), Mat::Zero(t.w3.rows(), t.w3.cols()), Vec::Zero(t.b3.size())};
}

struct RowGrad {
  int row;
  Vec grad;
};

// Gradient of the dense layers plus a list of per-example embedding-row gradients.
struct BatchGrad {
  double loss = 0.0;
  Tower user;  // emb left empty
  Tower item;
  std::vector<RowGrad> user_rows;
  std::vector<RowGrad> item_rows;
};

Tower dense_zero(const Tower& t) {
  Tower z = zero_like(t);
  z.emb.resize(0, 0);
  return z;
}

// Backpropagate d(loss)/d(output) through one tower row.
void backprop(const Tower& t, int row, const std::array<Vec, 3>& act, const Vec& g_out,
              double emb_reg, Tower& g, std::vector<RowGrad>& rows) {
  g.w3.noalias() += g_out * act[1].transpose();
  g.b3 += g_out;
  Vec g_z2 = t.w3.transpose() * g_out;
  for (Eigen::Index c = 0; c < g_z2.size(); ++c) {
    if (act[1][c] <= 0.0) g_z2[c] = 0.0;
  }
  g.w2.noalias() += g_z2 * act[0].transpose();
  g.b2 += g_z2;
  Vec g_a1 = t.w2.transpose() * g_z2;
  Vec e = t.emb.row(row).transpose();
  for (Eigen::Index c = 0; c < g_a1.size(); ++c) {
    if (e[c] <= 0.0) g_a1[c] = 0.0;
  }
  g_a1 += 2.0 * emb_reg * e;
  rows.push_back({row, std::move(g_a1)});
}

BatchGrad batch_grad(const DeepEmbeddingModel& model, const std::vector<Rating>& batch,
                     const RatingDegrees& deg, bool want_grad) {
  BatchGrad out;
  if (want_grad) {
    out.user = dense_zero(model.user);
    out.item = dense_zero(model.item);
  }
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const auto& r : batch) {
    auto au = tower_forward(model.user, r.user);
    auto ai = tower_forward(model.item, r.item);
    const Vec& pu = au[2];
    const Vec& pi = ai[2];
    const double du = std::max(deg.user[r.user], 1);
    const double di = std::max(deg.item[r.item], 1);
    const double err = pu.dot(pi) - r.value;
    const double eu = model.user.emb.row(r.user).squaredNorm();
    const double ei = model.item.emb.row(r.item).squaredNorm();
    out.loss += inv_b * (err * err + model.kappa * (pu.squaredNorm() / du + pi.squaredNorm() / di) +
                         model.rho * (eu / du + ei / di));
    if (!want_grad) continue;
    Vec gu = inv_b * (2.0 * err * pi + 2.0 * model.kappa * pu / du);
    Vec gi = inv_b * (2.0 * err * pu + 2.0 * model.kappa * pi / di);
    backprop(model.user, r.user, au, gu, inv_b * model.rho / du, out.user, out.user_rows);
    backprop(model.item, r.item, ai, gi, inv_b * model.rho / di, out.item, out.item_rows);
  }
  const double reg = model.rho / static_cast<double>(std::max<std::size_t>(deg.total, 1));
  out.loss += reg * (model.user.w2.squaredNorm() + model.user.w3.squaredNorm() +
                     model.item.w2.squaredNorm() + model.item.w3.squaredNorm());
  if (want_grad) {
    out.user.w2 += 2.0 * reg * model.user.w2;
    out.user.w3 += 2.0 * reg * model.user.w3;
    out.item.w2 += 2.0 * reg * model.item.w2;
    out.item.w3 += 2.0 * reg * model.item.w3;
  }
  return out;
}

struct AdamState {
  Mat m, v;
  explicit AdamState(Eigen::Index rows = 0, Eigen::Index cols = 0)
      : m(Mat::Zero(rows, cols)), v(Mat::Zero(rows, cols)) {}
};

struct TowerAdam {
  AdamState emb, w2, b2, w3, b3;
  explicit TowerAdam(const Tower& t)
      : emb(t.emb.rows(), t.emb.cols()), w2(t.w2.rows(), t.w2.cols()), b2(t.b2.size(), 1),
        w3(t.w3.rows(), t.w3.cols()), b3(t.b3.size(), 1) {}
};

class Adam {
 public:
  Adam(double lr, double b1, double b2) : lr_(lr), b1_(b1), b2_(b2) {}

  void tick() {
    ++t_;
    c1_ = 1.0 - std::pow(b1_, t_);
    c2_ = 1.0 - std::pow(b2_, t_);
  }

  template <typename P, typename G>
  void step(P&& param, const G& grad, AdamState& s, Eigen::Index row = -1) {
    auto apply = [&](auto&& p, const auto& g, auto&& m, auto&& v) {
      m = b1_ * m + (1.0 - b1_) * g;
      v = b2_ * v + (1.0 - b2_) * g.cwiseProduct(g);
      p -= (lr_ * (m / c1_).array() / ((v / c2_).array().sqrt() + 1e-8)).matrix();
    };
    if (row < 0) {
      apply(param, grad, s.m, s.v);
    } else {
      apply(param, grad, s.m.row(row), s.v.row(row));
    }
  }

 private:
  double lr_, b1_, b2_;
  int t_ = 0;
  double c1_ = 1.0, c2_ = 1.0;
};

void apply_rows(Adam& adam, Mat& emb, std::vector<RowGrad>& rows, AdamState& state) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const RowGrad& a, const RowGrad& b) { return a.row < b.row; });
  for (std::size_t k = 0; k < rows.size();) {
    int row = rows[k].row;
    Vec g = rows[k].grad;
    std::size_t j = k + 1;
    for (; j < rows.size() && rows[j].row == row; ++j) g += rows[j].grad;
    Eigen::RowVectorXd gr = g.transpose();
    adam.step(emb.row(row), gr, state, row);
    k = j;
  }
}

void update_tower(Adam& adam, Tower& t, BatchGrad& g, bool user, TowerAdam& s) {
  const Tower& gt = user ? g.user : g.item;
  adam.step(t.w2, gt.w2, s.w2);
  adam.step(t.w3, gt.w3, s.w3);
  Mat b2 = gt.b2.transpose(), b3 = gt.b3.transpose();
  Eigen::Map<Mat> pb2(t.b2.data(), 1, t.b2.size());
  Eigen::Map<Mat> pb3(t.b3.data(), 1, t.b3.size());
  adam.step(pb2, b2, s.b2);
  adam.step(pb3, b3, s.b3);
  apply_rows(adam, t.emb, user ? g.user_rows : g.item_rows, s.emb);
}

Tower init_tower(int rows, int d, bool zero_output, Rng& rng) {
  std::normal_distribution<double> init(0.0, 0.1 / std::sqrt(static_cast<double>(d)));
  auto fill = [&](Mat& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = init(rng);
  };
  Tower t{Mat(rows, d), Mat(d, d), Vec::Zero(d), Mat(d, d), Vec::Zero(d)};
  fill(t.emb);
  fill(t.w2);
  fill(t.w3);
  if (zero_output) t.w3.setZero();
  return t;
}

}  // namespace

std::array<Vec, 3> tower_forward(const Tower& tower, int row) {
  if (row < 0 || row >= tower.emb.rows()) throw std::out_of_range("tower row out of range");
  Vec a1 = relu(tower.emb.row(row).transpose());
  Vec a2 = relu(tower.w2 * a1 + tower.b2);
  Vec out = tower.w3 * a2 + tower.b3;
  return {std::move(a1), std::move(a2), std::move(out)};
}

RatingDegrees rating_degrees(const std::vector<Rating>& ratings, int num_users, int num_items) {
  RatingDegrees deg;
  deg.user.assign(num_users, 0);
  deg.item.assign(num_items, 0);
  for (const auto& r : ratings) {
    ++deg.user.at(r.user);
    ++deg.item.at(r.item);
  }
  deg.total = ratings.size();
  return deg;
}

TwoTowerGrad two_tower_loss_grad(const DeepEmbeddingModel& model,
                                 const std::vector<Rating>& batch, const RatingDegrees& degrees) {
  if (batch.empty()) throw DataError("empty batch");
  auto g = batch_grad(model, batch, degrees, true);
  TwoTowerGrad out{g.loss, zero_like(model.user), zero_like(model.item)};
  out.user.w2 = g.user.w2;
  out.user.b2 = g.user.b2;
  out.user.w3 = g.user.w3;
  out.user.b3 = g.user.b3;
  out.item.w2 = g.item.w2;
  out.item.b2 = g.item.b2;
  out.item.w3 = g.item.w3;
  out.item.b3 = g.item.b3;
  for (const auto& r : g.user_rows) out.user.emb.row(r.row) += r.grad.transpose();
  for (const auto& r : g.item_rows) out.item.emb.row(r.row) += r.grad.transpose();
  return out;
}

double rmse(const DeepEmbeddingModel& model, const std::vector<Rating>& ratings) {
  if (ratings.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : ratings) {
    double e = predict_rating(model, r.user, r.item) - r.value;
    total += e * e;
  }
  return std::sqrt(total / static_cast<double>(ratings.size()));
}

TwoTowerResult train_two_tower(const std::vector<Rating>& ratings, int num_users, int num_items,
                               const TwoTowerConfig& config,
                               const LinearEmbeddingModel* warm_start) {
  if (config.dim < 1) throw ConfigError("two-tower dimension must be positive");
  if (config.batch_size < 1 || config.epochs < 1) throw ConfigError("bad batch size or epochs");
  if (config.learning_rate <= 0) throw ConfigError("learning rate must be positive");
  if (ratings.empty()) throw DataError("no ratings to train on");

  Rng rng = derive_rng(config.seed, {0x7700});
  std::vector<Rating> train, valid;
  {
    std::vector<std::size_t> order(ratings.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    auto holdout = static_cast<std::size_t>(config.validation_fraction * ratings.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      (k < holdout ? valid : train).push_back(ratings[order[k]]);
    }
  }
  if (train.empty()) throw DataError("validation split left no training ratings");
  auto deg = rating_degrees(train, num_users, num_items);

  const int d = config.dim;
  DeepEmbeddingModel model;
  model.kappa = config.kappa;
  model.rho = config.rho;
  model.user = init_tower(num_users, d, config.zero_init_output, rng);
  model.item = init_tower(num_items, d, config.zero_init_output, rng);
  if (warm_start) {
    if (warm_start->dim() != d || warm_start->user_vecs.rows() != num_users ||
        warm_start->item_vecs.rows() != num_items) {
      throw ConfigError("warm-start model shape does not match the two-tower configuration");
    }
    model.user.emb = warm_start->user_vecs;
    model.item.emb = warm_start->item_vecs;
  }

  Adam adam(config.learning_rate, config.beta1, config.beta2);
  TowerAdam su(model.user), si(model.item);
  TwoTowerResult out;
  DeepEmbeddingModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Rating> batch;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(train.begin(), train.end(), rng);
    for (std::size_t lo = 0; lo < train.size(); lo += config.batch_size) {
      std::size_t hi = std::min(train.size(), lo + config.batch_size);
      batch.assign(train.begin() + lo, train.begin() + hi);
      auto g = batch_grad(model, batch, deg, true);
      if (!std::isfinite(g.loss)) {
        std::ostringstream msg;
        msg << "two-tower training diverged at epoch " << epoch << ", batch " << lo / config.batch_size
            << " (loss " << g.loss << ", lr " << config.learning_rate << ")";
        throw DataError(msg.str());
      }
      adam.tick();
      update_tower(adam, model.user, g, true, su);
      update_tower(adam, model.item, g, false, si);
    }
    out.train_loss.push_back(batch_grad(model, train, deg, false).loss);
    double v = valid.empty() ? 0.0 : rmse(model, valid);
    out.validation_rmse.push_back(v);
    if (valid.empty() || v < best_val) {
      best_val = v;
      best = model;
      out.best_epoch = epoch;
    }
  }
  out.model = std::move(best);
  return out;
}

Mat item_representations(const DeepEmbeddingModel& model, int layer) {
  if (layer < 1 || layer > DeepEmbeddingModel::kLayers) throw std::out_of_range("layer out of range");
  Mat out(model.item.emb.rows(), model.dim());
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    out.row(i) = tower_forward(model.item, static_cast<int>(i))[layer - 1].transpose();
  }
  return out;
}

Mat user_representations(const DeepEmbeddingModel& model) {
  Mat out(model.user.emb.rows(), model.dim());
  for (Eigen::Index u = 0; u < out.rows(); ++u) {
    out.row(u) = tower_forward(model.user, static_cast<int>(u))[2].transpose();
  }
  return out;
}

Vec item_representation(const DeepEmbeddingModel& model, ItemId item, int layer) {
  if (layer < 1 || layer > DeepEmbeddingModel::kLayers) throw std::out_of_range("layer out of range");
  return tower_forward(model.item, item)[layer - 1];
}

double predict_rating(const DeepEmbeddingModel& model, UserId user, ItemId item) {
  return tower_forward(model.user, user)[2].dot(tower_forward(model.item, item)[2]);
}

}  // namespace cavrec
