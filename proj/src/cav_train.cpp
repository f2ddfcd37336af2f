#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "cavrec/cavlearn.hpp"

namespace cavrec {

using kernels::LabeledItem;
using kernels::LossGrad;
using kernels::Pair;

const char* to_string(Trainer trainer) {
  switch (trainer) {
    case Trainer::Logistic: return "logistic";
    case Trainer::RankNet: return "ranknet";
    case Trainer::LambdaRank: return "lambdarank";
  }
  return "?";
}

Trainer trainer_from_string(const std::string& name) {
  if (name == "logistic" || name == "logregr") return Trainer::Logistic;
  if (name == "ranknet") return Trainer::RankNet;
  if (name == "lambdarank") return Trainer::LambdaRank;
  throw ConfigError("unknown trainer: " + name);
}

TagExamples build_examples(const Dataset& dataset, TagId tag, int neg_ratio, Rng& rng) {
  if (neg_ratio < 1) throw ConfigError("neg_ratio must be at least 1");
  if (tag < 0 || tag >= dataset.num_tags()) throw std::out_of_range("tag id out of range");
  TagExamples out;
  std::vector<ItemId> pool;
  for (UserId u = 0; u < dataset.num_users(); ++u) {
    TagView view = tag_view(dataset, u, tag);
    if (view.positives.empty()) continue;
    UserExamples ex;
    ex.user = u;
    for (ItemId i : view.positives) ex.labeled.push_back({i, +1});
    for (ItemId i : view.positives) {
      pool = view.negatives;
      const int take = std::min<int>(neg_ratio, static_cast<int>(pool.size()));
      for (int k = 0; k < take; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, pool.size() - 1);
        std::swap(pool[k], pool[pick(rng)]);
        ex.labeled.push_back({pool[k], -1});
        ex.pairs.push_back({i, pool[k]});
      }
    }
    out.push_back(std::move(ex));
  }
  if (out.empty()) throw DataError("tag '" + dataset.tag_vocab()[tag] + "' has no positives");
  return out;
}

TagExamples all_examples(const Dataset& dataset, TagId tag) {
  if (tag < 0 || tag >= dataset.num_tags()) throw std::out_of_range("tag id out of range");
  TagExamples out;
  for (UserId u = 0; u < dataset.num_users(); ++u) {
    TagView view = tag_view(dataset, u, tag);
    if (view.positives.empty()) continue;
    UserExamples ex;
    ex.user = u;
    for (ItemId i : view.positives) ex.labeled.push_back({i, +1});
    for (ItemId j : view.negatives) ex.labeled.push_back({j, -1});
    for (ItemId i : view.positives)
      for (ItemId j : view.negatives) ex.pairs.push_back({i, j});
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<LabeledItem> flatten_labeled(const TagExamples& examples) {
  std::vector<LabeledItem> out;
  for (const auto& ex : examples) out.insert(out.end(), ex.labeled.begin(), ex.labeled.end());
  return out;
}

std::vector<Pair> flatten_pairs(const TagExamples& examples) {
  std::vector<Pair> out;
  out.reserve(count_pairs(examples));
  for (const auto& ex : examples) out.insert(out.end(), ex.pairs.begin(), ex.pairs.end());
  return out;
}

std::size_t count_pairs(const TagExamples& examples) {
  std::size_t n = 0;
  for (const auto& ex : examples) n += ex.pairs.size();
  return n;
}

LossGrad logistic_objective(const Mat& reprs, std::span<const LabeledItem> items,
                            const Vec& direction, double lambda) {
  LossGrad out = kernels::labeled_logistic(reprs, items, direction);
  out.loss += 0.5 * lambda * direction.squaredNorm();
  out.grad += lambda * direction;
  return out;
}

LossGrad ranknet_objective(const Mat& reprs, std::span<const Pair> pairs, const Vec& direction,
                           double lambda) {
  LossGrad out = kernels::pair_logistic(reprs, pairs, direction);
  out.loss += 0.5 * lambda * direction.squaredNorm();
  out.grad += lambda * direction;
  return out;
}

std::vector<Pair> lambdarank_pairs(const Mat& reprs, const TagExamples& examples,
                                   const Vec& direction) {
  std::vector<Pair> out;
  out.reserve(count_pairs(examples));
  std::vector<ItemId> items;
  std::vector<std::pair<double, ItemId>> order;
  for (const auto& ex : examples) {
    if (ex.pairs.empty()) continue;
    items.clear();
    std::vector<ItemId> positives;
    for (const auto& p : ex.pairs) {
      items.push_back(p.pos);
      items.push_back(p.neg);
      positives.push_back(p.pos);
    }
    std::sort(items.begin(), items.end());
    items.erase(std::unique(items.begin(), items.end()), items.end());
    std::sort(positives.begin(), positives.end());
    positives.erase(std::unique(positives.begin(), positives.end()), positives.end());

    order.clear();
    for (ItemId i : items) order.push_back({-reprs.row(i).dot(direction), i});
    std::sort(order.begin(), order.end());
    double ideal = 0.0;
    for (std::size_t k = 1; k <= positives.size(); ++k) ideal += 1.0 / std::log2(k + 1.0);
    std::vector<double> rank(items.size());
    for (std::size_t r = 0; r < order.size(); ++r) {
      auto it = std::lower_bound(items.begin(), items.end(), order[r].second);
      rank[it - items.begin()] = static_cast<double>(r + 1);
    }
    auto rank_lookup = [&](ItemId i) {
      auto it = std::lower_bound(items.begin(), items.end(), i);
      return rank[it - items.begin()];
    };
    for (const auto& p : ex.pairs) {
      double delta = std::abs(1.0 / std::log2(1.0 + rank_lookup(p.pos)) -
                              1.0 / std::log2(1.0 + rank_lookup(p.neg))) / ideal;
      out.push_back({p.pos, p.neg, p.weight * delta});
    }
  }
  return out;
}

Vec minimize_adam(const std::function<LossGrad(const Vec&)>& objective, Vec x,
                  const OptimConfig& opt) {
  Vec m = Vec::Zero(x.size()), v = Vec::Zero(x.size());
  double c1 = 1.0, c2 = 1.0;
  for (int t = 1; t <= opt.max_iters; ++t) {
    LossGrad lg = objective(x);
    if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
      throw DataError("CAV optimization produced a non-finite objective");
    }
    if (lg.grad.norm() < opt.grad_tol) break;
    c1 *= opt.beta1;
    c2 *= opt.beta2;
    m = opt.beta1 * m + (1.0 - opt.beta1) * lg.grad;
    v = opt.beta2 * v + (1.0 - opt.beta2) * lg.grad.cwiseProduct(lg.grad);
    Vec mh = m / (1.0 - c1);
    Vec vh = v / (1.0 - c2);
    x.array() -= opt.learning_rate * mh.array() / (vh.array().sqrt() + 1e-8);
  }
  return x;
}

namespace {

CAV finish(Trainer trainer, Vec direction, const TagExamples& examples, const Mat& reprs,
           double lambda) {
  CAV cav;
  cav.trainer = trainer;
  cav.lambda = lambda;
  cav.direction = std::move(direction);
  if (count_pairs(examples) > 0) cav.quality = cav_quality(cav.direction, reprs, examples);
  return cav;
}

}  // namespace

CAV train_cav_logistic(const TagExamples& examples, const Mat& reprs, double lambda,
                       const OptimConfig& opt) {
  auto items = flatten_labeled(examples);
  bool has_pos = false, has_neg = false;
  for (const auto& e : items) (e.label > 0 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg) throw DataError("logistic CAV needs both positive and negative items");
  Vec x = minimize_adam(
      [&](const Vec& w) { return logistic_objective(reprs, items, w, lambda); },
      Vec::Zero(reprs.cols()), opt);
  return finish(Trainer::Logistic, std::move(x), examples, reprs, lambda);
}

CAV train_cav_ranknet(const TagExamples& examples, const Mat& reprs, double lambda,
                      const OptimConfig& opt) {
  auto pairs = flatten_pairs(examples);
  if (pairs.empty()) throw DataError("RankNet CAV needs at least one pair");
  Vec x = minimize_adam([&](const Vec& w) { return ranknet_objective(reprs, pairs, w, lambda); },
                        Vec::Zero(reprs.cols()), opt);
  return finish(Trainer::RankNet, std::move(x), examples, reprs, lambda);
}

CAV train_cav_lambdarank(const TagExamples& examples, const Mat& reprs, double lambda,
                         const OptimConfig& opt) {
  if (count_pairs(examples) == 0) throw DataError("LambdaRank CAV needs at least one pair");
  Vec x = minimize_adam(
      [&](const Vec& w) {
        auto weighted = lambdarank_pairs(reprs, examples, w);
        return ranknet_objective(reprs, weighted, w, lambda);
      },
      Vec::Zero(reprs.cols()), opt);
  return finish(Trainer::LambdaRank, std::move(x), examples, reprs, lambda);
}

CAV train_cav(Trainer trainer, const TagExamples& examples, const Mat& reprs, double lambda,
              const OptimConfig& opt) {
  switch (trainer) {
    case Trainer::Logistic: return train_cav_logistic(examples, reprs, lambda, opt);
    case Trainer::RankNet: return train_cav_ranknet(examples, reprs, lambda, opt);
    case Trainer::LambdaRank: return train_cav_lambdarank(examples, reprs, lambda, opt);
  }
  throw ConfigError("unknown trainer");
}

double cav_score(const CAV& cav, const Vec& repr) {
  if (repr.size() != cav.direction.size()) throw std::invalid_argument("CAV dimension mismatch");
  return cav.direction.dot(repr);
}

double cav_cosine(const CAV& cav, const Vec& repr) {
  double s = cav_score(cav, repr);
  double den = cav.direction.norm() * repr.norm();
  return den > 0 ? s / den : 0.0;
}

Vec cav_scores(const Vec& direction, const Mat& reprs) {
  if (reprs.cols() != direction.size()) throw std::invalid_argument("CAV dimension mismatch");
  return kernels::score_items(reprs, direction);
}

Vec cosine_scores(const Vec& direction, const Mat& reprs) {
  Vec s = cav_scores(direction, reprs);
  const double dn = direction.norm();
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    double den = dn * reprs.row(i).norm();
    s[i] = den > 0 ? s[i] / den : 0.0;
  }
  return s;
}

double pair_quality(const Vec& scores, std::span<const Pair> pairs) {
  if (pairs.empty()) throw DataError("quality is undefined without pairs");
  std::size_t ok = kernels::count_ordered({scores.data(), static_cast<std::size_t>(scores.size())},
                                          pairs);
  return static_cast<double>(ok) / static_cast<double>(pairs.size());
}

double cav_quality(const Vec& direction, const Mat& reprs, const TagExamples& examples) {
  auto pairs = flatten_pairs(examples);
  return pair_quality(cav_scores(direction, reprs), pairs);
}

double classification_accuracy(const Vec& scores, std::span<const LabeledItem> items) {
  if (items.empty()) throw DataError("accuracy is undefined on an empty set");
  std::size_t ok = 0;
  for (const auto& e : items) ok += ((scores[e.item] >= 0.0) == (e.label > 0)) ? 1 : 0;
  return static_cast<double>(ok) / static_cast<double>(items.size());
}

double fit_threshold(std::span<const double> positive_scores,
                     std::span<const double> negative_scores) {
  if (positive_scores.empty()) throw DataError("personal threshold needs at least one positive");
  std::vector<std::pair<double, int>> all;  // (score, +1 / −1)
  for (double s : positive_scores) all.push_back({s, +1});
  for (double s : negative_scores) all.push_back({s, -1});
  std::sort(all.begin(), all.end());
  const double lo = all.front().first, hi = all.back().first;
  const double range = hi - lo;

  // errors(τ) for τ just above the k-th distinct score.
  long below_pos = 0;
  long at_or_above_neg = static_cast<long>(negative_scores.size());
  const long err_low = at_or_above_neg;  // τ ≤ min
  long best_bounded = std::numeric_limits<long>::max();
  double best_mid = 0.0, best_width = -1.0;
  long err_high = static_cast<long>(positive_scores.size());  // τ > max
  for (std::size_t k = 0; k < all.size();) {
    const double s = all[k].first;
    std::size_t j = k;
    for (; j < all.size() && all[j].first == s; ++j) {
      if (all[j].second > 0) ++below_pos;
      else --at_or_above_neg;
    }
    if (j == all.size()) break;
    const double next = all[j].first;
    const long err = below_pos + at_or_above_neg;
    const double width = next - s;
    if (err < best_bounded || (err == best_bounded && width > best_width)) {
      best_bounded = err;
      best_width = width;
      best_mid = 0.5 * (s + next);
    }
    k = j;
  }
  const long best_unbounded = std::min(err_low, err_high);
  if (best_width >= 0.0 && best_bounded <= best_unbounded) return best_mid;
  const double margin = range > 0 ? 0.05 * range : 0.05;
  if (err_low <= err_high) return lo - margin;
  return hi + margin;
}

PersonalThreshold fit_personal_threshold(const CAV& cav, const TagView& view, const Mat& reprs) {
  std::vector<double> pos, neg;
  for (ItemId i : view.positives) pos.push_back(cav.direction.dot(reprs.row(i)));
  for (ItemId j : view.negatives) neg.push_back(cav.direction.dot(reprs.row(j)));
  return {view.user, view.tag, fit_threshold(pos, neg)};
}

}  // namespace cavrec
