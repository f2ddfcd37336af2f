#include "cavrec/evalmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace cavrec {

using kernels::Pair;

ComparisonSet comparisons_from_assessment(const RaterAssessment& a) {
  std::set<ItemId> seen;
  for (const auto* cls : {&a.less, &a.same, &a.more}) {
    for (ItemId i : *cls) {
      if (!seen.insert(i).second) {
        throw DataError("assessment of '" + a.attribute + "' by " + a.rater +
                        " lists an item in more than one class");
      }
    }
  }
  ComparisonSet cs;
  cs.rater = a.rater;
  cs.attribute = a.attribute;
  for (ItemId m : a.more)
    for (ItemId l : a.less) cs.strong.push_back({m, l});
  for (ItemId m : a.more)
    for (ItemId s : a.same) cs.weak.push_back({m, s});
  for (ItemId s : a.same)
    for (ItemId l : a.less) cs.weak.push_back({s, l});
  for (const auto* cls : {&a.more, &a.same, &a.less}) {
    for (std::size_t x = 0; x < cls->size(); ++x)
      for (std::size_t y = x + 1; y < cls->size(); ++y) cs.indifferent.push_back({(*cls)[x], (*cls)[y]});
  }
  return cs;
}

GammaCounts& GammaCounts::operator+=(const GammaCounts& o) {
  same += o.same;
  strong_same += o.strong_same;
  diff += o.diff;
  strong_diff += o.strong_diff;
  return *this;
}

double GammaCounts::value() const {
  const double den = same + diff + 2.0 * (strong_same + strong_diff);
  if (den <= 0.0) throw DataError("G' is undefined without strong or weak pairs");
  return (same - diff + 2.0 * (strong_same - strong_diff)) / den;
}

GammaCounts gamma_counts(const Vec& scores, const ComparisonSet& comparisons) {
  GammaCounts c;
  auto tally = [&](const std::vector<Pair>& pairs, double& agree, double& disagree) {
    for (const auto& p : pairs) {
      const double d = scores[p.pos] - scores[p.neg];
      if (d > 0) agree += 1.0;
      else if (d < 0) disagree += 1.0;
      else {
        agree += 0.5;
        disagree += 0.5;
      }
    }
  };
  tally(comparisons.strong, c.strong_same, c.strong_diff);
  tally(comparisons.weak, c.same, c.diff);
  return c;
}

double gamma_rank_correlation(const Vec& direction, const ComparisonSet& comparisons,
                              const Mat& reprs) {
  return gamma_counts(cosine_scores(direction, reprs), comparisons).value();
}

namespace {

Vec average_ranks(const Vec& x) {
  const Eigen::Index n = x.size();
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return x[a] < x[b]; });
  Vec r(n);
  for (Eigen::Index k = 0; k < n;) {
    Eigen::Index j = k;
    while (j + 1 < n && x[order[j + 1]] == x[order[k]]) ++j;
    const double avg = 0.5 * static_cast<double>(k + j) + 1.0;
    for (Eigen::Index t = k; t <= j; ++t) r[order[t]] = avg;
    k = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
  if (a.size() < 2) throw DataError("spearman needs at least two values");
  Vec ra = average_ranks(a), rb = average_ranks(b);
  ra.array() -= ra.mean();
  rb.array() -= rb.mean();
  const double den = std::sqrt(ra.squaredNorm() * rb.squaredNorm());
  if (den == 0.0) throw DataError("spearman is undefined for constant input");
  return ra.dot(rb) / den;
}

double spearman_vs_ground_truth(const Vec& direction, const Mat& reprs, const Vec& truth) {
  return spearman(cav_scores(direction, reprs), truth);
}

double tag_accuracy(Trainer trainer, const Vec& direction, const Mat& reprs,
                    const TagExamples& test) {
  Vec scores = cav_scores(direction, reprs);
  if (trainer == Trainer::Logistic) return classification_accuracy(scores, flatten_labeled(test));
  return pair_quality(scores, flatten_pairs(test));
}

TagExamples rater_examples(const std::vector<const RaterAssessment*>& assessments,
                           const std::vector<std::string>& raters, double strong_weight,
                           double weak_weight) {
  TagExamples out;
  for (std::size_t r = 0; r < raters.size(); ++r) {
    UserExamples ex;
    ex.user = static_cast<UserId>(r);
    for (const auto* a : assessments) {
      if (a->rater != raters[r]) continue;
      auto cs = comparisons_from_assessment(*a);
      for (auto p : cs.strong) ex.pairs.push_back({p.pos, p.neg, strong_weight});
      for (auto p : cs.weak) ex.pairs.push_back({p.pos, p.neg, weak_weight});
      for (ItemId i : a->more) ex.labeled.push_back({i, +1, 1.0});
      for (ItemId i : a->less) ex.labeled.push_back({i, -1, 1.0});
    }
    if (!ex.pairs.empty()) out.push_back(std::move(ex));
  }
  return out;
}

GammaCounts score_comparisons(const std::vector<ComparisonSet>& sets, const SenseModel& model,
                              const Mat& reprs) {
  if (model.senses.empty()) throw std::invalid_argument("sense model has no senses");
  std::vector<Vec> dot, cosine;
  for (const auto& cav : model.senses) {
    dot.push_back(cav_scores(cav.direction, reprs));
    cosine.push_back(cosine_scores(cav.direction, reprs));
  }
  GammaCounts total;
  for (const auto& cs : sets) {
    int sense = 0;
    if (model.senses.size() > 1) {
      std::vector<Pair> pairs = cs.strong;
      pairs.insert(pairs.end(), cs.weak.begin(), cs.weak.end());
      sense = assign_user_sense(dot, pairs).sense;
    }
    total += gamma_counts(cosine[sense], cs);
  }
  return total;
}

RaterEvalResult kfold_rater_eval(const std::vector<RaterAssessment>& assessments,
                                 const Mat& reprs, int k, const RaterEvalConfig& config,
                                 std::uint64_t seed) {
  if (k < 2) throw ConfigError("k-fold evaluation needs k >= 2");
  if (config.trainer == Trainer::Logistic) {
    throw ConfigError("rater evaluation trains ranking CAVs; logistic is not supported");
  }
  std::set<std::string> rater_set, attr_set;
  for (const auto& a : assessments) {
    rater_set.insert(a.rater);
    attr_set.insert(a.attribute);
  }
  std::vector<std::string> raters(rater_set.begin(), rater_set.end());
  if (static_cast<int>(raters.size()) < k) throw DataError("fewer raters than folds");
  Rng rng = derive_rng(seed, {0xf01d});
  std::shuffle(raters.begin(), raters.end(), rng);
  std::map<std::string, int> fold_of;
  for (std::size_t r = 0; r < raters.size(); ++r) fold_of[raters[r]] = static_cast<int>(r % k);

  RaterEvalResult out;
  std::map<std::string, std::pair<double, int>> per_attr;
  for (int f = 0; f < k; ++f) {
    std::vector<std::string> train_raters;
    for (const auto& r : raters)
      if (fold_of[r] != f) train_raters.push_back(r);
    std::sort(train_raters.begin(), train_raters.end());
    GammaCounts pooled;
    bool any = false;
    std::uint64_t attr_index = 0;
    for (const auto& attr : attr_set) {
      ++attr_index;
      std::vector<const RaterAssessment*> train;
      std::vector<ComparisonSet> test;
      for (const auto& a : assessments) {
        if (a.attribute != attr) continue;
        if (fold_of[a.rater] == f) test.push_back(comparisons_from_assessment(a));
        else train.push_back(&a);
      }
      TagExamples ex = rater_examples(train, train_raters, config.strong_weight, config.weak_weight);
      if (count_pairs(ex) == 0 || test.empty()) {
        out.skipped.push_back(std::to_string(f) + ":" + attr);
        continue;
      }
      SenseModel model;
      if (config.senses) {
        EmConfig em = config.em;
        em.trainer = config.trainer;
        em.lambda = config.lambda;
        em.opt = config.opt;
        std::uint64_t job = splitmix64(seed ^ (attr_index * 0x9e37 + static_cast<std::uint64_t>(f)));
        model = select_sense_count(ex, ex, reprs, 0, config.s_max, config.sense_eps, em, job).model;
      } else {
        model.senses.push_back(train_cav(config.trainer, ex, reprs, config.lambda, config.opt));
      }
      GammaCounts counts = score_comparisons(test, model, reprs);
      try {
        double g = counts.value();
        auto& acc = per_attr[attr];
        acc.first += g;
        acc.second += 1;
      } catch (const DataError&) {
        out.skipped.push_back(std::to_string(f) + ":" + attr);
        continue;
      }
      pooled += counts;
      any = true;
    }
    if (any) out.fold_aggregate.push_back(pooled.value());
  }
  for (const auto& [attr, acc] : per_attr) out.per_attribute[attr] = acc.first / acc.second;
  if (out.fold_aggregate.empty()) throw DataError("no fold produced a G' value");
  out.aggregate = std::accumulate(out.fold_aggregate.begin(), out.fold_aggregate.end(), 0.0) /
                  static_cast<double>(out.fold_aggregate.size());
  return out;
}

}  // namespace cavrec
