#include <algorithm>
#include <numeric>

#include "cavrec/cavlearn.hpp"

namespace cavrec {

using kernels::Pair;

namespace {

std::size_t correct_pairs(const Vec& scores, std::span<const Pair> pairs) {
  std::size_t ok = 0;
  for (const auto& p : pairs) ok += scores[p.pos] >= scores[p.neg] ? 1 : 0;
  return ok;
}

Vec train_or_zero(const EmConfig& config, const TagExamples& subset, const Mat& reprs) {
  try {
    return train_cav(config.trainer, subset, reprs, config.lambda, config.opt).direction;
  } catch (const DataError&) {
    return Vec::Zero(reprs.cols());
  }
}

struct EmState {
  std::vector<int> assignment;  // per user index
  std::vector<Vec> directions;
  std::vector<Vec> scores;
  std::vector<std::vector<std::size_t>> correct;  // user × sense
  double quality = 0.0;
};

class EmRunner {
 public:
  EmRunner(const TagExamples& train, const TagExamples& eval, const Mat& reprs, int s,
           const EmConfig& config)
      : train_(train), reprs_(reprs), s_(s), config_(config) {
    eval_pairs_.resize(train.size());
    std::size_t e = 0;
    for (std::size_t u = 0; u < train.size(); ++u) {
      while (e < eval.size() && eval[e].user < train[u].user) ++e;
      if (e < eval.size() && eval[e].user == train[u].user) eval_pairs_[u] = eval[e].pairs;
      total_pairs_ += eval_pairs_[u].size();
    }
    if (total_pairs_ == 0) throw DataError("sense clustering needs at least one evaluation pair");
  }

  EmResult run(Rng& rng) {
    const std::size_t n = train_.size();
    EmState state;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    state.assignment.assign(n, 0);
    for (std::size_t k = 0; k < n; ++k) state.assignment[order[k]] = static_cast<int>(k % s_);
    fit(state);

    EmResult out;
    out.quality_trace.push_back(state.quality);
    for (int it = 1; it <= config_.max_iters; ++it) {
      out.iterations = it;
      EmState next;
      next.assignment = reassign(state);
      if (next.assignment == state.assignment) break;
      fit(next);
      if (next.quality <= state.quality) break;
      const double gain = next.quality - state.quality;
      state = std::move(next);
      out.quality_trace.push_back(state.quality);
      if (gain < config_.eps) break;
    }
    out.model = to_model(state);
    return out;
  }

 private:
  void fit(EmState& st) const {
    st.directions.assign(s_, Vec());
    st.scores.assign(s_, Vec());
    for (int k = 0; k < s_; ++k) {
      TagExamples subset;
      for (std::size_t u = 0; u < train_.size(); ++u)
        if (st.assignment[u] == k) subset.push_back(train_[u]);
      st.directions[k] = train_or_zero(config_, subset, reprs_);
      st.scores[k] = cav_scores(st.directions[k], reprs_);
    }
    st.correct.assign(train_.size(), std::vector<std::size_t>(s_, 0));
    std::size_t total = 0;
    for (std::size_t u = 0; u < train_.size(); ++u) {
      for (int k = 0; k < s_; ++k) st.correct[u][k] = correct_pairs(st.scores[k], eval_pairs_[u]);
      total += st.correct[u][st.assignment[u]];
    }
    st.quality = static_cast<double>(total) / static_cast<double>(total_pairs_);
  }

  std::vector<int> reassign(const EmState& st) const {
    std::vector<int> next = st.assignment;
    for (std::size_t u = 0; u < train_.size(); ++u) {
      if (eval_pairs_[u].empty()) continue;
      int best = 0;
      for (int k = 1; k < s_; ++k)
        if (st.correct[u][k] > st.correct[u][best]) best = k;
      next[u] = best;
    }
    // Reseed empty clusters with the worst-fit user of a cluster that can spare one.
    std::vector<int> sizes(s_, 0);
    for (int a : next) ++sizes[a];
    for (int k = 0; k < s_; ++k) {
      if (sizes[k] > 0) continue;
      std::size_t worst = train_.size();
      double worst_fit = 2.0;
      for (std::size_t u = 0; u < train_.size(); ++u) {
        if (sizes[next[u]] <= 1) continue;
        double fit = eval_pairs_[u].empty()
                         ? 1.0
                         : static_cast<double>(st.correct[u][next[u]]) / eval_pairs_[u].size();
        if (fit < worst_fit) {
          worst_fit = fit;
          worst = u;
        }
      }
      if (worst == train_.size()) continue;
      --sizes[next[worst]];
      next[worst] = k;
      ++sizes[k];
    }
    return next;
  }

  SenseModel to_model(const EmState& st) const {
    SenseModel model;
    model.avg_quality = st.quality;
    for (int k = 0; k < s_; ++k) {
      CAV cav;
      cav.trainer = config_.trainer;
      cav.lambda = config_.lambda;
      cav.direction = st.directions[k];
      std::size_t ok = 0, total = 0;
      for (std::size_t u = 0; u < train_.size(); ++u) {
        if (st.assignment[u] != k) continue;
        ok += st.correct[u][k];
        total += eval_pairs_[u].size();
      }
      cav.quality = total ? static_cast<double>(ok) / static_cast<double>(total) : 0.0;
      model.senses.push_back(std::move(cav));
    }
    for (std::size_t u = 0; u < train_.size(); ++u) {
      model.user_assignment[train_[u].user] = st.assignment[u];
    }
    return model;
  }

  const TagExamples& train_;
  const Mat& reprs_;
  int s_;
  EmConfig config_;
  std::vector<std::vector<Pair>> eval_pairs_;
  std::size_t total_pairs_ = 0;
};

}  // namespace

SenseAssignment assign_user_sense(const std::vector<Vec>& sense_scores,
                                  std::span<const Pair> pairs) {
  if (sense_scores.empty()) throw std::invalid_argument("sense model has no senses");
  if (pairs.empty()) return {0, true};
  SenseAssignment best{0, false};
  std::size_t best_count = correct_pairs(sense_scores[0], pairs);
  for (std::size_t k = 1; k < sense_scores.size(); ++k) {
    std::size_t c = correct_pairs(sense_scores[k], pairs);
    if (c > best_count) {
      best_count = c;
      best.sense = static_cast<int>(k);
    }
  }
  return best;
}

SenseAssignment assign_user_sense(const SenseModel& model, std::span<const Pair> pairs,
                                  const Mat& reprs) {
  std::vector<Vec> scores;
  for (const auto& cav : model.senses) scores.push_back(cav_scores(cav.direction, reprs));
  return assign_user_sense(scores, pairs);
}

EmResult em_sense_cavs(const TagExamples& train, const TagExamples& eval, const Mat& reprs,
                       TagId tag, int s, const EmConfig& config, Rng& rng) {
  if (s < 1) throw ConfigError("number of senses must be at least 1");
  if (config.restarts < 1 || config.max_iters < 0) throw ConfigError("bad EM iteration settings");
  if (train.empty()) throw DataError("sense clustering needs tagged users");
  const int senses = std::min<int>(s, static_cast<int>(train.size()));
  EmRunner runner(train, eval, reprs, senses, config);
  EmResult best;
  for (int r = 0; r < config.restarts; ++r) {
    EmResult res = runner.run(rng);
    if (r == 0 || res.model.avg_quality > best.model.avg_quality) best = std::move(res);
  }
  best.model.tag = tag;
  for (auto& cav : best.model.senses) cav.tag = tag;
  return best;
}

SenseSelection select_sense_count(const TagExamples& train, const TagExamples& eval,
                                  const Mat& reprs, TagId tag, int s_max, double eps,
                                  const EmConfig& config, std::uint64_t seed) {
  if (s_max < 1) throw ConfigError("s_max must be at least 1");
  SenseSelection out;
  for (int s = 1; s <= s_max; ++s) {
    Rng rng = derive_rng(seed, {static_cast<std::uint64_t>(tag), static_cast<std::uint64_t>(s)});
    EmResult res = em_sense_cavs(train, eval, reprs, tag, s, config, rng);
    out.quality_by_s.push_back(res.model.avg_quality);
    if (s > 1 && res.model.avg_quality - out.quality_by_s[s - 2] < eps) break;
    out.model = std::move(res.model);
  }
  return out;
}

}  // namespace cavrec
