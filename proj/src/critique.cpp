#include "cavrec/critique.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cavrec {

std::vector<ItemId> recommend_slate(const Mat& item_embs, const Vec& user_embedding, int k) {
  if (k < 1) throw ConfigError("slate size must be at least 1");
  if (item_embs.cols() != user_embedding.size()) throw std::invalid_argument("embedding dim mismatch");
  Vec scores = item_embs * user_embedding;
  std::vector<ItemId> ids(scores.size());
  std::iota(ids.begin(), ids.end(), 0);
  const auto take = std::min<std::size_t>(k, ids.size());
  std::partial_sort(ids.begin(), ids.begin() + take, ids.end(), [&](ItemId a, ItemId b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });
  ids.resize(take);
  return ids;
}

AttrBounds estimate_attr_bounds(const Mat& attrs, int sample, Rng& rng) {
  if (attrs.rows() == 0) throw DataError("no items to estimate bounds from");
  std::vector<Eigen::Index> ids(attrs.rows());
  std::iota(ids.begin(), ids.end(), 0);
  const auto take = std::min<std::size_t>(std::max(sample, 1), ids.size());
  for (std::size_t k = 0; k < take; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, ids.size() - 1);
    std::swap(ids[k], ids[pick(rng)]);
  }
  AttrBounds b{attrs.row(ids[0]).transpose(), attrs.row(ids[0]).transpose()};
  for (std::size_t k = 1; k < take; ++k) {
    b.lo = b.lo.cwiseMin(attrs.row(ids[k]).transpose());
    b.hi = b.hi.cwiseMax(attrs.row(ids[k]).transpose());
  }
  return b;
}

double utility_quantile(const Vec& utility, double q) {
  if (utility.size() == 0) throw DataError("empty utility vector");
  std::vector<double> v(utility.data(), utility.data() + utility.size());
  std::sort(v.begin(), v.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

UserSim synthetic_user(const synth::GroundTruth& gt, const synth::SynthConfig& config, UserId user,
                       const AttrBounds& bounds, double accept_quantile) {
  UserSim sim;
  sim.attrs = gt.item_attrs;
  sim.weights = gt.user_weights.row(user).transpose();
  if (config.utility == synth::UtilityKind::SinglePeaked) sim.peaks = gt.user_peaks.row(user).transpose();
  sim.utility.resize(gt.item_attrs.rows());
  for (Eigen::Index i = 0; i < sim.utility.size(); ++i) {
    sim.utility[i] = synth::item_utility(gt, config, user, static_cast<ItemId>(i));
  }
  const Eigen::Index D = gt.item_attrs.cols();
  for (TagId g = 0; g < static_cast<TagId>(gt.tags.size()); ++g) {
    Vec dir = Vec::Zero(D);
    int attr = gt.user_tag_attribute(user, g);
    if (attr >= 0) dir[attr] = 1.0;
    sim.tag_dirs.push_back(std::move(dir));
  }
  sim.bounds = bounds;
  sim.accept_threshold = utility_quantile(sim.utility, accept_quantile);
  return sim;
}

UserSim embedding_user(const Mat& item_embs, const Vec& user_embedding,
                       const std::vector<Vec>& tag_cavs, const AttrBounds& bounds,
                       double accept_quantile, Vec ratings) {
  UserSim sim;
  sim.attrs = item_embs;
  sim.weights = user_embedding;
  sim.utility = item_embs * user_embedding;
  sim.tag_dirs = tag_cavs;
  sim.bounds = bounds;
  sim.accept_threshold = utility_quantile(sim.utility, accept_quantile);
  sim.ratings = std::move(ratings);
  return sim;
}

Vec estimated_ideal_item(const UserSim& sim) {
  const Eigen::Index D = sim.weights.size();
  Vec ideal(D);
  for (Eigen::Index a = 0; a < D; ++a) {
    if (sim.peaks.size() > 0) {
      ideal[a] = std::clamp(sim.peaks[a], sim.bounds.lo[a], sim.bounds.hi[a]);
    } else {
      ideal[a] = sim.weights[a] >= 0 ? sim.bounds.hi[a] : sim.bounds.lo[a];
    }
  }
  return ideal;
}

Response user_respond(const UserSim& sim, const std::vector<ItemId>& slate) {
  if (slate.empty()) throw std::invalid_argument("empty slate");
  Response r;
  ItemId best = slate.front();
  for (ItemId i : slate)
    if (sim.utility[i] > sim.utility[best]) best = i;
  if (sim.utility[best] >= sim.accept_threshold) {
    r.accept = true;
    r.item = best;
    return r;
  }
  Vec mean = Vec::Zero(sim.attrs.cols());
  for (ItemId i : slate) mean += sim.attrs.row(i).transpose();
  mean /= static_cast<double>(slate.size());
  const Vec gap = estimated_ideal_item(sim) - mean;
  const Vec delta = gap.cwiseProduct(sim.weights);
  double best_sal = 0.0;
  for (TagId g = 0; g < static_cast<TagId>(sim.tag_dirs.size()); ++g) {
    double s = std::abs(delta.dot(sim.tag_dirs[g]));
    if (s > best_sal) {
      best_sal = s;
      r.tag = g;
    }
  }
  if (r.tag < 0) return r;
  // Utility gain picks the tag; the attribute gap says which way to move.
  const double dir = gap.dot(sim.tag_dirs[r.tag]);
  r.sign = dir > 0 ? 1 : (dir < 0 ? -1 : 0);
  return r;
}

Vec apply_critique(const Vec& user_embedding, const Vec& cav, int sign, int t, double alpha0) {
  if (user_embedding.size() != cav.size()) throw std::invalid_argument("CAV dimension mismatch");
  return user_embedding + (sign * alpha0 / (1.0 + t)) * cav;
}

SlateMetrics slate_metrics(const std::vector<ItemId>& slate, const Vec& ratings) {
  if (slate.empty()) throw std::invalid_argument("empty slate");
  auto relevant = [&](ItemId i) { return i < ratings.size() && ratings[i] > 3.0; };
  SlateMetrics m;
  double dcg = 0.0;
  for (std::size_t r = 0; r < slate.size(); ++r) {
    if (!relevant(slate[r])) continue;
    dcg += 1.0 / std::log2(r + 2.0);
    if (m.mrr == 0.0) m.mrr = 1.0 / static_cast<double>(r + 1);
    m.binarized += 1.0;
  }
  m.binarized /= static_cast<double>(slate.size());
  std::size_t total = 0;
  for (Eigen::Index i = 0; i < ratings.size(); ++i) total += ratings[i] > 3.0 ? 1 : 0;
  double ideal = 0.0;
  for (std::size_t r = 0; r < std::min(total, slate.size()); ++r) ideal += 1.0 / std::log2(r + 2.0);
  m.ndcg = ideal > 0 ? dcg / ideal : 0.0;
  return m;
}

SessionTrace run_session(const Mat& item_embs, const std::vector<Vec>& tag_cavs,
                         const UserSim& sim, const Vec& prior, int k, int max_steps,
                         double alpha0) {
  if (max_steps < 0) throw ConfigError("max_steps must be non-negative");
  if (sim.utility.size() != item_embs.rows()) throw std::invalid_argument("utility/item count mismatch");
  SessionTrace trace;
  Vec emb = prior;
  std::vector<int> uses(tag_cavs.size(), 0);
  for (int step = 0; step <= max_steps; ++step) {
    SessionStep s;
    s.step = step;
    s.slate = recommend_slate(item_embs, emb, k);
    s.user_embedding = emb;
    double total = 0.0;
    s.umu = -std::numeric_limits<double>::infinity();
    for (ItemId i : s.slate) {
      total += sim.utility[i];
      s.umu = std::max(s.umu, sim.utility[i]);
    }
    s.uau = total / static_cast<double>(s.slate.size());
    if (sim.ratings.size() > 0) {
      s.metrics = slate_metrics(s.slate, sim.ratings);
      s.has_metrics = true;
    }
    s.response = user_respond(sim, s.slate);
    const Response r = s.response;
    trace.steps.push_back(std::move(s));
    if (r.accept) {
      trace.accepted = true;
      break;
    }
    if (step == max_steps || r.sign == 0) continue;
    if (r.tag < 0 || r.tag >= static_cast<TagId>(tag_cavs.size())) {
      throw std::out_of_range("critiqued tag has no system CAV");
    }
    emb = apply_critique(emb, tag_cavs[r.tag], r.sign, uses[r.tag]++, alpha0);
  }
  return trace;
}

std::vector<StepAggregate> aggregate_steps(const std::vector<SessionTrace>& traces, int max_steps,
                                           const std::function<double(const SessionStep&)>& metric) {
  std::vector<StepAggregate> out(max_steps + 1);
  if (traces.empty()) return out;
  for (int t = 0; t <= max_steps; ++t) {
    double sum = 0.0, sq = 0.0;
    for (const auto& tr : traces) {
      const auto& s = tr.steps[std::min<std::size_t>(t, tr.steps.size() - 1)];
      double v = metric(s);
      sum += v;
      sq += v * v;
    }
    const double n = static_cast<double>(traces.size());
    out[t].mean = sum / n;
    out[t].std = std::sqrt(std::max(0.0, sq / n - out[t].mean * out[t].mean));
  }
  return out;
}

}  // namespace cavrec
