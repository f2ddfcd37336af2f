#pragma once

#include <functional>
#include <limits>
#include <vector>

#include "cavrec/core.hpp"
#include "cavrec/rng.hpp"
#include "cavrec/synthgen.hpp"

namespace cavrec {

/// Top-k items by score, ties broken by ascending item id.
std::vector<ItemId> recommend_slate(const Mat& item_embs, const Vec& user_embedding, int k);

struct AttrBounds {
  Vec lo;
  Vec hi;
};

/// Per-dimension min/max over a uniform sample of at most `sample` items.
AttrBounds estimate_attr_bounds(const Mat& attrs, int sample, Rng& rng);

/// Simulated user. Utility, attribute space and tag semantics are all in the
/// user's own (ground-truth) coordinates.
struct UserSim {
  Mat attrs;              // m × D item attributes as the user perceives them
  Vec weights;            // w(u)
  Vec peaks;              // empty for linear utility
  Vec utility;            // true utility of every item
  std::vector<Vec> tag_dirs;  // w_g per tag in attribute space
  AttrBounds bounds;
  double accept_threshold = std::numeric_limits<double>::infinity();
  Vec ratings;            // optional reference ratings per item (NaN = unknown)
};

/// q-quantile (linear interpolation) of the user's utility over all items.
double utility_quantile(const Vec& utility, double q);

/// Synthetic user from generator ground truth. Sense tags use the user's own
/// designated attribute; irrelevant tags get a zero direction.
UserSim synthetic_user(const synth::GroundTruth& gt, const synth::SynthConfig& config, UserId user,
                       const AttrBounds& bounds, double accept_quantile);

/// Frozen learned user: linear utility ϕ_U(u)ᵀϕ_I(i) with learned CAVs as tag semantics.
UserSim embedding_user(const Mat& item_embs, const Vec& user_embedding,
                       const std::vector<Vec>& tag_cavs, const AttrBounds& bounds,
                       double accept_quantile, Vec ratings = {});

Vec estimated_ideal_item(const UserSim& sim);

struct Response {
  bool accept = false;
  ItemId item = -1;   // accepted item
  TagId tag = -1;     // critiqued tag
  int sign = 0;       // +1 "more", −1 "less", 0 when no tag is salient
};

Response user_respond(const UserSim& sim, const std::vector<ItemId>& slate);

Vec apply_critique(const Vec& user_embedding, const Vec& cav, int sign, int t, double alpha0);

struct SlateMetrics {
  double ndcg = 0.0;
  double mrr = 0.0;
  double binarized = 0.0;
};

/// NDCG@|slate| (log₂ discount, ideal over every rated item), MRR and mean
/// binarized rating; an item is relevant when its rating exceeds 3.
SlateMetrics slate_metrics(const std::vector<ItemId>& slate, const Vec& ratings);

struct SessionStep {
  int step = 0;
  std::vector<ItemId> slate;
  Response response;
  Vec user_embedding;
  double umu = 0.0;
  double uau = 0.0;
  SlateMetrics metrics;
  bool has_metrics = false;
};

struct SessionTrace {
  std::vector<SessionStep> steps;  // step 0 is the initial slate
  bool accepted = false;
};

/// Recommend → respond → update, for at most `max_steps` critiques. `tag_cavs`
/// are the system's directions for this user (sense already resolved).
SessionTrace run_session(const Mat& item_embs, const std::vector<Vec>& tag_cavs,
                         const UserSim& sim, const Vec& prior, int k, int max_steps,
                         double alpha0);

struct StepAggregate {
  double mean = 0.0;
  double std = 0.0;
};

/// Per-step mean/std of a session metric across users; sessions that ended
/// early are padded with their final value.
std::vector<StepAggregate> aggregate_steps(const std::vector<SessionTrace>& traces,
                                           int max_steps,
                                           const std::function<double(const SessionStep&)>& metric);

}  // namespace cavrec
