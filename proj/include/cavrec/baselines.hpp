#pragma once

#include <vector>

#include "cavrec/core.hpp"
#include "cavrec/rng.hpp"

namespace cavrec {

/// Pairwise interaction tensor factorization:
/// y(u,i,g) = ⟨user_u, tag_user_g⟩ + ⟨item_i, tag_item_g⟩.
struct PitfModel {
  Mat user_vecs;
  Mat item_vecs;
  Mat tag_user_vecs;
  Mat tag_item_vecs;

  int dim() const { return static_cast<int>(user_vecs.cols()); }
  double predict(UserId u, ItemId i, TagId g) const;
  /// User-independent item ordering for a tag (item part of the score).
  Vec item_scores(TagId g) const;
};

struct LabeledTriple {
  UserId user;
  ItemId item;
  TagId tag;
  int label;  // +1 tagged, −1 sampled negative
};

struct PitfConfig {
  int dim = 16;
  double learning_rate = 0.0002;
  double reg = 0.00005;
  int epochs = 100;
  int neg_ratio = 4;
  std::uint64_t seed = 1;
};

/// Positives of every tag plus neg_ratio negatives per positive from T_{u,ḡ},
/// drawn exactly as for CAV training.
std::vector<LabeledTriple> pitf_examples(const Dataset& dataset, int neg_ratio, Rng& rng);

struct PitfResult {
  PitfModel model;
  std::vector<double> epoch_loss;  // mean logistic loss per epoch
};

/// Pointwise logistic SGD with L2 regularization.
PitfResult train_pitf(const std::vector<LabeledTriple>& examples, int num_users, int num_items,
                      int num_tags, const PitfConfig& config);

/// Fraction of examples where sign(y) matches the label (y = 0 counts as +).
double pitf_predict_accuracy(const PitfModel& model, const std::vector<LabeledTriple>& examples);

}  // namespace cavrec
