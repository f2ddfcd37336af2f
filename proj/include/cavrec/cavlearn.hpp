#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "cavrec/core.hpp"
#include "cavrec/kernels.hpp"
#include "cavrec/rng.hpp"

namespace cavrec {

enum class Trainer { Logistic, RankNet, LambdaRank };

const char* to_string(Trainer trainer);
Trainer trainer_from_string(const std::string& name);

struct CAV {
  TagId tag = 0;
  Trainer trainer = Trainer::RankNet;
  int layer = 0;  // 0 for linear embeddings, 1..3 for two-tower activations
  double lambda = 0.0;
  Vec direction;
  double quality = 0.0;  // Q on the training comparison set
};

/// One user's examples for a tag: labeled items (positives +1, negatives −1)
/// and comparison pairs (positive ≻ negative).
struct UserExamples {
  UserId user = 0;
  std::vector<kernels::LabeledItem> labeled;
  std::vector<kernels::Pair> pairs;
};

/// Per-user example lists, ordered by user id.
using TagExamples = std::vector<UserExamples>;

/// Every positive plus `neg_ratio` negatives per positive drawn uniformly
/// without replacement from the user's T_{u,ḡ} (fewer when the pool is short);
/// pairs join each positive with its own sampled negatives.
/// Throws DataError when the tag has no positives.
TagExamples build_examples(const Dataset& dataset, TagId tag, int neg_ratio, Rng& rng);

/// All positives, all negatives and the full positive × negative pair set of
/// every user. Used for Q/accuracy evaluation.
TagExamples all_examples(const Dataset& dataset, TagId tag);

std::vector<kernels::LabeledItem> flatten_labeled(const TagExamples& examples);
std::vector<kernels::Pair> flatten_pairs(const TagExamples& examples);
std::size_t count_pairs(const TagExamples& examples);

struct OptimConfig {
  double learning_rate = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.999;
  int max_iters = 2000;
  double grad_tol = 1e-6;
};

/// Σ log(1+e^{−y ϕᵀx}) + (λ/2)‖ϕ‖².
kernels::LossGrad logistic_objective(const Mat& reprs, std::span<const kernels::LabeledItem> items,
                                     const Vec& direction, double lambda);
/// Σ log(1+e^{−ϕᵀ(x_i−x_j)}) + (λ/2)‖ϕ‖² over i ≻ j.
kernels::LossGrad ranknet_objective(const Mat& reprs, std::span<const kernels::Pair> pairs,
                                    const Vec& direction, double lambda);

/// LambdaRank pair weights at `direction`: each pair's weight multiplied by
/// |ΔNDCG| of swapping the two items in its user's list (binary gains, log₂
/// discounts, list = the user's pair items ordered by current score).
std::vector<kernels::Pair> lambdarank_pairs(const Mat& reprs, const TagExamples& examples,
                                            const Vec& direction);

/// Gradient descent with adaptive moments until ‖∇‖ < grad_tol or max_iters.
Vec minimize_adam(const std::function<kernels::LossGrad(const Vec&)>& objective, Vec x,
                  const OptimConfig& opt);

CAV train_cav_logistic(const TagExamples& examples, const Mat& reprs, double lambda,
                       const OptimConfig& opt = {});
CAV train_cav_ranknet(const TagExamples& examples, const Mat& reprs, double lambda,
                      const OptimConfig& opt = {});
CAV train_cav_lambdarank(const TagExamples& examples, const Mat& reprs, double lambda,
                         const OptimConfig& opt = {});
CAV train_cav(Trainer trainer, const TagExamples& examples, const Mat& reprs, double lambda,
              const OptimConfig& opt = {});

double cav_score(const CAV& cav, const Vec& repr);
double cav_cosine(const CAV& cav, const Vec& repr);
Vec cav_scores(const Vec& direction, const Mat& reprs);
Vec cosine_scores(const Vec& direction, const Mat& reprs);

/// Fraction of pairs with score(pos) ≥ score(neg). Throws DataError on zero pairs.
double cav_quality(const Vec& direction, const Mat& reprs, const TagExamples& examples);
double pair_quality(const Vec& scores, std::span<const kernels::Pair> pairs);

/// Fraction of labeled items with sign agreement (score ≥ 0 ↔ positive).
double classification_accuracy(const Vec& scores, std::span<const kernels::LabeledItem> items);

struct PersonalThreshold {
  UserId user = 0;
  TagId tag = 0;
  double tau = 0.0;
};

/// Threshold minimizing |{pos < τ}| + |{neg ≥ τ}|, placed at the midpoint of
/// the widest optimal gap between consecutive distinct scores. When every
/// optimum lies below the smallest score τ = min − 0.05·range (0.05 if the
/// range is 0); when it lies above the largest, τ = max + 0.05·range.
/// Throws DataError when there are no positives.
double fit_threshold(std::span<const double> positive_scores,
                     std::span<const double> negative_scores);
PersonalThreshold fit_personal_threshold(const CAV& cav, const TagView& view, const Mat& reprs);

struct SenseModel {
  TagId tag = 0;
  std::vector<CAV> senses;
  std::map<UserId, int> user_assignment;
  double avg_quality = 0.0;
};

struct EmConfig {
  Trainer trainer = Trainer::RankNet;
  double lambda = 1e-3;
  OptimConfig opt;
  int max_iters = 20;
  double eps = 0.01;
  int restarts = 1;
};

struct EmResult {
  SenseModel model;
  std::vector<double> quality_trace;  // avg_quality of every accepted partition
  int iterations = 0;
};

struct SenseAssignment {
  int sense = 0;
  bool flagged = false;  // no usable pairs; defaulted to sense 0
};

/// Sense whose CAV orders the most of `pairs` correctly; ties → lowest index.
SenseAssignment assign_user_sense(const SenseModel& model, std::span<const kernels::Pair> pairs,
                                  const Mat& reprs);
SenseAssignment assign_user_sense(const std::vector<Vec>& sense_scores,
                                  std::span<const kernels::Pair> pairs);

/// Hard-EM over users: `train` supplies training examples, `eval` the pairs
/// used for reassignment and avg_quality (both keyed by the same users).
EmResult em_sense_cavs(const TagExamples& train, const TagExamples& eval, const Mat& reprs,
                       TagId tag, int s, const EmConfig& config, Rng& rng);

struct SenseSelection {
  SenseModel model;
  std::vector<double> quality_by_s;  // entry k is avg_quality for s = k + 1
};

SenseSelection select_sense_count(const TagExamples& train, const TagExamples& eval,
                                  const Mat& reprs, TagId tag, int s_max, double eps,
                                  const EmConfig& config, std::uint64_t seed);

}  // namespace cavrec
