#pragma once

#include <map>
#include <string>
#include <vector>

#include "cavrec/cavlearn.hpp"
#include "cavrec/core.hpp"

namespace cavrec {

/// One rater's three-way split of 11 movies around an anchor for one attribute.
struct RaterAssessment {
  std::string rater;
  std::string attribute;
  ItemId anchor = -1;
  std::vector<ItemId> less;
  std::vector<ItemId> same;  // includes the anchor
  std::vector<ItemId> more;
};

/// Ordered comparisons (first has more of the attribute than second).
struct ComparisonSet {
  std::string rater;
  std::string attribute;
  std::vector<kernels::Pair> strong;       // more ≻ less
  std::vector<kernels::Pair> weak;         // more ≻ same, same ≻ less
  std::vector<kernels::Pair> indifferent;  // within one class
};

/// Throws DataError when the classes overlap.
ComparisonSet comparisons_from_assessment(const RaterAssessment& a);

struct GammaCounts {
  double same = 0.0;           // N_s: weak pairs ordered as the rater did
  double strong_same = 0.0;    // N_ss
  double diff = 0.0;           // N_d
  double strong_diff = 0.0;    // N_dd

  GammaCounts& operator+=(const GammaCounts& o);
  /// Throws DataError when no strong or weak pair was counted.
  double value() const;
};

/// Pair counts under `scores`; tied scores count half agreement, half disagreement.
GammaCounts gamma_counts(const Vec& scores, const ComparisonSet& comparisons);

/// G′ of a single direction over one comparison set, scored by cosine similarity.
double gamma_rank_correlation(const Vec& direction, const ComparisonSet& comparisons,
                              const Mat& reprs);

/// Spearman ρ with average ranks for ties. Throws DataError on constant input
/// or fewer than two values.
double spearman(const Vec& a, const Vec& b);
double spearman_vs_ground_truth(const Vec& direction, const Mat& reprs, const Vec& truth);

/// Logistic CAVs: sign accuracy on labeled items; ranking CAVs: Q on pairs.
double tag_accuracy(Trainer trainer, const Vec& direction, const Mat& reprs,
                    const TagExamples& test);

struct RaterEvalConfig {
  Trainer trainer = Trainer::RankNet;
  double lambda = 1e-3;
  OptimConfig opt;
  bool senses = false;  // EM sense CAVs with automatic sense count
  int s_max = 10;
  double sense_eps = 0.02;
  EmConfig em;
  double strong_weight = 2.0;
  double weak_weight = 1.0;
};

struct RaterEvalResult {
  std::map<std::string, double> per_attribute;  // mean G′ over folds that scored it
  double aggregate = 0.0;                       // mean over folds of count-pooled G′
  std::vector<double> fold_aggregate;
  std::vector<std::string> skipped;             // "fold:attribute" without training pairs
};

/// Training examples for one attribute from a set of assessments; each rater
/// becomes one pseudo-user (id = position in `raters`).
TagExamples rater_examples(const std::vector<const RaterAssessment*>& assessments,
                           const std::vector<std::string>& raters, double strong_weight,
                           double weak_weight);

/// Scores held-out comparison sets against a trained direction or sense
/// model (raters mapped to senses on their own strong and weak pairs).
GammaCounts score_comparisons(const std::vector<ComparisonSet>& sets, const SenseModel& model,
                              const Mat& reprs);

RaterEvalResult kfold_rater_eval(const std::vector<RaterAssessment>& assessments,
                                 const Mat& reprs, int k, const RaterEvalConfig& config,
                                 std::uint64_t seed);

}  // namespace cavrec
