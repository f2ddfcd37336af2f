#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cavrec/core.hpp"
#include "cavrec/rng.hpp"

namespace cavrec::synth {

enum class UtilityKind { Linear, SinglePeaked };
enum class Subjectivity { None, Degree, Sense };

/// Knobs of the synthetic ratings/tag generator. Attribute vectors have
/// D = latent_dims + soft_dims coordinates; soft attributes occupy the last
/// soft_dims coordinates and are the only taggable ones.
struct SynthConfig {
  int num_users = 2000;
  int num_items = 1000;
  int latent_dims = 11;
  int soft_dims = 5;
  int num_components = 100;
  double sigma = 0.5;
  double zipf_a = 1.05;
  int max_ratings_per_user = 1000;
  double softmax_temp = 1.0;
  double no_tag_weight = 0.8;  // Dirac mass at PT_u = 0
  double tag_prob_min = 0.1;
  double tag_prob_max = 0.5;
  double tag_threshold = 0.5;
  double tag_noise_std = 0.01;
  double rating_noise_std = 0.01;
  UtilityKind utility = UtilityKind::Linear;
  /// Per-attribute lower bound L_a of the peak distribution U(L_a, 1).
  /// Empty → 0.3 for sense-group attributes, 0.5 otherwise.
  std::vector<double> peak_floor;
  Subjectivity subjectivity = Subjectivity::None;
  /// Degree subjectivity: mixture of uniform threshold ranges, one component
  /// picked uniformly per (user, tag).
  std::vector<std::pair<double, double>> threshold_ranges{{0.5, 0.7}};
  /// Sense subjectivity: groups of soft-attribute indices (0-based within the
  /// soft block). Each group becomes one tag whose senses are its members.
  std::vector<std::vector<int>> tag_groups;
  /// Preference-independent tags: a random item bit, applied to a fraction of
  /// tagged user-item pairs where the bit is set.
  int irrelevant_tags = 0;
  double irrelevant_tag_rate = 0.5;
  std::uint64_t seed = 1;

  int dims() const { return latent_dims + soft_dims; }
  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
};

enum class TagKind { Objective, Sense, Irrelevant };

struct TagSemantics {
  std::string name;
  TagKind kind = TagKind::Objective;
  std::vector<int> attributes;  // absolute attribute indices; one per sense
  int group = -1;               // sense group index, Sense tags only
  int irrelevant_index = -1;    // row of GroundTruth::item_flags, Irrelevant tags only
};

struct GroundTruth {
  Mat item_attrs;          // m × D, entries in [0,1]
  Vec item_popularity;     // m, b_i
  Mat user_weights;        // n × D, entries in [0,1]
  Mat user_peaks;          // n × D (single-peaked only; zero otherwise)
  Mat user_tag_thresholds; // n × k
  std::vector<std::vector<int>> user_sense;  // n × J, absolute attribute index
  Vec user_tag_prob;       // n, PT_u
  std::vector<TagSemantics> tags;            // indexed by TagId
  std::vector<std::vector<std::uint8_t>> item_flags;  // per irrelevant tag, m bits

  /// Attribute the user consults when deciding on `tag` (-1 for irrelevant tags).
  int user_tag_attribute(UserId u, TagId tag) const;
};

struct SynthData {
  GroundTruth truth;
  Dataset data;
};

GroundTruth sample_population(const SynthConfig& config, Rng& rng);

double item_utility(const GroundTruth& gt, const SynthConfig& config, UserId user, ItemId item);

/// Sparse ratings; one entry per (user, rated item).
std::vector<Rating> generate_ratings(const GroundTruth& gt, const SynthConfig& config, Rng& rng);

std::vector<TagTriple> generate_tags(const GroundTruth& gt, const SynthConfig& config,
                                     const std::vector<Rating>& ratings, Rng& rng);

/// Runs the three stages on independent streams derived from config.seed.
SynthData generate(const SynthConfig& config);

/// Tag vocabulary (sorted) implied by the configuration.
std::vector<std::string> tag_vocabulary(const SynthConfig& config);

/// Inverse-CDF sampler over the truncated zeta support [1, max_value].
class ZipfSampler {
 public:
  ZipfSampler(double a, int max_value);
  int operator()(Rng& rng) const;
  double mean() const;

 private:
  std::vector<double> cdf_;
};

}  // namespace cavrec::synth
