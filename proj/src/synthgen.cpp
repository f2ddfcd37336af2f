#include "cavrec/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace cavrec::synth {

void SynthConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("SynthConfig: " + what); };
  if (num_users < 1 || num_items < 1) fail("num_users and num_items must be positive");
  if (latent_dims < 0 || soft_dims < 1) fail("need latent_dims >= 0 and soft_dims >= 1");
  if (num_components < 1) fail("num_components must be positive");
  if (sigma < 0) fail("sigma must be non-negative");
  if (!(zipf_a > 1.0)) fail("zipf_a must exceed 1");
  if (max_ratings_per_user < 1) fail("max_ratings_per_user must be positive");
  if (no_tag_weight < 0 || no_tag_weight > 1) fail("no_tag_weight must lie in [0,1]");
  if (!(tag_prob_min > 0 && tag_prob_min <= tag_prob_max && tag_prob_max <= 1)) {
    fail("need 0 < tag_prob_min <= tag_prob_max <= 1");
  }
  if (tag_noise_std < 0 || rating_noise_std < 0) fail("noise std must be non-negative");
  if (!peak_floor.empty() && static_cast<int>(peak_floor.size()) != dims()) {
    fail("peak_floor must have one entry per attribute");
  }
  for (double f : peak_floor) {
    if (f < 0 || f > 1) fail("peak_floor entries must lie in [0,1]");
  }
  if (subjectivity == Subjectivity::Degree) {
    if (threshold_ranges.empty()) fail("degree subjectivity needs threshold ranges");
    for (auto [lo, hi] : threshold_ranges) {
      if (lo > hi) fail("threshold range lower bound exceeds upper bound");
    }
  }
  if (subjectivity == Subjectivity::Sense) {
    if (tag_groups.empty()) fail("sense subjectivity needs at least one tag group");
    std::set<int> seen;
    for (const auto& g : tag_groups) {
      if (g.size() < 2) fail("every sense group needs more than one attribute");
      for (int a : g) {
        if (a < 0 || a >= soft_dims) fail("sense group attribute out of range");
        if (!seen.insert(a).second) fail("sense groups must be disjoint");
      }
    }
  } else if (!tag_groups.empty()) {
    fail("tag_groups given without sense subjectivity");
  }
  if (irrelevant_tags < 0) fail("irrelevant_tags must be non-negative");
  if (irrelevant_tag_rate < 0 || irrelevant_tag_rate > 1) fail("irrelevant_tag_rate in [0,1]");
}

namespace {

// Tag semantics in a stable order, before vocabulary sorting.
std::vector<TagSemantics> tag_layout(const SynthConfig& config) {
  std::vector<TagSemantics> tags;
  std::set<int> grouped;
  if (config.subjectivity == Subjectivity::Sense) {
    for (std::size_t j = 0; j < config.tag_groups.size(); ++j) {
      TagSemantics t;
      t.name = config.tag_groups.size() == 1 ? "tag-S" : "tag-S" + std::to_string(j);
      t.kind = TagKind::Sense;
      t.group = static_cast<int>(j);
      for (int a : config.tag_groups[j]) {
        t.attributes.push_back(config.latent_dims + a);
        grouped.insert(a);
      }
      tags.push_back(t);
    }
  }
  for (int a = 0; a < config.soft_dims; ++a) {
    if (grouped.count(a)) continue;
    TagSemantics t;
    t.name = "tag-" + std::to_string(a);
    t.attributes = {config.latent_dims + a};
    tags.push_back(t);
  }
  for (int j = 0; j < config.irrelevant_tags; ++j) {
    TagSemantics t;
    t.name = config.irrelevant_tags == 1 ? "odd-year" : "odd-year-" + std::to_string(j);
    t.kind = TagKind::Irrelevant;
    t.irrelevant_index = j;
    tags.push_back(t);
  }
  std::sort(tags.begin(), tags.end(),
            [](const TagSemantics& a, const TagSemantics& b) { return a.name < b.name; });
  return tags;
}

double truncated_normal(double mean, double sd, Rng& rng) {
  if (sd == 0.0) return std::clamp(mean, 0.0, 1.0);
  std::normal_distribution<double> normal(mean, sd);
  for (int attempt = 0; attempt < 100; ++attempt) {
    double x = normal(rng);
    if (x >= 0.0 && x <= 1.0) return x;
  }
  return std::clamp(normal(rng), 0.0, 1.0);
}

std::vector<double> normalized_uniform_weights(int k, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<double> w(k);
  for (auto& x : w) x = unif(rng);
  double total = std::accumulate(w.begin(), w.end(), 0.0);
  if (total <= 0) std::fill(w.begin(), w.end(), 1.0 / k);
  else for (auto& x : w) x /= total;
  return w;
}

Mat sample_mixture(int rows, const Mat& means, double sigma, const std::vector<double>& weights,
                   Rng& rng) {
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  Mat out(rows, means.cols());
  for (int r = 0; r < rows; ++r) {
    int k = pick(rng);
    for (Eigen::Index c = 0; c < means.cols(); ++c) out(r, c) = truncated_normal(means(k, c), sigma, rng);
  }
  return out;
}

}  // namespace

int GroundTruth::user_tag_attribute(UserId u, TagId tag) const {
  const auto& t = tags.at(tag);
  switch (t.kind) {
    case TagKind::Objective: return t.attributes.front();
    case TagKind::Sense: return user_sense.at(u).at(t.group);
    case TagKind::Irrelevant: return -1;
  }
  return -1;
}

std::vector<std::string> tag_vocabulary(const SynthConfig& config) {
  std::vector<std::string> names;
  for (const auto& t : tag_layout(config)) names.push_back(t.name);
  return names;
}

GroundTruth sample_population(const SynthConfig& config, Rng& rng) {
  config.validate();
  const int n = config.num_users, m = config.num_items, D = config.dims();
  GroundTruth gt;
  gt.tags = tag_layout(config);

  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Mat means(config.num_components, D);
  for (Eigen::Index k = 0; k < means.rows(); ++k)
    for (int c = 0; c < D; ++c) means(k, c) = unif(rng);

  auto item_weights = normalized_uniform_weights(config.num_components, rng);
  gt.item_attrs = sample_mixture(m, means, config.sigma, item_weights, rng);
  gt.item_popularity.resize(m);
  for (int i = 0; i < m; ++i) gt.item_popularity[i] = unif(rng);

  auto user_mix = normalized_uniform_weights(config.num_components, rng);
  gt.user_weights = sample_mixture(n, means, config.sigma, user_mix, rng);

  const int J = config.subjectivity == Subjectivity::Sense
                    ? static_cast<int>(config.tag_groups.size()) : 0;
  gt.user_sense.assign(n, std::vector<int>(J, -1));
  for (int u = 0; u < n; ++u) {
    for (int j = 0; j < J; ++j) {
      const auto& group = config.tag_groups[j];
      std::uniform_int_distribution<std::size_t> pick(0, group.size() - 1);
      int chosen = config.latent_dims + group[pick(rng)];
      gt.user_sense[u][j] = chosen;
      for (int a : group) {
        if (config.latent_dims + a != chosen) gt.user_weights(u, config.latent_dims + a) = 0.0;
      }
    }
  }

  gt.user_peaks = Mat::Zero(n, D);
  if (config.utility == UtilityKind::SinglePeaked) {
    std::vector<double> floor(D, 0.5);
    if (!config.peak_floor.empty()) {
      floor = config.peak_floor;
    } else {
      for (const auto& g : config.tag_groups)
        for (int a : g) floor[config.latent_dims + a] = 0.3;
    }
    for (int u = 0; u < n; ++u)
      for (int a = 0; a < D; ++a)
        gt.user_peaks(u, a) = std::uniform_real_distribution<double>(floor[a], 1.0)(rng);
  }

  gt.user_tag_prob.resize(n);
  std::bernoulli_distribution silent(config.no_tag_weight);
  std::uniform_real_distribution<double> tag_prob(config.tag_prob_min, config.tag_prob_max);
  for (int u = 0; u < n; ++u) gt.user_tag_prob[u] = silent(rng) ? 0.0 : tag_prob(rng);

  const int k = static_cast<int>(gt.tags.size());
  gt.user_tag_thresholds = Mat::Constant(n, k, config.tag_threshold);
  if (config.subjectivity == Subjectivity::Degree) {
    std::uniform_int_distribution<std::size_t> comp(0, config.threshold_ranges.size() - 1);
    for (int u = 0; u < n; ++u) {
      for (int g = 0; g < k; ++g) {
        if (gt.tags[g].kind == TagKind::Irrelevant) continue;
        auto [lo, hi] = config.threshold_ranges[comp(rng)];
        gt.user_tag_thresholds(u, g) = std::uniform_real_distribution<double>(lo, hi)(rng);
      }
    }
  }

  gt.item_flags.assign(config.irrelevant_tags, std::vector<std::uint8_t>(m, 0));
  std::bernoulli_distribution coin(0.5);
  for (auto& flags : gt.item_flags)
    for (auto& f : flags) f = coin(rng) ? 1 : 0;
  return gt;
}

double item_utility(const GroundTruth& gt, const SynthConfig& config, UserId user, ItemId item) {
  auto w = gt.user_weights.row(user);
  auto v = gt.item_attrs.row(item);
  if (config.utility == UtilityKind::Linear) return w.dot(v);
  double total = 0.0;
  for (Eigen::Index a = 0; a < w.size(); ++a) {
    double p = gt.user_peaks(user, a);
    total += p - std::abs(w[a] * v[a] - p);
  }
  return total;
}

ZipfSampler::ZipfSampler(double a, int max_value) {
  if (!(a > 1.0) || max_value < 1) throw ConfigError("ZipfSampler: need a > 1 and max >= 1");
  cdf_.resize(max_value);
  double acc = 0.0;
  for (int k = 1; k <= max_value; ++k) {
    acc += std::pow(static_cast<double>(k), -a);
    cdf_[k - 1] = acc;
  }
  for (auto& c : cdf_) c /= acc;
}

int ZipfSampler::operator()(Rng& rng) const {
  double x = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  auto it = std::lower_bound(cdf_.begin(), cdf_.end(), x);
  if (it == cdf_.end()) --it;
  return static_cast<int>(it - cdf_.begin()) + 1;
}

double ZipfSampler::mean() const {
  double m = 0.0, prev = 0.0;
  for (std::size_t k = 0; k < cdf_.size(); ++k) {
    m += static_cast<double>(k + 1) * (cdf_[k] - prev);
    prev = cdf_[k];
  }
  return m;
}

std::vector<Rating> generate_ratings(const GroundTruth& gt, const SynthConfig& config, Rng& rng) {
  const int n = static_cast<int>(gt.user_weights.rows());
  const int m = static_cast<int>(gt.item_attrs.rows());
  ZipfSampler zipf(config.zipf_a, config.max_ratings_per_user);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, config.rating_noise_std);

  std::vector<Rating> ratings;
  std::vector<std::pair<double, ItemId>> keys(m);
  std::vector<double> utility(m);
  for (int u = 0; u < n; ++u) {
    const int count = std::min(zipf(rng), m);
    // Gumbel top-k draws exactly a softmax sample without replacement.
    for (int i = 0; i < m; ++i) {
      utility[i] = item_utility(gt, config, u, i);
      double g = -std::log(-std::log(std::max(unif(rng), 1e-300)));
      keys[i] = {config.softmax_temp * (utility[i] + gt.item_popularity[i]) + g, i};
    }
    std::partial_sort(keys.begin(), keys.begin() + count, keys.end(),
                      [](const auto& a, const auto& b) {
                        return a.first > b.first || (a.first == b.first && a.second < b.second);
                      });
    std::vector<ItemId> rated(count);
    for (int k = 0; k < count; ++k) rated[k] = keys[k].second;
    std::sort(rated.begin(), rated.end());

    std::vector<double> score(count);
    for (int k = 0; k < count; ++k) {
      double eps = config.rating_noise_std > 0 ? noise(rng) : 0.0;
      score[k] = utility[rated[k]] + eps;
    }
    auto [lo_it, hi_it] = std::minmax_element(score.begin(), score.end());
    const double lo = *lo_it, hi = *hi_it;
    for (int k = 0; k < count; ++k) {
      double value = 5.0;
      if (hi > lo) {
        int bucket = static_cast<int>(std::floor(5.0 * (score[k] - lo) / (hi - lo)));
        value = 1.0 + std::clamp(bucket, 0, 4);
      }
      ratings.push_back({u, rated[k], value});
    }
  }
  return ratings;
}

std::vector<TagTriple> generate_tags(const GroundTruth& gt, const SynthConfig& config,
                                     const std::vector<Rating>& ratings, Rng& rng) {
  std::normal_distribution<double> noise(0.0, config.tag_noise_std);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int k = static_cast<int>(gt.tags.size());
  std::vector<TagTriple> triples;
  for (const auto& r : ratings) {
    const double pt = gt.user_tag_prob[r.user];
    if (pt <= 0.0) continue;
    if (unif(rng) >= pt) continue;  // not in Tagged_u
    for (TagId g = 0; g < k; ++g) {
      const auto& sem = gt.tags[g];
      bool applies = false;
      if (sem.kind == TagKind::Irrelevant) {
        bool sampled = unif(rng) < config.irrelevant_tag_rate;
        applies = sampled && gt.item_flags[sem.irrelevant_index][r.item];
      } else {
        int attr = gt.user_tag_attribute(r.user, g);
        double eps = config.tag_noise_std > 0 ? noise(rng) : 0.0;
        applies = gt.item_attrs(r.item, attr) >= gt.user_tag_thresholds(r.user, g) + eps;
      }
      if (applies) triples.push_back({r.user, r.item, g});
    }
  }
  return triples;
}

SynthData generate(const SynthConfig& config) {
  config.validate();
  Rng population_rng = derive_rng(config.seed, {1});
  Rng rating_rng = derive_rng(config.seed, {2});
  Rng tag_rng = derive_rng(config.seed, {3});
  SynthData out;
  out.truth = sample_population(config, population_rng);
  auto ratings = generate_ratings(out.truth, config, rating_rng);
  auto tags = generate_tags(out.truth, config, ratings, tag_rng);
  out.data = Dataset(config.num_users, config.num_items, std::move(ratings), std::move(tags),
                     tag_vocabulary(config));
  return out;
}

}  // namespace cavrec::synth
