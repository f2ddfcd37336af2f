#include <cmath>
#include <limits>

#include "doctest.h"
#include "test_util.hpp"

#include "cavrec/cavlearn.hpp"

using namespace cavrec;
using kernels::LabeledItem;
using kernels::Pair;

namespace {

template <typename F>
void check_gradient(F objective, const Vec& at) {
  auto lg = objective(at);
  const double h = 1e-6;
  for (Eigen::Index k = 0; k < at.size(); ++k) {
    Vec up = at, down = at;
    up[k] += h;
    down[k] -= h;
    double numeric = (objective(up).loss - objective(down).loss) / (2 * h);
    CHECK(std::abs(numeric - lg.grad[k]) <= 1e-5 * std::max(1.0, std::abs(numeric)));
  }
}

// Items on a line: x_i = (i, 1). Positives are the top items.
Mat line_items(int m) {
  Mat x(m, 2);
  for (int i = 0; i < m; ++i) x.row(i) << i - m / 2.0, 1.0;
  return x;
}

TagExamples separable_examples() {
  UserExamples ex;
  ex.user = 0;
  for (int i = 6; i < 10; ++i) ex.labeled.push_back({i, +1});
  for (int j = 0; j < 4; ++j) ex.labeled.push_back({j, -1});
  for (int i = 6; i < 10; ++i)
    for (int j = 0; j < 4; ++j) ex.pairs.push_back({i, j});
  return {ex};
}

// Brute force over every candidate threshold.
long threshold_errors(const std::vector<double>& pos, const std::vector<double>& neg, double tau) {
  long e = 0;
  for (double s : pos) e += s < tau;
  for (double s : neg) e += s >= tau;
  return e;
}

double dcg_at(const std::vector<int>& ranked, const std::vector<int>& positives) {
  double g = 0;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    if (std::find(positives.begin(), positives.end(), ranked[r]) != positives.end()) {
      g += 1.0 / std::log2(r + 2.0);
    }
  }
  return g;
}

}  // namespace

TEST_CASE("objective gradients match finite differences") {
  Rng rng(1);
  Mat reprs = testutil::random_matrix(rng, 30, 4);
  std::vector<LabeledItem> items;
  std::vector<Pair> pairs;
  for (int i = 0; i < 30; ++i) items.push_back({i, i % 2 ? 1 : -1, 1.0});
  for (int i = 0; i < 20; ++i) pairs.push_back({i, (i * 7 + 3) % 30, 1.0 + 0.1 * i});
  Vec at = testutil::random_vector(rng, 4);
  check_gradient([&](const Vec& w) { return logistic_objective(reprs, items, w, 0.3); }, at);
  check_gradient([&](const Vec& w) { return ranknet_objective(reprs, pairs, w, 0.3); }, at);

  TagExamples ex{{0, {}, pairs}};
  auto frozen = lambdarank_pairs(reprs, ex, at);
  check_gradient([&](const Vec& w) { return ranknet_objective(reprs, frozen, w, 0.3); }, at);
}

TEST_CASE("objectives at the origin equal count times log 2") {
  Rng rng(2);
  Mat reprs = testutil::random_matrix(rng, 10, 3);
  std::vector<LabeledItem> items{{0, 1}, {1, -1}, {2, 1}};
  std::vector<Pair> pairs{{0, 1}, {2, 3}, {4, 5}, {6, 7}};
  CHECK(logistic_objective(reprs, items, Vec::Zero(3), 1.0).loss == doctest::Approx(3 * std::log(2.0)));
  CHECK(ranknet_objective(reprs, pairs, Vec::Zero(3), 1.0).loss == doctest::Approx(4 * std::log(2.0)));
}

TEST_CASE("ranknet pushes positives above negatives") {
  Mat reprs(2, 1);
  reprs << 1.0, -1.0;
  std::vector<Pair> pairs{{0, 1}};
  auto lg = ranknet_objective(reprs, pairs, Vec::Zero(1), 0.0);
  CHECK(lg.grad[0] < 0.0);
}

TEST_CASE("separable data is learned perfectly") {
  Mat reprs = line_items(10);
  auto ex = separable_examples();
  for (Trainer t : {Trainer::Logistic, Trainer::RankNet, Trainer::LambdaRank}) {
    CAPTURE(to_string(t));
    CAV cav = train_cav(t, ex, reprs, 1e-3);
    CHECK(cav.quality == 1.0);
    CHECK(cav.trainer == t);
    if (t == Trainer::Logistic) {
      Vec s = cav_scores(cav.direction, reprs);
      CHECK(classification_accuracy(s, ex[0].labeled) == 1.0);
    }
  }
  CAV tight = train_cav(Trainer::RankNet, ex, reprs, 1e6);
  CHECK(tight.direction.norm() < 1e-3);
}

TEST_CASE("trainers reject degenerate input") {
  Mat reprs = line_items(4);
  TagExamples only_pos{{0, {{1, +1}, {2, +1}}, {}}};
  CHECK_THROWS_AS(train_cav_logistic(only_pos, reprs, 1.0), DataError);
  CHECK_THROWS_AS(train_cav_ranknet(only_pos, reprs, 1.0), DataError);
  CHECK_THROWS_AS(train_cav_lambdarank(only_pos, reprs, 1.0), DataError);
  CHECK_THROWS_AS(trainer_from_string("svm"), ConfigError);
  CHECK(trainer_from_string("logregr") == Trainer::Logistic);
}

TEST_CASE("lambdarank weights equal the NDCG change of a swap") {
  Mat reprs(4, 1);
  reprs << 3.0, 2.0, 1.0, 0.0;
  // Ranking by score: 0, 1, 2, 3. Positives 1 and 3.
  TagExamples ex{{0, {}, {{1, 0}, {1, 2}, {3, 0}, {3, 2}}}};
  auto w = lambdarank_pairs(reprs, ex, Vec::Ones(1));
  REQUIRE(w.size() == 4);
  const std::vector<int> positives{1, 3};
  const std::vector<int> base{0, 1, 2, 3};
  const double ideal = dcg_at({1, 3, 0, 2}, positives);
  for (std::size_t k = 0; k < 4; ++k) {
    auto swapped = base;
    std::iter_swap(std::find(swapped.begin(), swapped.end(), w[k].pos),
                   std::find(swapped.begin(), swapped.end(), w[k].neg));
    double delta = std::abs(dcg_at(swapped, positives) - dcg_at(base, positives)) / ideal;
    CHECK(w[k].weight == doctest::Approx(delta));
  }
}

TEST_CASE("quality hand cases") {
  Vec scores(4);
  scores << 4, 3, 2, 1;
  std::vector<Pair> good{{0, 1}, {1, 2}}, bad{{3, 0}, {2, 1}};
  std::vector<Pair> mixed{{0, 1}, {0, 2}, {1, 2}, {3, 2}};
  CHECK(pair_quality(scores, good) == 1.0);
  CHECK(pair_quality(scores, bad) == 0.0);
  CHECK(pair_quality(scores, mixed) == 0.75);
  Vec tied = Vec::Ones(4);
  CHECK(pair_quality(tied, bad) == 1.0);
  CHECK_THROWS_AS(pair_quality(scores, std::vector<Pair>{}), DataError);
}

TEST_CASE("quality of a direction and its negation covers every pair") {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    Mat reprs = testutil::random_matrix(rng, 20, 3);
    Vec dir = testutil::random_vector(rng, 3);
    std::vector<Pair> pairs;
    std::uniform_int_distribution<int> item(0, 19);
    for (int k = 0; k < 25; ++k) pairs.push_back({item(rng), item(rng)});
    TagExamples ex{{0, {}, pairs}};
    CHECK(cav_quality(dir, reprs, ex) + cav_quality(-dir, reprs, ex) >= 1.0);
  }
}

TEST_CASE("threshold hand cases") {
  std::vector<double> pos{1.0, 2.0}, neg{-1.0, 0.0};
  CHECK(fit_threshold(pos, neg) == doctest::Approx(0.5));
  std::vector<double> only{1.0, 2.0, 3.0};
  CHECK(fit_threshold(only, {}) == doctest::Approx(0.9));
  std::vector<double> single{2.0};
  CHECK(fit_threshold(single, {}) == doctest::Approx(1.95));
  std::vector<double> p2{5.0, 6.0}, n2{0.0, 0.5, 4.0};
  CHECK(fit_threshold(p2, n2) == doctest::Approx(4.5));
  // One error in the 0..1 gap and in the 2..5 gap: the wider one wins.
  std::vector<double> p3{1.0, 5.0, 6.0}, n3{0.0, 2.0};
  CHECK(fit_threshold(p3, n3) == doctest::Approx(3.5));
  CHECK_THROWS_AS(fit_threshold({}, neg), DataError);
}

TEST_CASE("threshold minimizes errors and takes the widest optimal gap") {
  Rng rng(4);
  std::uniform_int_distribution<int> size(1, 10), grid(0, 12);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> pos(size(rng)), neg(std::uniform_int_distribution<int>(0, 10)(rng));
    for (auto& s : pos) s = grid(rng) * 0.5;
    for (auto& s : neg) s = grid(rng) * 0.5;
    double tau = fit_threshold(pos, neg);

    std::vector<double> all(pos);
    all.insert(all.end(), neg.begin(), neg.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    long best = std::min(threshold_errors(pos, neg, all.front() - 1), threshold_errors(pos, neg, all.back() + 1));
    double widest = -1;
    long best_bounded = std::numeric_limits<long>::max();
    for (std::size_t k = 0; k + 1 < all.size(); ++k) {
      long e = threshold_errors(pos, neg, 0.5 * (all[k] + all[k + 1]));
      if (e < best_bounded || (e == best_bounded && all[k + 1] - all[k] > widest)) {
        best_bounded = e;
        widest = all[k + 1] - all[k];
      }
    }
    best = std::min(best, best_bounded);
    CAPTURE(trial);
    CHECK(threshold_errors(pos, neg, tau) == best);
    if (best_bounded == best && widest > 0) {
      auto hi = std::lower_bound(all.begin(), all.end(), tau);
      REQUIRE(hi != all.begin());
      REQUIRE(hi != all.end());
      CHECK(*hi - *(hi - 1) == doctest::Approx(widest));
      CHECK(tau == doctest::Approx(0.5 * (*hi + *(hi - 1))));
    }
  }
}

TEST_CASE("example construction") {
  // u0 tags items 0, 1 with g and item 2 with h; u1 tags item 3 with g only.
  Dataset d(2, 6, {{0, 0, 4}, {0, 1, 4}, {0, 2, 3}, {0, 4, 2}, {1, 3, 5}},
            {{0, 0, 0}, {0, 1, 0}, {0, 2, 1}, {0, 4, 1}, {1, 3, 0}}, {"g", "h"});
  auto all = all_examples(d, 0);
  REQUIRE(all.size() == 2);
  CHECK(all[0].pairs.size() == 4);
  CHECK(all[0].labeled.size() == 4);
  CHECK(all[1].pairs.empty());
  CHECK(count_pairs(all) == 4);

  Rng rng(5);
  auto one = build_examples(d, 0, 1, rng);
  REQUIRE(one.size() == 2);
  CHECK(one[0].pairs.size() == 2);
  CHECK(one[0].labeled.size() == 4);
  auto many = build_examples(d, 0, 5, rng);
  CHECK(many[0].pairs.size() == 4);
  for (const auto& p : many[0].pairs) CHECK((p.neg == 2 || p.neg == 4));
  for (const auto& p : many[0].pairs) CHECK((p.pos == 0 || p.pos == 1));

  Dataset none(1, 2, {{0, 0, 3}}, {}, {"g"});
  CHECK_THROWS_AS(build_examples(none, 0, 1, rng), DataError);
  CHECK_THROWS_AS(build_examples(d, 0, 0, rng), ConfigError);
}

TEST_CASE("sampled negatives are distinct within each positive") {
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    Dataset d = testutil::random_dataset(rng, 6, 30, 2, 0.8, 0.7);
    for (TagId g = 0; g < d.num_tags(); ++g) {
      TagExamples ex;
      try {
        ex = build_examples(d, g, 3, rng);
      } catch (const DataError&) {
        continue;
      }
      for (const auto& u : ex) {
        auto view = tag_view(d, u.user, g);
        const std::size_t per = std::min<std::size_t>(3, view.negatives.size());
        CHECK(u.pairs.size() == per * view.positives.size());
        for (std::size_t k = 0; k < u.pairs.size(); k += std::max<std::size_t>(per, 1)) {
          std::set<int> negs;
          for (std::size_t j = k; j < k + per; ++j) negs.insert(u.pairs[j].neg);
          CHECK(negs.size() == per);
        }
      }
    }
  }
}

namespace {

// Two user populations that rank items along different axes.
struct TwoPopulations {
  Mat reprs;
  TagExamples examples;
  std::vector<int> truth;
};

TwoPopulations two_populations(Rng& rng, int users, int pairs_per_user) {
  TwoPopulations out;
  out.reprs = testutil::random_matrix(rng, 200, 2);
  std::uniform_int_distribution<int> item(0, 199);
  for (int u = 0; u < users; ++u) {
    const int axis = u % 2;
    UserExamples ex;
    ex.user = u;
    while (static_cast<int>(ex.pairs.size()) < pairs_per_user) {
      int a = item(rng), b = item(rng);
      double gap = out.reprs(a, axis) - out.reprs(b, axis);
      if (std::abs(gap) < 0.3) continue;
      if (gap < 0) std::swap(a, b);
      ex.pairs.push_back({a, b});
      ex.labeled.push_back({a, +1});
      ex.labeled.push_back({b, -1});
    }
    out.examples.push_back(std::move(ex));
    out.truth.push_back(axis);
  }
  return out;
}

}  // namespace

TEST_CASE("one sense reproduces the plain trainer") {
  Rng rng(7);
  auto pop = two_populations(rng, 20, 10);
  EmConfig cfg;
  cfg.lambda = 0.1;
  auto res = em_sense_cavs(pop.examples, pop.examples, pop.reprs, 0, 1, cfg, rng);
  CAV plain = train_cav_ranknet(pop.examples, pop.reprs, 0.1);
  REQUIRE(res.model.senses.size() == 1);
  CHECK((res.model.senses[0].direction - plain.direction).norm() == 0.0);
  CHECK(res.model.avg_quality == doctest::Approx(plain.quality));
}

TEST_CASE("hard EM separates two populations") {
  Rng rng(8);
  auto pop = two_populations(rng, 60, 30);
  EmConfig cfg;
  cfg.lambda = 0.1;
  cfg.restarts = 3;
  auto res = em_sense_cavs(pop.examples, pop.examples, pop.reprs, 0, 2, cfg, rng);
  int agree = 0;
  for (std::size_t u = 0; u < pop.truth.size(); ++u) {
    agree += res.model.user_assignment.at(static_cast<UserId>(u)) == pop.truth[u];
  }
  const double match = std::max(agree, 60 - agree) / 60.0;
  CHECK(match >= 0.9);
  CHECK(res.model.avg_quality > 0.9);

  for (std::size_t k = 1; k < res.quality_trace.size(); ++k) {
    CHECK(res.quality_trace[k] > res.quality_trace[k - 1]);
  }

  auto sel = select_sense_count(pop.examples, pop.examples, pop.reprs, 0, 4, 0.02, cfg, 9);
  CHECK(sel.model.senses.size() == 2);
  CHECK(sel.quality_by_s.size() == 3);
}

TEST_CASE("sense assignment counts ordered pairs with ties to the lowest index") {
  Vec a(3), b(3);
  a << 1, 2, 3;
  b << 3, 2, 1;
  std::vector<Pair> pairs{{0, 2}, {1, 2}};
  auto s = assign_user_sense({a, b}, pairs);
  CHECK(s.sense == 1);
  CHECK(!s.flagged);
  std::vector<Pair> tie{{0, 2}, {2, 0}};
  CHECK(assign_user_sense({a, b}, tie).sense == 0);
  auto empty = assign_user_sense({a, b}, std::vector<Pair>{});
  CHECK(empty.sense == 0);
  CHECK(empty.flagged);
}
