#include <omp.h>

#include "doctest.h"
#include "test_util.hpp"

#include "cavrec/kernels.hpp"

using namespace cavrec;
using namespace cavrec::kernels;

namespace {

std::vector<Pair> random_pairs(Rng& rng, int m, std::size_t count) {
  std::uniform_int_distribution<int> item(0, m - 1);
  std::uniform_real_distribution<double> w(0.5, 2.0);
  std::vector<Pair> out;
  while (out.size() < count) {
    int a = item(rng), b = item(rng);
    if (a != b) out.push_back({a, b, w(rng)});
  }
  return out;
}

SparseRows random_rows(Rng& rng, int rows, int cols) {
  SparseRows s;
  s.num_rows = rows;
  s.offsets.push_back(0);
  std::bernoulli_distribution keep(0.3);
  std::uniform_real_distribution<double> val(1, 5), conf(0.5, 1.5);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (!keep(rng)) continue;
      s.cols.push_back(c);
      s.values.push_back(val(rng));
      s.weights.push_back(conf(rng));
    }
    s.offsets.push_back(s.cols.size());
  }
  return s;
}

}  // namespace

TEST_CASE("parallel kernels match their serial twins for every thread count") {
  Rng rng(11);
  const int m = 3000, d = 8;
  Mat reprs = testutil::random_matrix(rng, m, d);
  Vec dir = testutil::random_vector(rng, d);
  auto pairs = random_pairs(rng, m, 9000);
  std::vector<LabeledItem> labeled;
  for (int i = 0; i < m; ++i) labeled.push_back({i, (i % 3 == 0) ? 1 : -1, 1.0 + (i % 5) * 0.1});

  const auto ref_scores = serial::score_items(reprs, dir);
  const auto ref_pair = serial::pair_logistic(reprs, pairs, dir);
  const auto ref_lab = serial::labeled_logistic(reprs, labeled, dir);
  const auto ref_count = serial::count_ordered({ref_scores.data(), static_cast<std::size_t>(ref_scores.size())}, pairs);

  auto close = [](const Vec& a, const Vec& b) {
    return (a - b).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, b.cwiseAbs().maxCoeff());
  };

  // Serial sums run in one sequence, parallel sums block by block: equal up
  // to rounding. Across thread counts the parallel results are bit-identical.
  omp_set_num_threads(1);
  const Vec s1 = score_items(reprs, dir);
  const auto pl1 = pair_logistic(reprs, pairs, dir);
  const auto ll1 = labeled_logistic(reprs, labeled, dir);
  CHECK(close(s1, ref_scores));
  CHECK(testutil::rel_err(pl1.loss, ref_pair.loss) < 1e-12);
  CHECK(close(pl1.grad, ref_pair.grad));
  CHECK(testutil::rel_err(ll1.loss, ref_lab.loss) < 1e-12);
  CHECK(close(ll1.grad, ref_lab.grad));

  for (int threads : {2, 3, 4}) {
    omp_set_num_threads(threads);
    CAPTURE(threads);
    Vec s = score_items(reprs, dir);
    CHECK((s - s1).cwiseAbs().maxCoeff() == 0.0);
    auto pl = pair_logistic(reprs, pairs, dir);
    CHECK(pl.loss == pl1.loss);
    CHECK((pl.grad - pl1.grad).cwiseAbs().maxCoeff() == 0.0);
    auto ll = labeled_logistic(reprs, labeled, dir);
    CHECK(ll.loss == ll1.loss);
    CHECK((ll.grad - ll1.grad).cwiseAbs().maxCoeff() == 0.0);
    CHECK(count_ordered({s.data(), static_cast<std::size_t>(s.size())}, pairs) ==
          ref_count);
  }
  omp_set_num_threads(1);
}

TEST_CASE("row solves and weighted error match the serial reference") {
  Rng rng(5);
  SparseRows rows = random_rows(rng, 200, 150);
  Mat fixed = testutil::random_matrix(rng, 150, 6, 0.3);
  Mat a = Mat::Zero(200, 6), b = Mat::Zero(200, 6);
  serial::solve_rows(rows, fixed, 0.5, a);
  const double ref_err = serial::weighted_sq_error(rows, a, fixed);
  for (int threads : {1, 3}) {
    omp_set_num_threads(threads);
    b.setZero();
    solve_rows(rows, fixed, 0.5, b);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(testutil::rel_err(weighted_sq_error(rows, a, fixed), ref_err) < 1e-12);
  }
  omp_set_num_threads(1);
}

TEST_CASE("row solve satisfies the normal equations") {
  Rng rng(9);
  SparseRows rows = random_rows(rng, 20, 30);
  Mat fixed = testutil::random_matrix(rng, 30, 4);
  Mat t = Mat::Zero(20, 4);
  solve_rows(rows, fixed, 0.1, t);
  for (int r = 0; r < rows.num_rows; ++r) {
    Eigen::MatrixXd A = 0.1 * Eigen::MatrixXd::Identity(4, 4);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(4);
    for (auto k = rows.offsets[r]; k < rows.offsets[r + 1]; ++k) {
      Eigen::VectorXd f = fixed.row(rows.cols[k]).transpose();
      A += rows.weights[k] * f * f.transpose();
      rhs += rows.weights[k] * rows.values[k] * f;
    }
    Eigen::VectorXd x = t.row(r).transpose();
    CHECK((A * x - rhs).norm() < 1e-9);
  }
}

TEST_CASE("softplus and sigmoid helpers are stable at the extremes") {
  CHECK(softplus_neg(0.0) == doctest::Approx(std::log(2.0)));
  CHECK(softplus_neg(800.0) == doctest::Approx(0.0));
  CHECK(softplus_neg(-800.0) == doctest::Approx(800.0));
  CHECK(sigmoid_neg(0.0) == doctest::Approx(0.5));
  CHECK(sigmoid_neg(800.0) == doctest::Approx(0.0));
  CHECK(sigmoid_neg(-800.0) == doctest::Approx(1.0));
}
