// Parallel kernels against their serial references.

#include <benchmark/benchmark.h>

#include "cavrec/kernels.hpp"
#include "cavrec/rng.hpp"

namespace {

using namespace cavrec;

struct Fixture {
  Mat reprs;
  Vec direction;
  std::vector<kernels::Pair> pairs;
  std::vector<kernels::LabeledItem> items;
  kernels::SparseRows rows;
  Mat fixed;

  Fixture(int items_n, int dim, int pairs_n) {
    Rng rng = derive_rng(7, {});
    std::normal_distribution<double> normal;
    reprs.resize(items_n, dim);
    for (Eigen::Index k = 0; k < reprs.size(); ++k) reprs.data()[k] = normal(rng);
    direction = Vec::NullaryExpr(dim, [&] { return normal(rng); });
    std::uniform_int_distribution<int> pick(0, items_n - 1);
    for (int k = 0; k < pairs_n; ++k) {
      pairs.push_back({pick(rng), pick(rng)});
      items.push_back({pick(rng), k % 2 ? 1 : -1});
    }
    const int users = items_n / 2;
    rows.num_rows = users;
    rows.offsets.push_back(0);
    for (int u = 0; u < users; ++u) {
      for (int j = 0; j < 50; ++j) {
        rows.cols.push_back(pick(rng));
        rows.values.push_back(1.0 + (j % 5));
        rows.weights.push_back(1.0);
      }
      rows.offsets.push_back(rows.cols.size());
    }
    fixed = reprs;
  }
};

Fixture& fixture() {
  static Fixture f(10000, 32, 200000);
  return f;
}

void BM_PairLogistic(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::pair_logistic(f.reprs, f.pairs, f.direction));
}
void BM_PairLogisticSerial(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::serial::pair_logistic(f.reprs, f.pairs, f.direction));
  }
}
void BM_LabeledLogistic(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::labeled_logistic(f.reprs, f.items, f.direction));
}
void BM_LabeledLogisticSerial(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(kernels::serial::labeled_logistic(f.reprs, f.items, f.direction));
  }
}
void BM_ScoreItems(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::score_items(f.reprs, f.direction));
}
void BM_ScoreItemsSerial(benchmark::State& state) {
  auto& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(kernels::serial::score_items(f.reprs, f.direction));
}
void BM_SolveRows(benchmark::State& state) {
  auto& f = fixture();
  Mat target(f.rows.num_rows, f.fixed.cols());
  for (auto _ : state) {
    kernels::solve_rows(f.rows, f.fixed, 1.0, target);
    benchmark::DoNotOptimize(target.data());
  }
}
void BM_SolveRowsSerial(benchmark::State& state) {
  auto& f = fixture();
  Mat target(f.rows.num_rows, f.fixed.cols());
  for (auto _ : state) {
    kernels::serial::solve_rows(f.rows, f.fixed, 1.0, target);
    benchmark::DoNotOptimize(target.data());
  }
}

}  // namespace

BENCHMARK(BM_PairLogistic);
BENCHMARK(BM_PairLogisticSerial);
BENCHMARK(BM_LabeledLogistic);
BENCHMARK(BM_LabeledLogisticSerial);
BENCHMARK(BM_ScoreItems);
BENCHMARK(BM_ScoreItemsSerial);
BENCHMARK(BM_SolveRows);
BENCHMARK(BM_SolveRowsSerial);

BENCHMARK_MAIN();
