#pragma once

// Data-parallel inner loops. Every kernel has an OpenMP implementation in
// cavrec::kernels and a plain sequential reference in cavrec::kernels::serial
// that the tests and the benchmark compare against.
//
// Reductions are computed over fixed-size blocks and combined in block order,
// so parallel results do not depend on the thread count.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "cavrec/core.hpp"

namespace cavrec::kernels {

/// i ≻ j comparison with an instance weight.
struct Pair {
  ItemId pos;
  ItemId neg;
  double weight = 1.0;
};

/// Item with a ±1 label.
struct LabeledItem {
  ItemId item;
  int label;
  double weight = 1.0;
};

struct LossGrad {
  double loss = 0.0;
  Vec grad;
};

/// CSR rows of (column, value, confidence) used by the WALS half-steps.
struct SparseRows {
  int num_rows = 0;
  std::vector<std::size_t> offsets;  // num_rows + 1
  std::vector<int> cols;
  std::vector<double> values;
  std::vector<double> weights;
};

inline constexpr std::size_t kBlock = 2048;

/// log(1 + e^{-z}) without overflow.
inline double softplus_neg(double z) {
  return z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
}

/// σ(-z) = 1 / (1 + e^{z}).
inline double sigmoid_neg(double z) {
  if (z >= 0) {
    double e = std::exp(-z);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(z));
}

Vec score_items(const Mat& reprs, const Vec& direction);

/// Σ w·log(1 + e^{-φᵀ(x_pos - x_neg)}) and its gradient in φ.
LossGrad pair_logistic(const Mat& reprs, std::span<const Pair> pairs, const Vec& direction);

/// Σ w·log(1 + e^{-y φᵀx}) and its gradient in φ.
LossGrad labeled_logistic(const Mat& reprs, std::span<const LabeledItem> items,
                          const Vec& direction);

/// Number of pairs with score[pos] >= score[neg].
std::size_t count_ordered(std::span<const double> scores, std::span<const Pair> pairs);

/// Exact regularized least-squares solve for every row of `target`:
/// (Σ_j c_j f_j f_jᵀ + κI) t = Σ_j c_j r_j f_j over the row's entries.
void solve_rows(const SparseRows& rows, const Mat& fixed, double kappa, Mat& target);

/// Σ c (t_r·f_c - value)² over all entries.
double weighted_sq_error(const SparseRows& rows, const Mat& target, const Mat& fixed);

namespace serial {

Vec score_items(const Mat& reprs, const Vec& direction);
LossGrad pair_logistic(const Mat& reprs, std::span<const Pair> pairs, const Vec& direction);
LossGrad labeled_logistic(const Mat& reprs, std::span<const LabeledItem> items,
                          const Vec& direction);
std::size_t count_ordered(std::span<const double> scores, std::span<const Pair> pairs);
void solve_rows(const SparseRows& rows, const Mat& fixed, double kappa, Mat& target);
double weighted_sq_error(const SparseRows& rows, const Mat& target, const Mat& fixed);

}  // namespace serial

}  // namespace cavrec::kernels
