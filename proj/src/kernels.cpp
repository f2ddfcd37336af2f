#include "cavrec/kernels.hpp"

#include <algorithm>

#include <omp.h>

namespace cavrec::kernels {

namespace {

std::size_t num_blocks(std::size_t n) { return (n + kBlock - 1) / kBlock; }

// Per-block partial (loss, grad) combined in block order.
template <typename Body>
LossGrad blocked_loss_grad(std::size_t n, Eigen::Index dim, Body body) {
  const std::size_t blocks = num_blocks(n);
  std::vector<double> losses(blocks, 0.0);
  Mat grads = Mat::Zero(static_cast<Eigen::Index>(blocks), dim);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < static_cast<std::ptrdiff_t>(blocks); ++b) {
    const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
    const std::size_t hi = std::min(n, lo + kBlock);
    Vec g = Vec::Zero(dim);
    double loss = 0.0;
    for (std::size_t k = lo; k < hi; ++k) loss += body(k, g);
    losses[b] = loss;
    grads.row(b) = g.transpose();
  }
  LossGrad out{0.0, Vec::Zero(dim)};
  for (std::size_t b = 0; b < blocks; ++b) {
    out.loss += losses[b];
    out.grad += grads.row(static_cast<Eigen::Index>(b)).transpose();
  }
  return out;
}

}  // namespace

Vec score_items(const Mat& reprs, const Vec& direction) {
  Vec scores(reprs.rows());
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < reprs.rows(); ++i) scores[i] = reprs.row(i).dot(direction);
  return scores;
}

LossGrad pair_logistic(const Mat& reprs, std::span<const Pair> pairs, const Vec& direction) {
  return blocked_loss_grad(pairs.size(), direction.size(), [&](std::size_t k, Vec& g) {
    const auto& p = pairs[k];
    Vec diff = reprs.row(p.pos) - reprs.row(p.neg);
    double z = direction.dot(diff);
    g.noalias() -= p.weight * sigmoid_neg(z) * diff;
    return p.weight * softplus_neg(z);
  });
}

LossGrad labeled_logistic(const Mat& reprs, std::span<const LabeledItem> items,
                          const Vec& direction) {
  return blocked_loss_grad(items.size(), direction.size(), [&](std::size_t k, Vec& g) {
    const auto& e = items[k];
    double z = e.label * reprs.row(e.item).dot(direction);
    g.noalias() -= (e.weight * e.label * sigmoid_neg(z)) * reprs.row(e.item).transpose();
    return e.weight * softplus_neg(z);
  });
}

std::size_t count_ordered(std::span<const double> scores, std::span<const Pair> pairs) {
  std::size_t total = 0;
#pragma omp parallel for schedule(static) reduction(+ : total)
  for (std::ptrdiff_t k = 0; k < static_cast<std::ptrdiff_t>(pairs.size()); ++k) {
    total += scores[pairs[k].pos] >= scores[pairs[k].neg] ? 1 : 0;
  }
  return total;
}

void solve_rows(const SparseRows& rows, const Mat& fixed, double kappa, Mat& target) {
  const Eigen::Index d = fixed.cols();
#pragma omp parallel for schedule(dynamic, 16)
  for (int r = 0; r < rows.num_rows; ++r) {
    Eigen::MatrixXd gram = kappa * Eigen::MatrixXd::Identity(d, d);
    Vec rhs = Vec::Zero(d);
    for (std::size_t k = rows.offsets[r]; k < rows.offsets[r + 1]; ++k) {
      auto f = fixed.row(rows.cols[k]).transpose();
      gram.selfadjointView<Eigen::Lower>().rankUpdate(f, rows.weights[k]);
      rhs.noalias() += rows.weights[k] * rows.values[k] * f;
    }
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
    target.row(r) = gram.ldlt().solve(rhs).transpose();
  }
}

double weighted_sq_error(const SparseRows& rows, const Mat& target, const Mat& fixed) {
  std::vector<double> partial(static_cast<std::size_t>(rows.num_rows), 0.0);
#pragma omp parallel for schedule(static)
  for (int r = 0; r < rows.num_rows; ++r) {
    double acc = 0.0;
    for (std::size_t k = rows.offsets[r]; k < rows.offsets[r + 1]; ++k) {
      double e = target.row(r).dot(fixed.row(rows.cols[k])) - rows.values[k];
      acc += rows.weights[k] * e * e;
    }
    partial[r] = acc;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

}  // namespace cavrec::kernels
