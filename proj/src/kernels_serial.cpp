// Reference implementations: straightforward loops, no blocking, no OpenMP.

#include "cavrec/kernels.hpp"

namespace cavrec::kernels::serial {

Vec score_items(const Mat& reprs, const Vec& direction) {
  Vec scores(reprs.rows());
  for (Eigen::Index i = 0; i < reprs.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < reprs.cols(); ++c) s += reprs(i, c) * direction[c];
    scores[i] = s;
  }
  return scores;
}

LossGrad pair_logistic(const Mat& reprs, std::span<const Pair> pairs, const Vec& direction) {
  LossGrad out{0.0, Vec::Zero(direction.size())};
  for (const auto& p : pairs) {
    double z = 0.0;
    for (Eigen::Index c = 0; c < direction.size(); ++c) {
      z += direction[c] * (reprs(p.pos, c) - reprs(p.neg, c));
    }
    out.loss += p.weight * softplus_neg(z);
    double s = p.weight * sigmoid_neg(z);
    for (Eigen::Index c = 0; c < direction.size(); ++c) {
      out.grad[c] -= s * (reprs(p.pos, c) - reprs(p.neg, c));
    }
  }
  return out;
}

LossGrad labeled_logistic(const Mat& reprs, std::span<const LabeledItem> items,
                          const Vec& direction) {
  LossGrad out{0.0, Vec::Zero(direction.size())};
  for (const auto& e : items) {
    double z = 0.0;
    for (Eigen::Index c = 0; c < direction.size(); ++c) z += direction[c] * reprs(e.item, c);
    z *= e.label;
    out.loss += e.weight * softplus_neg(z);
    double s = e.weight * e.label * sigmoid_neg(z);
    for (Eigen::Index c = 0; c < direction.size(); ++c) out.grad[c] -= s * reprs(e.item, c);
  }
  return out;
}

std::size_t count_ordered(std::span<const double> scores, std::span<const Pair> pairs) {
  std::size_t total = 0;
  for (const auto& p : pairs) total += scores[p.pos] >= scores[p.neg] ? 1 : 0;
  return total;
}

void solve_rows(const SparseRows& rows, const Mat& fixed, double kappa, Mat& target) {
  const Eigen::Index d = fixed.cols();
  for (int r = 0; r < rows.num_rows; ++r) {
    Eigen::MatrixXd gram = kappa * Eigen::MatrixXd::Identity(d, d);
    Vec rhs = Vec::Zero(d);
    for (std::size_t k = rows.offsets[r]; k < rows.offsets[r + 1]; ++k) {
      Vec f = fixed.row(rows.cols[k]).transpose();
      gram += rows.weights[k] * f * f.transpose();
      rhs += rows.weights[k] * rows.values[k] * f;
    }
    target.row(r) = gram.ldlt().solve(rhs).transpose();
  }
}

double weighted_sq_error(const SparseRows& rows, const Mat& target, const Mat& fixed) {
  double total = 0.0;
  for (int r = 0; r < rows.num_rows; ++r) {
    for (std::size_t k = rows.offsets[r]; k < rows.offsets[r + 1]; ++k) {
      double e = target.row(r).dot(fixed.row(rows.cols[k])) - rows.values[k];
      total += rows.weights[k] * e * e;
    }
  }
  return total;
}

}  // namespace cavrec::kernels::serial
