#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "bilevel/datagen.hpp"
#include "bilevel/ensemble.hpp"

namespace bilevel {

struct GramNotPositiveDefinite : std::runtime_error {
  explicit GramNotPositiveDefinite(Eigen::Index pivot)
      : std::runtime_error("Gram not positive definite (failing pivot " +
                           std::to_string(pivot) + ")"),
        pivot_index(pivot) {}
  Eigen::Index pivot_index;
};

// n x n Gram matrix A = sum_j lambda_j z_j z_j^T with its Cholesky factor.
// Blocks are accumulated in ascending column order, so the result is a fixed
// function of the training set regardless of worker count.
struct GramMatrix {
  Eigen::MatrixXd A;
  Eigen::LLT<Eigen::MatrixXd> llt;
};

namespace detail {
// Locate the first failing Cholesky pivot for the error report.
inline Eigen::Index failing_pivot(const Eigen::MatrixXd& A) {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(A.rows(), A.cols());
  for (Eigen::Index j = 0; j < A.rows(); ++j) {
    double diag = A(j, j) - L.row(j).head(j).squaredNorm();
    if (!(diag > 0.0)) return j;
    L(j, j) = std::sqrt(diag);
    for (Eigen::Index i = j + 1; i < A.rows(); ++i)
      L(i, j) = (A(i, j) - L.row(i).head(j).dot(L.row(j).head(j))) / L(j, j);
  }
  return -1;
}
}  // namespace detail

inline GramMatrix build_gram(const TrainingSet& ts) {
  const std::int64_t n = ts.ensemble.n;
  const std::int64_t d = ts.ensemble.d;
  const std::int64_t bs = ts.source.block_size();

  GramMatrix gram;
  gram.A = Eigen::MatrixXd::Zero(n, n);
  for (std::int64_t j0 = 1; j0 <= d; j0 += bs) {
    std::int64_t j1 = std::min(j0 + bs, d + 1);
    Eigen::MatrixXd block = weighted_column_block(ts, j0, j1);
    gram.A.selfadjointView<Eigen::Lower>().rankUpdate(block);
  }
  gram.A.triangularView<Eigen::StrictlyUpper>() =
      gram.A.triangularView<Eigen::StrictlyLower>().transpose();

  gram.llt.compute(gram.A);
  if (gram.llt.info() != Eigen::Success)
    throw GramNotPositiveDefinite(detail::failing_pivot(gram.A));
  return gram;
}

// Minimum-norm interpolating multiclass classifier in dual form: column m of
// `dual` is w_m = A^{-1} y_m for the zero-mean encoding y_m. The primal
// coefficient f_m[j] = sqrt(lambda_j) z_j^T w_m is recoverable per feature
// without ever storing all d of them.
struct MniClassifier {
  TrainingSet training;
  GramMatrix gram;
  LabelEncoding encoding;
  Eigen::MatrixXd dual;  // n x k
};

inline MniClassifier fit(TrainingSet ts) {
  GramMatrix gram = build_gram(ts);
  LabelEncoding enc = encode_labels(ts.labels, ts.ensemble.k);
  Eigen::MatrixXd dual = gram.llt.solve(enc.zero_mean);
  return MniClassifier{std::move(ts), std::move(gram), std::move(enc), std::move(dual)};
}

// Primal coefficients f_m[j] for features [j0, j1), returned as (j1-j0) x k.
inline Eigen::MatrixXd primal_coefficients(const MniClassifier& clf, std::int64_t j0,
                                           std::int64_t j1) {
  Eigen::MatrixXd block = weighted_column_block(clf.training, j0, j1);
  return block.transpose() * clf.dual;
}

// Scores for a batch of test points: column i of the result is the k-vector
// of scores for point i. One streamed pass over the d features; the pass is
// shared by the whole batch.
inline Eigen::MatrixXd score_batch(const MniClassifier& clf, const TestBatch& batch) {
  if (batch.ensemble.d != clf.training.ensemble.d)
    throw std::invalid_argument("test batch dimension mismatch");
  const std::int64_t n = clf.training.ensemble.n;
  const std::int64_t d = clf.training.ensemble.d;
  const std::int64_t bs = clf.training.source.block_size();
  const std::int64_t m = batch.source.rows();

  // V = X^w (X^w_test)^T accumulated block by block in ascending order.
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(n, m);
  for (std::int64_t j0 = 1; j0 <= d; j0 += bs) {
    std::int64_t j1 = std::min(j0 + bs, d + 1);
    Eigen::MatrixXd train_block = clf.training.source.block(j0, j1);
    for (std::int64_t j = j0; j < j1; ++j)
      train_block.col(j - j0) *= weight_of(clf.training.ensemble, j);
    Eigen::MatrixXd test_block = batch.source.block(j0, j1);
    v.noalias() += train_block * test_block.transpose();
  }
  return clf.dual.transpose() * v;  // k x m
}

// Scores for one fully materialized unweighted test point.
inline Eigen::VectorXd score(const MniClassifier& clf, const Eigen::VectorXd& x_test) {
  if (x_test.size() != clf.training.ensemble.d)
    throw std::invalid_argument("test point dimension mismatch");
  const std::int64_t d = clf.training.ensemble.d;
  const std::int64_t bs = clf.training.source.block_size();
  const std::int64_t n = clf.training.ensemble.n;

  Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
  for (std::int64_t j0 = 1; j0 <= d; j0 += bs) {
    std::int64_t j1 = std::min(j0 + bs, d + 1);
    Eigen::MatrixXd block = clf.training.source.block(j0, j1);
    Eigen::VectorXd seg = x_test.segment(j0 - 1, j1 - j0);
    for (std::int64_t j = j0; j < j1; ++j) seg[j - j0] *= weight_of(clf.training.ensemble, j);
    v.noalias() += block * seg;
  }
  return clf.dual.transpose() * v;
}

// Argmax with ties broken to the smallest index; returns a label in [1..k].
inline std::int64_t argmax_label(const Eigen::VectorXd& scores) {
  Eigen::Index best = 0;
  for (Eigen::Index m = 1; m < scores.size(); ++m)
    if (scores[m] > scores[best]) best = m;
  return best + 1;
}

inline std::int64_t predict(const MniClassifier& clf, const Eigen::VectorXd& x_test) {
  return argmax_label(score(clf, x_test));
}

inline std::vector<std::int64_t> predict_batch(const MniClassifier& clf, const TestBatch& batch) {
  Eigen::MatrixXd scores = score_batch(clf, batch);
  std::vector<std::int64_t> out(static_cast<std::size_t>(scores.cols()));
  for (Eigen::Index i = 0; i < scores.cols(); ++i)
    out[static_cast<std::size_t>(i)] = argmax_label(scores.col(i));
  return out;
}

}  // namespace bilevel
