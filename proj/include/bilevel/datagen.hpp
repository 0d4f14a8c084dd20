#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "bilevel/ensemble.hpp"
#include "bilevel/rng.hpp"

namespace bilevel {

constexpr std::int64_t kDefaultBlockSize = 1024;

// Deterministic, block-regenerable source of i.i.d. standard-normal feature
// columns. Column j (1-based) is a pure function of (master_seed, j): its
// generator is seeded with column_seed(master_seed, j), independent of how
// the columns are partitioned into blocks.
class FeatureSource {
 public:
  FeatureSource(std::uint64_t master_seed, std::int64_t rows, std::int64_t cols,
                std::int64_t block_size = kDefaultBlockSize)
      : master_seed_(master_seed), rows_(rows), cols_(cols), block_size_(block_size) {
    if (rows < 1 || cols < 1 || block_size < 1)
      throw std::invalid_argument("FeatureSource: rows, cols, block_size must be positive");
  }

  std::uint64_t master_seed() const { return master_seed_; }
  std::int64_t rows() const { return rows_; }
  std::int64_t cols() const { return cols_; }
  std::int64_t block_size() const { return block_size_; }

  // Unweighted columns [j0, j1), 1-based, j1 exclusive.
  Eigen::MatrixXd block(std::int64_t j0, std::int64_t j1) const {
    check_range(j0, j1);
    Eigen::MatrixXd out(rows_, j1 - j0);
    for (std::int64_t j = j0; j < j1; ++j) {
      NormalStream stream(column_seed(master_seed_, j));
      stream.fill(out.col(j - j0).data(), static_cast<std::size_t>(rows_));
    }
    return out;
  }

  // Single column, 1-based.
  Eigen::VectorXd column(std::int64_t j) const {
    return block(j, j + 1).col(0);
  }

  // Single row materialized across all columns. Intended for small d only.
  Eigen::VectorXd row(std::int64_t i) const {
    if (i < 0 || i >= rows_) throw std::out_of_range("row index out of range");
    Eigen::VectorXd out(cols_);
    for (std::int64_t j = 1; j <= cols_; ++j) {
      NormalStream stream(column_seed(master_seed_, j));
      double v = 0.0;
      for (std::int64_t it = 0; it <= i; ++it) v = stream.next();
      out[j - 1] = v;
    }
    return out;
  }

 private:
  void check_range(std::int64_t j0, std::int64_t j1) const {
    if (j0 < 1 || j1 < j0 || j1 > cols_ + 1)
      throw std::out_of_range("column range out of bounds");
  }

  std::uint64_t master_seed_;
  std::int64_t rows_;
  std::int64_t cols_;
  std::int64_t block_size_;
};

// Labels in [1..k] by the argmax-of-first-k rule, ties to the smallest index.
inline std::vector<std::int64_t> argmax_labels(const Eigen::MatrixXd& first_k) {
  std::vector<std::int64_t> labels(first_k.rows());
  for (Eigen::Index i = 0; i < first_k.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index m = 1; m < first_k.cols(); ++m)
      if (first_k(i, m) > first_k(i, best)) best = m;
    labels[static_cast<std::size_t>(i)] = best + 1;
  }
  return labels;
}

struct TrainingSet {
  InstantiatedEnsemble ensemble;
  FeatureSource source;
  std::vector<std::int64_t> labels;  // in [1..k]
  Eigen::MatrixXd first_k_block;     // n x k, unweighted
};

inline TrainingSet sample_training_set(const InstantiatedEnsemble& ens, std::uint64_t seed,
                                       std::int64_t block_size = kDefaultBlockSize) {
  FeatureSource source(seed, ens.n, ens.d, block_size);
  Eigen::MatrixXd first_k = source.block(1, ens.k + 1);
  std::vector<std::int64_t> labels = argmax_labels(first_k);
  return TrainingSet{ens, source, std::move(labels), std::move(first_k)};
}

// Weighted columns [j0, j1): column j is sqrt(lambda_j) times the regenerated
// unweighted column.
inline Eigen::MatrixXd weighted_column_block(const TrainingSet& ts, std::int64_t j0,
                                             std::int64_t j1) {
  Eigen::MatrixXd block = ts.source.block(j0, j1);
  for (std::int64_t j = j0; j < j1; ++j)
    block.col(j - j0) *= std::sqrt(weight_of(ts.ensemble, j));
  return block;
}

struct LabelEncoding {
  Eigen::MatrixXd one_hot;    // n x k, entries in {0,1}
  Eigen::MatrixXd zero_mean;  // one_hot - 1/k
  std::vector<std::int64_t> class_counts;
};

inline LabelEncoding encode_labels(const std::vector<std::int64_t>& labels, std::int64_t k) {
  const auto n = static_cast<Eigen::Index>(labels.size());
  LabelEncoding enc;
  enc.one_hot = Eigen::MatrixXd::Zero(n, k);
  enc.class_counts.assign(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    std::int64_t m = labels[static_cast<std::size_t>(i)];
    if (m < 1 || m > k) throw std::out_of_range("label out of range [1..k]");
    enc.one_hot(i, m - 1) = 1.0;
    ++enc.class_counts[static_cast<std::size_t>(m - 1)];
  }
  enc.zero_mean = enc.one_hot.array() - 1.0 / static_cast<double>(k);
  return enc;
}

// A batch of test points sharing one feature source; point i is row i.
struct TestBatch {
  InstantiatedEnsemble ensemble;
  FeatureSource source;
  Eigen::MatrixXd first_k;  // batch x k, unweighted
  std::vector<std::int64_t> labels;
};

inline TestBatch sample_test_batch(const InstantiatedEnsemble& ens, std::uint64_t seed,
                                   std::int64_t count,
                                   std::int64_t block_size = kDefaultBlockSize) {
  FeatureSource source(seed, count, ens.d, block_size);
  Eigen::MatrixXd first_k = source.block(1, ens.k + 1);
  std::vector<std::int64_t> labels = argmax_labels(first_k);
  return TestBatch{ens, source, std::move(first_k), std::move(labels)};
}

// Single test point (unweighted features plus true label); index is the row
// within the batch layout, so the point depends only on (seed, index).
inline std::pair<Eigen::VectorXd, std::int64_t> sample_test_point(const InstantiatedEnsemble& ens,
                                                                  std::uint64_t seed,
                                                                  std::int64_t index) {
  FeatureSource source(seed, index + 1, ens.d);
  Eigen::VectorXd x = source.row(index);
  std::int64_t label = 1;
  for (std::int64_t m = 2; m <= ens.k; ++m)
    if (x[m - 1] > x[label - 1]) label = m;
  return {std::move(x), label};
}

}  // namespace bilevel
