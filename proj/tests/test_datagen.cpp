#include <cmath>

#include "bilevel/datagen.hpp"
#include "doctest.h"

using namespace bilevel;

namespace {
InstantiatedEnsemble small_ensemble() {
  return instantiate({1.5, 0.3, 0.6, 0.0, 2}, 30);  // d=164, s=7, k=2
}
}  // namespace

TEST_CASE("block regeneration is bit-identical and partition independent") {
  FeatureSource src(123, 20, 50, 8);
  Eigen::MatrixXd all = src.block(1, 51);
  Eigen::MatrixXd again = src.block(1, 51);
  CHECK((all - again).cwiseAbs().maxCoeff() == 0.0);

  // concatenating odd-sized blocks reproduces the one-shot matrix exactly
  Eigen::MatrixXd stitched(20, 50);
  std::int64_t col = 0;
  for (std::int64_t j0 = 1; j0 <= 50;) {
    std::int64_t j1 = std::min<std::int64_t>(j0 + 7, 51);
    Eigen::MatrixXd b = src.block(j0, j1);
    stitched.middleCols(col, j1 - j0) = b;
    col += j1 - j0;
    j0 = j1;
  }
  CHECK((stitched - all).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero-width block ranges are empty, bad ranges throw") {
  FeatureSource src(1, 5, 10);
  CHECK(src.block(3, 3).cols() == 0);
  CHECK_THROWS_AS(src.block(0, 3), std::out_of_range);
  CHECK_THROWS_AS(src.block(5, 12), std::out_of_range);
}

TEST_CASE("feature entries look standard normal") {
  FeatureSource src(7, 2000, 50);
  Eigen::MatrixXd x = src.block(1, 51);
  double mean = x.mean();
  double var = (x.array() - mean).square().mean();
  CHECK(std::abs(mean) < 0.02);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("labels follow the argmax rule with ties to the smallest index") {
  Eigen::MatrixXd first_k(2, 3);
  first_k << 0.5, -1.0, 2.0,  //
      1.0, 1.0, 0.0;
  auto labels = argmax_labels(first_k);
  CHECK(labels[0] == 3);
  CHECK(labels[1] == 1);  // tie between columns 1 and 2
}

TEST_CASE("sample_training_set is deterministic and label counts sum to n") {
  auto ens = small_ensemble();
  TrainingSet a = sample_training_set(ens, 99);
  TrainingSet b = sample_training_set(ens, 99);
  CHECK(a.labels == b.labels);
  CHECK((a.first_k_block - b.first_k_block).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.first_k_block - a.source.block(1, ens.k + 1)).cwiseAbs().maxCoeff() == 0.0);
  CHECK(static_cast<std::int64_t>(a.labels.size()) == ens.n);
}

TEST_CASE("class frequencies are near uniform for k=2 over many draws") {
  auto ens = instantiate({1.2, 0.1, 0.8, 0.0, 2}, 10000);
  FeatureSource src(5, 10000, 2);
  auto labels = argmax_labels(src.block(1, 3));
  double frac1 = 0.0;
  for (auto l : labels)
    if (l == 1) frac1 += 1.0;
  frac1 /= 1e4;
  CHECK(frac1 > 0.45);
  CHECK(frac1 < 0.55);
  (void)ens;
}

TEST_CASE("weighted blocks scale regenerated columns by sqrt(lambda)") {
  auto ens = small_ensemble();
  TrainingSet ts = sample_training_set(ens, 4);

  Eigen::MatrixXd w = weighted_column_block(ts, 1, ens.s + 1);
  Eigen::MatrixXd raw = ts.source.block(1, ens.s + 1);
  CHECK((w - std::sqrt(ens.lambda_favored) * raw).cwiseAbs().maxCoeff() < 1e-14);

  // block spanning the favored/unfavored boundary
  Eigen::MatrixXd span = weighted_column_block(ts, ens.s, ens.s + 2);
  Eigen::MatrixXd raw_span = ts.source.block(ens.s, ens.s + 2);
  for (std::int64_t c = 0; c < 2; ++c) {
    double lam = weight_of(ens, ens.s + c);
    CHECK((span.col(c) - std::sqrt(lam) * raw_span.col(c)).cwiseAbs().maxCoeff() < 1e-14);
  }

  CHECK(weighted_column_block(ts, 3, 3).cols() == 0);
}

TEST_CASE("encode_labels produces the one-hot and zero-mean encodings") {
  LabelEncoding enc = encode_labels({1, 2, 1}, 2);
  CHECK(enc.one_hot.col(0).isApprox(Eigen::Vector3d(1, 0, 1)));
  CHECK(enc.zero_mean.col(0).isApprox(Eigen::Vector3d(0.5, -0.5, 0.5)));
  CHECK(enc.class_counts == std::vector<std::int64_t>{2, 1});

  // row sums exactly 1; column sums of zero_mean vanish
  CHECK((enc.one_hot.rowwise().sum().array() - 1.0).abs().maxCoeff() == 0.0);
  CHECK(enc.zero_mean.rowwise().sum().cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(encode_labels({1, 3}, 2), std::out_of_range);
}

TEST_CASE("all labels equal gives the degenerate zero-mean column") {
  LabelEncoding enc = encode_labels({2, 2, 2}, 4);
  CHECK((enc.zero_mean.col(1).array() - 0.75).abs().maxCoeff() < 1e-15);
}

TEST_CASE("zero-mean column norm identity") {
  LabelEncoding enc = encode_labels({1, 1, 2, 3, 1, 2}, 3);
  double n = 6.0, k = 3.0;
  for (int m = 0; m < 3; ++m) {
    double nm = static_cast<double>(enc.class_counts[m]);
    double expected = nm * (1 - 1 / k) * (1 - 1 / k) + (n - nm) / (k * k);
    CHECK(enc.zero_mean.col(m).squaredNorm() == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("delta-y entries are in {-1,0,1} with squared norm n_a + n_b") {
  LabelEncoding enc = encode_labels({1, 2, 3, 1, 2, 1, 3, 3}, 3);
  Eigen::VectorXd dy = enc.zero_mean.col(0) - enc.zero_mean.col(1);
  for (Eigen::Index i = 0; i < dy.size(); ++i) {
    double v = std::abs(dy[i]);
    CHECK((v < 1e-12 || std::abs(v - 1.0) < 1e-12));
  }
  CHECK(dy.squaredNorm() ==
        doctest::Approx(static_cast<double>(enc.class_counts[0] + enc.class_counts[1])));
}

TEST_CASE("test points are deterministic with argmax labels") {
  auto ens = small_ensemble();
  auto [x1, l1] = sample_test_point(ens, 77, 3);
  auto [x2, l2] = sample_test_point(ens, 77, 3);
  CHECK((x1 - x2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(l1 == l2);
  std::int64_t expect = x1[0] >= x1[1] ? 1 : 2;
  CHECK(l1 == expect);

  // batch row i matches the standalone point
  TestBatch batch = sample_test_batch(ens, 77, 5);
  CHECK(batch.labels[3] == l1);
  CHECK((batch.first_k.row(3).transpose() - x1.head(ens.k)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("test label histogram is uniform within binomial noise") {
  auto ens = instantiate({1.3, 0.2, 0.9, 0.0, 4}, 200);  // k=4
  TestBatch batch = sample_test_batch(ens, 11, 100000);
  std::vector<std::int64_t> counts(4, 0);
  for (auto l : batch.labels) ++counts[static_cast<std::size_t>(l - 1)];
  double expect = 25000.0;
  double four_sigma = 4.0 * std::sqrt(1e5 * 0.25 * 0.75);
  for (auto c : counts) CHECK(std::abs(static_cast<double>(c) - expect) < four_sigma);
}
