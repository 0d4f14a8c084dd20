#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>

#include "bilevel/datagen.hpp"

namespace bilevel {

// Reference pipeline for small instances: materializes the full weighted
// feature matrix and goes through the pseudoinverse construction
// f_m = (X^w)^T (X^w (X^w)^T)^{-1} y_m with a pivoted LU inverse, sharing no
// numerical path with the streamed Gram/Cholesky pipeline it cross-checks.
class DenseOracle {
 public:
  explicit DenseOracle(const TrainingSet& ts) : ens_(ts.ensemble) {
    x_weighted_ = Eigen::MatrixXd(ens_.n, ens_.d);
    for (std::int64_t j = 1; j <= ens_.d; ++j)
      x_weighted_.col(j - 1) = std::sqrt(weight_of(ens_, j)) * ts.source.column(j);
    encoding_ = encode_labels(ts.labels, ens_.k);

    Eigen::MatrixXd gram = x_weighted_ * x_weighted_.transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    if (!lu.isInvertible()) throw std::runtime_error("dense oracle: Gram matrix is singular");
    primal_ = x_weighted_.transpose() * (lu.inverse() * encoding_.zero_mean);  // d x k
  }

  const Eigen::MatrixXd& primal() const { return primal_; }

  Eigen::VectorXd score(const Eigen::VectorXd& x_test) const {
    Eigen::VectorXd x_w(ens_.d);
    for (std::int64_t j = 1; j <= ens_.d; ++j)
      x_w[j - 1] = std::sqrt(weight_of(ens_, j)) * x_test[j - 1];
    return primal_.transpose() * x_w;
  }

  // lambda_alpha * h_hat_{alpha,beta}[alpha] from the dense primal coefficients.
  double survival(std::int64_t alpha, std::int64_t beta) const {
    check_pair(alpha, beta);
    double lam = weight_of(ens_, alpha);
    double h = (primal_(alpha - 1, alpha - 1) - primal_(alpha - 1, beta - 1)) / std::sqrt(lam);
    return lam * h;
  }

  // CN_{alpha,beta} as the literal root-sum-square over j outside {alpha,beta}.
  double contamination(std::int64_t alpha, std::int64_t beta) const {
    check_pair(alpha, beta);
    double sum = 0.0;
    for (std::int64_t j = 1; j <= ens_.d; ++j) {
      if (j == alpha || j == beta) continue;
      double lam = weight_of(ens_, j);
      double h_ba = (primal_(j - 1, beta - 1) - primal_(j - 1, alpha - 1)) / std::sqrt(lam);
      sum += lam * lam * h_ba * h_ba;
    }
    return std::sqrt(sum);
  }

  double survival_variation(std::int64_t alpha, std::int64_t beta) const {
    check_pair(alpha, beta);
    auto h = [&](std::int64_t a, std::int64_t b, std::int64_t j) {
      double lam = weight_of(ens_, j);
      return (primal_(j - 1, a - 1) - primal_(j - 1, b - 1)) / std::sqrt(lam);
    };
    double h_ab_a = h(alpha, beta, alpha);
    return (h_ab_a - h(beta, alpha, beta)) / h_ab_a;
  }

 private:
  void check_pair(std::int64_t alpha, std::int64_t beta) const {
    if (alpha == beta || alpha < 1 || beta < 1 || alpha > ens_.k || beta > ens_.k)
      throw std::out_of_range("class pair out of range");
  }

  InstantiatedEnsemble ens_;
  Eigen::MatrixXd x_weighted_;
  LabelEncoding encoding_;
  Eigen::MatrixXd primal_;
};

}  // namespace bilevel
