#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "bilevel/interpolator.hpp"

namespace bilevel {

constexpr double kSurvivalDenominatorFloor = 1e-12;

struct PairDiagnostics {
  std::int64_t alpha = 0;
  std::int64_t beta = 0;
  double survival = 0.0;
  double contamination = 0.0;
  std::optional<double> variation;
  double su_cn = 0.0;
};

namespace detail {
inline void check_class_pair(const MniClassifier& clf, std::int64_t alpha, std::int64_t beta) {
  const std::int64_t k = clf.training.ensemble.k;
  if (alpha < 1 || alpha > k || beta < 1 || beta > k)
    throw std::out_of_range("class index out of range");
  if (alpha == beta) throw std::invalid_argument("alpha and beta must differ");
}

// h_hat_{a,b}[a] = z_a^T A^{-1} (y_a - y_b), from the cached first-k columns.
inline double h_self(const MniClassifier& clf, std::int64_t a, std::int64_t b) {
  Eigen::VectorXd w_delta = clf.dual.col(a - 1) - clf.dual.col(b - 1);
  return clf.training.first_k_block.col(a - 1).dot(w_delta);
}
}  // namespace detail

// Relative survival of the true feature: lambda_a * h_hat_{a,b}[a].
inline double relative_survival(const MniClassifier& clf, std::int64_t alpha, std::int64_t beta) {
  detail::check_class_pair(clf, alpha, beta);
  return weight_of(clf.training.ensemble, alpha) * detail::h_self(clf, alpha, beta);
}

// CN_{a,b}^2 = sum_{j not in {a,b}} lambda_j^2 (z_j^T w_delta)^2 for every
// unordered class pair, computed in one streamed pass over the d features.
// Entry (a-1, b-1) of the result is CN_{a,b}; the matrix is symmetric.
inline Eigen::MatrixXd contamination_all_pairs(const MniClassifier& clf) {
  const auto& ens = clf.training.ensemble;
  const std::int64_t k = ens.k;
  const std::int64_t d = ens.d;
  const std::int64_t bs = clf.training.source.block_size();

  // Columns of deltas: w_beta - w_alpha for each unordered pair (a < b).
  const std::int64_t pairs = k * (k - 1) / 2;
  Eigen::MatrixXd deltas(ens.n, pairs);
  std::vector<std::pair<std::int64_t, std::int64_t>> index(static_cast<std::size_t>(pairs));
  {
    std::int64_t c = 0;
    for (std::int64_t a = 1; a <= k; ++a)
      for (std::int64_t b = a + 1; b <= k; ++b) {
        deltas.col(c) = clf.dual.col(b - 1) - clf.dual.col(a - 1);
        index[static_cast<std::size_t>(c)] = {a, b};
        ++c;
      }
  }

  Eigen::VectorXd sums = Eigen::VectorXd::Zero(pairs);
  for (std::int64_t j0 = 1; j0 <= d; j0 += bs) {
    std::int64_t j1 = std::min(j0 + bs, d + 1);
    Eigen::MatrixXd block = clf.training.source.block(j0, j1);
    Eigen::MatrixXd g = block.transpose() * deltas;  // (j1-j0) x pairs
    for (std::int64_t j = j0; j < j1; ++j) {
      double lam = weight_of(ens, j);
      sums += (lam * lam) * g.row(j - j0).cwiseAbs2().transpose();
    }
  }
  // Remove the j = alpha and j = beta terms using the cached columns.
  Eigen::MatrixXd cn = Eigen::MatrixXd::Zero(k, k);
  for (std::int64_t c = 0; c < pairs; ++c) {
    auto [a, b] = index[static_cast<std::size_t>(c)];
    double total = sums[c];
    for (std::int64_t j : {a, b}) {
      double lam = weight_of(ens, j);
      double g = clf.training.first_k_block.col(j - 1).dot(deltas.col(c));
      total -= lam * lam * g * g;
    }
    double value = std::sqrt(std::max(total, 0.0));
    cn(a - 1, b - 1) = value;
    cn(b - 1, a - 1) = value;
  }
  return cn;
}

inline double contamination(const MniClassifier& clf, std::int64_t alpha, std::int64_t beta) {
  detail::check_class_pair(clf, alpha, beta);
  const auto& ens = clf.training.ensemble;
  Eigen::VectorXd w_delta = clf.dual.col(beta - 1) - clf.dual.col(alpha - 1);

  double sum = 0.0;
  const std::int64_t bs = clf.training.source.block_size();
  for (std::int64_t j0 = 1; j0 <= ens.d; j0 += bs) {
    std::int64_t j1 = std::min(j0 + bs, ens.d + 1);
    Eigen::MatrixXd block = clf.training.source.block(j0, j1);
    Eigen::VectorXd g = block.transpose() * w_delta;
    for (std::int64_t j = j0; j < j1; ++j) {
      if (j == alpha || j == beta) continue;
      double lam = weight_of(ens, j);
      sum += lam * lam * g[j - j0] * g[j - j0];
    }
  }
  return std::sqrt(sum);
}

// (h_hat_{a,b}[a] - h_hat_{b,a}[b]) / h_hat_{a,b}[a]; nullopt when the
// denominator is below the reporting floor.
inline std::optional<double> survival_variation(const MniClassifier& clf, std::int64_t alpha,
                                                std::int64_t beta) {
  detail::check_class_pair(clf, alpha, beta);
  double h_ab = detail::h_self(clf, alpha, beta);
  if (std::abs(h_ab) < kSurvivalDenominatorFloor) return std::nullopt;
  double h_ba = detail::h_self(clf, beta, alpha);
  return (h_ab - h_ba) / h_ab;
}

// All ordered pairs, sharing one contamination stream.
inline std::vector<PairDiagnostics> pairwise_diagnostics(const MniClassifier& clf) {
  const std::int64_t k = clf.training.ensemble.k;
  Eigen::MatrixXd cn = contamination_all_pairs(clf);
  std::vector<PairDiagnostics> out;
  out.reserve(static_cast<std::size_t>(k * (k - 1)));
  for (std::int64_t a = 1; a <= k; ++a)
    for (std::int64_t b = 1; b <= k; ++b) {
      if (a == b) continue;
      PairDiagnostics pd;
      pd.alpha = a;
      pd.beta = b;
      pd.survival = relative_survival(clf, a, b);
      pd.contamination = cn(a - 1, b - 1);
      pd.variation = survival_variation(clf, a, b);
      pd.su_cn = pd.contamination > 0.0 ? pd.survival / pd.contamination : 0.0;
      out.push_back(pd);
    }
  return out;
}

// min over competitors of survival divided by max over competitors of
// contamination, for each true class alpha. Entry alpha-1 of the result.
inline Eigen::VectorXd su_cn_summary(const MniClassifier& clf) {
  const std::int64_t k = clf.training.ensemble.k;
  Eigen::MatrixXd cn = contamination_all_pairs(clf);
  Eigen::VectorXd out(k);
  for (std::int64_t a = 1; a <= k; ++a) {
    double min_su = std::numeric_limits<double>::infinity();
    double max_cn = 0.0;
    for (std::int64_t b = 1; b <= k; ++b) {
      if (b == a) continue;
      min_su = std::min(min_su, relative_survival(clf, a, b));
      max_cn = std::max(max_cn, cn(a - 1, b - 1));
    }
    out[a - 1] = max_cn > 0.0 ? min_su / max_cn : 0.0;
  }
  return out;
}

struct MarginSample {
  double closest_margin = 0.0;      // x[a] minus the second largest of the first k
  double largest_competitor = 0.0;  // max over b != a of |x[b]|
};

inline MarginSample margin_sample(const Eigen::VectorXd& first_k) {
  if (first_k.size() < 2) throw std::invalid_argument("margin_sample requires k >= 2");
  Eigen::Index a = 0;
  for (Eigen::Index m = 1; m < first_k.size(); ++m)
    if (first_k[m] > first_k[a]) a = m;
  MarginSample ms;
  ms.closest_margin = std::numeric_limits<double>::infinity();
  for (Eigen::Index m = 0; m < first_k.size(); ++m) {
    if (m == a) continue;
    ms.closest_margin = std::min(ms.closest_margin, first_k[a] - first_k[m]);
    ms.largest_competitor = std::max(ms.largest_competitor, std::abs(first_k[m]));
  }
  return ms;
}

struct EigenDiagnostics {
  double mu_bar = 0.0;        // 1 / sum lambda
  double diamond = 0.0;       // concentration radius for the eigenvalues of A
  double delta_mu = 0.0;      // induced radius for A^{-1}
  double empirical_min = 0.0;
  double empirical_max = 0.0;
  bool sandwich_ok = false;   // sum_lambda - diamond <= mu_n(A) <= mu_1(A) <= sum_lambda + diamond
};

inline double diamond_radius(const InstantiatedEnsemble& ens) {
  const double one_ln9 = 1.0 + std::log(9.0);
  const double n = static_cast<double>(ens.n);
  return (32.0 / 9.0) *
         (ens.lambda_favored * one_ln9 * n + std::sqrt(one_ln9 * n * ens.sum_lambda_sq));
}

inline EigenDiagnostics eigen_check(const TrainingSet& ts, const GramMatrix& gram) {
  EigenDiagnostics ed;
  const auto& ens = ts.ensemble;
  ed.mu_bar = 1.0 / ens.sum_lambda;
  ed.diamond = diamond_radius(ens);
  double ratio = ed.diamond / ens.sum_lambda;
  // Second-order term instantiated with unit constant; pass/fail uses the
  // fully explicit diamond-level sandwich on A, not delta_mu.
  ed.delta_mu = ed.mu_bar * (ratio + ratio * ratio);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram.A, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigensolve failed");
  ed.empirical_min = solver.eigenvalues().minCoeff();
  ed.empirical_max = solver.eigenvalues().maxCoeff();
  ed.sandwich_ok = ens.sum_lambda - ed.diamond <= ed.empirical_min &&
                   ed.empirical_max <= ens.sum_lambda + ed.diamond;
  return ed;
}

struct EncodingConcentration {
  double delta_y_sq = 0.0;   // ||y_a - y_b||^2 = n_a + n_b
  double expected = 0.0;     // 2n/k
  bool within = false;       // inside (1 +- delta) * expected at delta = 0.5
};

inline EncodingConcentration encoding_concentration(const TrainingSet& ts, std::int64_t alpha,
                                                    std::int64_t beta, double delta = 0.5) {
  if (alpha == beta) throw std::invalid_argument("alpha and beta must differ");
  std::int64_t count = 0;
  for (std::int64_t label : ts.labels)
    if (label == alpha || label == beta) ++count;
  EncodingConcentration ec;
  ec.delta_y_sq = static_cast<double>(count);
  ec.expected = 2.0 * static_cast<double>(ts.ensemble.n) / static_cast<double>(ts.ensemble.k);
  ec.within = ec.delta_y_sq >= (1.0 - delta) * ec.expected &&
              ec.delta_y_sq <= (1.0 + delta) * ec.expected;
  return ec;
}

struct ProbeResult {
  double empirical_mean = 0.0;
  double std_error = 0.0;
  double lower_bound = 0.0;
  double upper_bound = 0.0;
  bool within_3se = false;
};

namespace detail {
inline ProbeResult finish_probe(double sum, double sum_sq, std::int64_t count, double lo,
                                double hi) {
  ProbeResult pr;
  double n = static_cast<double>(count);
  pr.empirical_mean = sum / n;
  double var = std::max(sum_sq / n - pr.empirical_mean * pr.empirical_mean, 0.0);
  pr.std_error = std::sqrt(var / n);
  pr.lower_bound = lo;
  pr.upper_bound = hi;
  pr.within_3se = pr.empirical_mean >= lo - 3.0 * pr.std_error &&
                  pr.empirical_mean <= hi + 3.0 * pr.std_error;
  return pr;
}
}  // namespace detail

// Empirical mean of the max of k standard Gaussians against the analytic
// bracket sqrt(ln k)/sqrt(pi ln 2) <= E[max] <= sqrt(2) sqrt(ln k).
inline ProbeResult max_gaussian_probe(std::int64_t k, std::int64_t samples, std::uint64_t seed) {
  if (k < 2 || samples < 1) throw std::invalid_argument("max_gaussian_probe: k >= 2, samples >= 1");
  NormalStream stream(mix64(seed));
  double sum = 0.0, sum_sq = 0.0;
  for (std::int64_t i = 0; i < samples; ++i) {
    double best = stream.next();
    for (std::int64_t j = 1; j < k; ++j) best = std::max(best, stream.next());
    sum += best;
    sum_sq += best * best;
  }
  double root_ln_k = std::sqrt(std::log(static_cast<double>(k)));
  double lo = root_ln_k / std::sqrt(M_PI * std::log(2.0));
  double hi = std::sqrt(2.0) * root_ln_k;
  return detail::finish_probe(sum, sum_sq, samples, lo, hi);
}

// Empirical fraction of trials with ||z||^2 inside n(1 +- delta) for
// z ~ N(0, I_n); the tail bound promises >= 1 - 2 exp(-n delta^2).
inline double chi_squared_probe(std::int64_t n, std::int64_t trials, std::uint64_t seed,
                                double delta) {
  NormalStream stream(mix64(seed));
  std::int64_t inside = 0;
  for (std::int64_t t = 0; t < trials; ++t) {
    double norm_sq = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      double z = stream.next();
      norm_sq += z * z;
    }
    double nn = static_cast<double>(n);
    if (norm_sq >= nn * (1.0 - delta) && norm_sq <= nn * (1.0 + delta)) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(trials);
}

struct ExpectationProbes {
  ProbeResult z_alpha_y_alpha;  // E[z_a^T y_a]
  ProbeResult z_alpha_y_beta;   // E[z_a^T y_b]
  ProbeResult max_of_k;         // E[max of k Gaussians]
};

// Empirical means of z_a^T y_a, z_a^T y_b and the max of k Gaussians, each
// bracketed by its analytic bounds.
inline ExpectationProbes expectation_probes(std::int64_t n, std::int64_t k, std::int64_t trials,
                                            std::uint64_t seed) {
  if (trials < 1 || k < 2 || n < 1) throw std::invalid_argument("expectation_probes: bad inputs");
  double sum_aa = 0.0, sum_sq_aa = 0.0;
  double sum_ab = 0.0, sum_sq_ab = 0.0;
  double sum_max = 0.0, sum_sq_max = 0.0;
  NormalStream stream(mix64(seed));
  for (std::int64_t t = 0; t < trials; ++t) {
    double dot_aa = 0.0, dot_ab = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      double z_a = stream.next();
      double best = z_a;
      std::int64_t winner = 1;
      for (std::int64_t m = 2; m <= k; ++m) {
        double z = stream.next();
        if (z > best) {
          best = z;
          winner = m;
        }
      }
      double inv_k = 1.0 / static_cast<double>(k);
      dot_aa += z_a * ((winner == 1 ? 1.0 : 0.0) - inv_k);
      dot_ab += z_a * ((winner == 2 ? 1.0 : 0.0) - inv_k);
      sum_max += best;
      sum_sq_max += best * best;
    }
    sum_aa += dot_aa;
    sum_sq_aa += dot_aa * dot_aa;
    sum_ab += dot_ab;
    sum_sq_ab += dot_ab * dot_ab;
  }
  double nk = static_cast<double>(n) / static_cast<double>(k);
  double root_ln_k = std::sqrt(std::log(static_cast<double>(k)));
  double lo_coeff = 1.0 / std::sqrt(M_PI * std::log(2.0));
  double hi_coeff = std::sqrt(2.0);

  ExpectationProbes probes;
  probes.z_alpha_y_alpha = detail::finish_probe(sum_aa, sum_sq_aa, trials,
                                                lo_coeff * nk * root_ln_k,
                                                hi_coeff * nk * root_ln_k);
  double pair_scale = nk * root_ln_k / static_cast<double>(k - 1);
  probes.z_alpha_y_beta = detail::finish_probe(sum_ab, sum_sq_ab, trials,
                                               -hi_coeff * pair_scale, -lo_coeff * pair_scale);
  probes.max_of_k = detail::finish_probe(sum_max, sum_sq_max, trials * n,
                                         lo_coeff * root_ln_k, hi_coeff * root_ln_k);
  return probes;
}

inline ExpectationProbes expectation_probes(const InstantiatedEnsemble& ens, std::int64_t trials,
                                            std::uint64_t seed) {
  return expectation_probes(ens.n, ens.k, trials, seed);
}

}  // namespace bilevel
