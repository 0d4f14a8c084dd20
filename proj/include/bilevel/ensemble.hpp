#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bilevel {

// Scaling-law exponents (p, q, r, t) plus the integer class multiplier c_k.
// All of d, s, a, k are derived from these at a given training-set size n.
struct EnsembleExponents {
  double p = 2.0;   // overparameterization: d = floor(n^p)
  double q = 0.5;   // weight decay: a = n^-q
  double r = 0.5;   // favored-feature count: s = floor(n^r)
  double t = 0.0;   // class count: k = c_k * floor(n^t)
  int    c_k = 2;   // class multiplier, positive integer
};

struct ValidityReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

// Concrete model realized from exponents at a given n.
struct InstantiatedEnsemble {
  std::int64_t n = 0;
  std::int64_t d = 0;
  std::int64_t s = 0;
  std::int64_t k = 0;
  double a = 0.0;
  double lambda_favored = 0.0;
  double lambda_unfavored = 0.0;
  double sum_lambda = 0.0;       // analytically equal to d
  double sum_lambda_sq = 0.0;
  EnsembleExponents exponents;
};

// floor(n^p) with a half-ulp-style guard: if n^p lands within 1e-9 of an
// integer, round to that integer instead of flooring past it.
inline std::int64_t floor_pow(std::int64_t n, double e) {
  long double v = std::pow(static_cast<long double>(n), static_cast<long double>(e));
  long double nearest = roundl(v);
  if (fabsl(v - nearest) < 1e-9L) return static_cast<std::int64_t>(nearest);
  return static_cast<std::int64_t>(floorl(v));
}

inline ValidityReport validate(const EnsembleExponents& e) {
  ValidityReport rep;
  auto finite = [](double x) { return std::isfinite(x); };
  if (!finite(e.p) || !finite(e.q) || !finite(e.r) || !finite(e.t)) {
    rep.violations.push_back("exponents must be finite");
    return rep;
  }
  if (!(e.p > 1.0)) rep.violations.push_back("p > 1");
  if (!(e.r >= 0.0 && e.r < 1.0)) rep.violations.push_back("0 <= r < 1");
  if (!(e.q > 0.0)) rep.violations.push_back("q > 0");
  if (!(e.q < e.p - e.r)) rep.violations.push_back("q < p - r");
  if (!(e.t >= 0.0)) rep.violations.push_back("t >= 0");
  if (!(e.t < e.r)) {
    if (e.t == 0.0 && e.r == 0.0)
      rep.violations.push_back("t < r (degenerate fixed-class case t = r = 0 with k = c_k)");
    else
      rep.violations.push_back("t < r");
  }
  if (e.c_k < 1) rep.violations.push_back("c_k >= 1");
  if (e.t == 0.0 && e.c_k < 2) rep.violations.push_back("c_k >= 2 when t = 0");
  return rep;
}

// The failure-region sweeps deliberately run at n small enough that
// k = c_k*floor(n^t) exceeds s; Relaxed admits those instances.
enum class InstantiatePolicy { Strict, Relaxed };

inline InstantiatedEnsemble instantiate(const EnsembleExponents& e, std::int64_t n,
                                        InstantiatePolicy policy = InstantiatePolicy::Strict) {
  ValidityReport rep = validate(e);
  if (!rep.ok()) {
    std::string msg = "invalid exponents:";
    for (const auto& v : rep.violations) msg += " [" + v + "]";
    throw std::invalid_argument(msg);
  }
  if (n < 2) throw std::invalid_argument("n >= 2 required");

  InstantiatedEnsemble ens;
  ens.exponents = e;
  ens.n = n;
  ens.d = floor_pow(n, e.p);
  ens.s = floor_pow(n, e.r);
  ens.k = e.c_k * floor_pow(n, e.t);
  ens.a = std::pow(static_cast<double>(n), -e.q);

  if (ens.k < 2)
    throw std::invalid_argument("ensemble degenerate at this n: k < 2");
  if (ens.d <= n)
    throw std::invalid_argument("ensemble degenerate at this n: d <= n (not overparameterized)");
  if (policy == InstantiatePolicy::Strict && ens.s < ens.k)
    throw std::invalid_argument("ensemble degenerate at this n: s < k (classes not all favored)");
  if (ens.k > n)
    throw std::invalid_argument("ensemble degenerate at this n: k > n");
  if (ens.s < 1 || ens.s >= ens.d)
    throw std::invalid_argument("ensemble degenerate at this n: s out of range");

  const double d = static_cast<double>(ens.d);
  const double s = static_cast<double>(ens.s);
  ens.lambda_favored = ens.a * d / s;
  ens.lambda_unfavored = (1.0 - ens.a) * d / (d - s);
  ens.sum_lambda = s * ens.lambda_favored + (d - s) * ens.lambda_unfavored;
  ens.sum_lambda_sq = s * ens.lambda_favored * ens.lambda_favored +
                      (d - s) * ens.lambda_unfavored * ens.lambda_unfavored;
  return ens;
}

// Squared weight of feature j (1-based).
inline double weight_of(const InstantiatedEnsemble& ens, std::int64_t j) {
  if (j < 1 || j > ens.d) throw std::out_of_range("feature index out of range");
  return j <= ens.s ? ens.lambda_favored : ens.lambda_unfavored;
}

}  // namespace bilevel
