#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace bilevel {

constexpr double kBoundaryTolerance = 1e-12;

enum class RegimeStatus {
  invalid_model,
  provable_generalize,
  conjectured_generalize,
  conjectured_fail,
  boundary,
};

inline const char* to_string(RegimeStatus s) {
  switch (s) {
    case RegimeStatus::invalid_model: return "invalid_model";
    case RegimeStatus::provable_generalize: return "provable_generalize";
    case RegimeStatus::conjectured_generalize: return "conjectured_generalize";
    case RegimeStatus::conjectured_fail: return "conjectured_fail";
    case RegimeStatus::boundary: return "boundary";
  }
  return "?";
}

// One inequality with its signed margin: positive means strictly satisfied.
struct ConstraintMargin {
  std::string name;
  double margin = 0.0;
};

struct RegionResult {
  bool holds = false;
  std::vector<ConstraintMargin> binding;  // every constraint with its margin

  const ConstraintMargin& tightest() const {
    return *std::min_element(binding.begin(), binding.end(),
                             [](const auto& a, const auto& b) { return a.margin < b.margin; });
  }
};

// Provable region: t < min(r, 1-r, p+1-2(q+r), p-2, 2q+r-2) and q+r > 1,
// all strict.
inline RegionResult theorem_region(double p, double q, double r, double t) {
  RegionResult res;
  res.binding = {
      {"t<r", r - t},
      {"t<1-r", 1.0 - r - t},
      {"t<p+1-2(q+r)", p + 1.0 - 2.0 * (q + r) - t},
      {"t<p-2", p - 2.0 - t},
      {"t<2q+r-2", 2.0 * q + r - 2.0 - t},
      {"q+r>1", q + r - 1.0},
  };
  res.holds = std::all_of(res.binding.begin(), res.binding.end(),
                          [](const auto& c) { return c.margin > 0.0; });
  return res;
}

enum class ConjectureOutcome { converge_to_0, converge_to_1, boundary };

struct ConjectureResult {
  ConjectureOutcome outcome = ConjectureOutcome::boundary;
  std::vector<ConstraintMargin> binding;
  double min_margin = 0.0;
};

// Conjectured region: error -> 0 iff t < min(r, 1-r, p+1-2(q+r)), -> 1 for
// the strict reverse; exact equality (within tolerance) is reported as
// boundary rather than guessed.
inline ConjectureResult conjecture_region(double p, double q, double r, double t) {
  ConjectureResult res;
  res.binding = {
      {"t<r", r - t},
      {"t<1-r", 1.0 - r - t},
      {"t<p+1-2(q+r)", p + 1.0 - 2.0 * (q + r) - t},
  };
  res.min_margin = std::min({res.binding[0].margin, res.binding[1].margin, res.binding[2].margin});
  if (std::abs(res.min_margin) <= kBoundaryTolerance)
    res.outcome = ConjectureOutcome::boundary;
  else if (res.min_margin > 0.0)
    res.outcome = ConjectureOutcome::converge_to_0;
  else
    res.outcome = ConjectureOutcome::converge_to_1;
  return res;
}

struct SvmEquivalenceResult {
  bool equivalent = false;               // 0 < t < (q+r-1)/2
  ConstraintMargin raw_condition_1;      // q+r > 2t+1 in exponent form
  ConstraintMargin raw_condition_2;      // 2p - max(2p-2q-r, p) > 1 in exponent form
};

// Region where the SVM solution coincides with minimum-norm interpolation.
inline SvmEquivalenceResult svm_equivalence_region(double p, double q, double r, double t) {
  SvmEquivalenceResult res;
  res.equivalent = t > 0.0 && t < (q + r - 1.0) / 2.0;
  res.raw_condition_1 = {"q+r>2t+1", q + r - 2.0 * t - 1.0};
  res.raw_condition_2 = {"2p-max(2p-2q-r,p)>1",
                         2.0 * p - std::max(2.0 * p - 2.0 * q - r, p) - 1.0};
  return res;
}

// Region where generalization still holds when the training-set size is
// rescaled to keep the number of positive examples per class fixed (b = t+1).
inline RegionResult positive_examples_region(double p, double q, double r, double t) {
  RegionResult res;
  res.binding = {
      {"t<r", r - t},
      {"t<(p-2)/3", (p - 2.0) / 3.0 - t},
      {"t<(2q+r-2)/3", (2.0 * q + r - 2.0) / 3.0 - t},
      {"r<1", 1.0 - r},
      {"p+1>2(q+r)", p + 1.0 - 2.0 * (q + r)},
      {"t<q+r-1", q + r - 1.0 - t},
      {"t<p-1", p - 1.0 - t},
  };
  res.holds = std::all_of(res.binding.begin(), res.binding.end(),
                          [](const auto& c) { return c.margin > 0.0; });
  return res;
}

// Growth exponent v of the SU/CN ratio in the provable region; positive v
// predicts a positive log-log slope of SU/CN against n.
inline double slope_prediction(double p, double q, double r, double t) {
  double correction = std::max({0.0, 1.5 - q - r, 0.5 * p - q - 0.5 * r, 1.5 - 2.0 * q - 1.5 * r});
  return 0.5 * (p + 1.0) - q - r - 0.5 * t - correction;
}

struct RegimeVerdict {
  double p = 0.0, q = 0.0, r = 0.0, t = 0.0;
  RegimeStatus status = RegimeStatus::invalid_model;
  std::vector<ConstraintMargin> binding;
  bool svm_equivalent = false;
  bool regression_fails = false;  // q+r > 1
  double slope = 0.0;             // predicted SU/CN growth exponent
};

inline RegimeVerdict classify_point(double p, double q, double r, double t) {
  RegimeVerdict v;
  v.p = p;
  v.q = q;
  v.r = r;
  v.t = t;
  v.svm_equivalent = svm_equivalence_region(p, q, r, t).equivalent;
  v.regression_fails = q + r > 1.0;
  v.slope = slope_prediction(p, q, r, t);

  bool model_ok = p > 1.0 && r >= 0.0 && r < 1.0 && q > 0.0 && q < p - r && t >= 0.0 && t < r;
  ConjectureResult conj = conjecture_region(p, q, r, t);
  RegionResult thm = theorem_region(p, q, r, t);
  v.binding = conj.binding;
  v.binding.push_back({"q+r>1", q + r - 1.0});

  if (!model_ok)
    v.status = RegimeStatus::invalid_model;
  else if (conj.outcome == ConjectureOutcome::boundary)
    v.status = RegimeStatus::boundary;
  else if (conj.outcome == ConjectureOutcome::converge_to_1)
    v.status = RegimeStatus::conjectured_fail;
  else
    v.status = thm.holds ? RegimeStatus::provable_generalize
                         : RegimeStatus::conjectured_generalize;
  return v;
}

struct GridAxis {
  double lo = 0.0;
  double hi = 0.0;
  double step = 0.0;

  std::int64_t count() const {
    if (step <= 0.0 || hi < lo) throw std::invalid_argument("bad grid axis");
    return static_cast<std::int64_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  }
  double at(std::int64_t i) const { return lo + static_cast<double>(i) * step; }
};

// Figure-2-style (r, t) slice at fixed (p, q), row-major in t then r.
inline std::vector<RegimeVerdict> regime_map(double p, double q, const GridAxis& r_axis,
                                             const GridAxis& t_axis) {
  std::vector<RegimeVerdict> grid;
  grid.reserve(static_cast<std::size_t>(r_axis.count() * t_axis.count()));
  for (std::int64_t ti = 0; ti < t_axis.count(); ++ti)
    for (std::int64_t ri = 0; ri < r_axis.count(); ++ri)
      grid.push_back(classify_point(p, q, r_axis.at(ri), t_axis.at(ti)));
  return grid;
}

}  // namespace bilevel
