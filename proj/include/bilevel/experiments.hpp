#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "bilevel/dense_oracle.hpp"
#include "bilevel/diagnostics.hpp"
#include "bilevel/interpolator.hpp"

namespace bilevel {

inline constexpr const char* kCodeVersion = "0.1.0";

struct ExperimentConfig {
  EnsembleExponents exponents;
  std::vector<std::int64_t> n_list;
  std::int64_t trials_per_n = 10;
  std::int64_t test_points_per_trial = 1000;
  std::uint64_t master_seed = 0;
  double confidence = 0.95;
  std::int64_t block_size = kDefaultBlockSize;
  int threads = 1;

  void check() const {
    if (n_list.empty()) throw std::invalid_argument("n_list must be nonempty");
    for (std::size_t i = 1; i < n_list.size(); ++i)
      if (n_list[i] <= n_list[i - 1])
        throw std::invalid_argument("n_list must be strictly increasing");
    if (trials_per_n < 1) throw std::invalid_argument("trials_per_n >= 1 required");
    if (test_points_per_trial < 100)
      throw std::invalid_argument("test_points_per_trial >= 100 required");
    if (!(confidence > 0.0 && confidence < 1.0))
      throw std::invalid_argument("confidence in (0,1) required");
  }
};

struct WilsonInterval {
  double low = 0.0;
  double high = 1.0;
};

// Wilson score interval; stable when the error count is near 0 or n.
inline WilsonInterval wilson_interval(std::int64_t successes, std::int64_t total,
                                      double confidence) {
  double z = inverse_normal_cdf(0.5 + confidence / 2.0);
  double n = static_cast<double>(total);
  double p = static_cast<double>(successes) / n;
  double z2 = z * z;
  double denom = 1.0 + z2 / n;
  double center = (p + z2 / (2.0 * n)) / denom;
  double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

struct SweepRow {
  std::int64_t n = 0, d = 0, s = 0, k = 0;
  std::int64_t trials = 0;
  std::int64_t test_points = 0;
  std::int64_t error_count = 0;
  double error_rate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double mean_su_cn = 0.0;
  double mean_margin = 0.0;
  double eigen_pass_rate = 0.0;
};

struct ExperimentReport {
  std::vector<SweepRow> rows;
  std::uint64_t master_seed = 0;
  std::uint64_t config_hash = 0;
  std::string code_version = kCodeVersion;
};

namespace detail {

struct TrialResult {
  std::int64_t errors = 0;
  double su_cn_mean = 0.0;
  double margin_mean = 0.0;
  bool eigen_ok = false;
  bool eigen_computed = false;
};

constexpr std::int64_t kTestChunk = 4096;

// One Monte Carlo trial: fresh training set, fit, eigen check, then a single
// fused streamed pass computing both the test-score accumulator and the
// contamination sums for all class pairs.
inline TrialResult run_trial(const InstantiatedEnsemble& ens, std::uint64_t seed,
                             std::int64_t test_points, std::int64_t block_size) {
  TrialResult res;
  TrainingSet ts = sample_training_set(ens, mix64(seed ^ 1), block_size);
  MniClassifier clf = fit(std::move(ts));

  if (ens.n <= 500) {
    res.eigen_ok = eigen_check(clf.training, clf.gram).sandwich_ok;
    res.eigen_computed = true;
  }

  Eigen::VectorXd su_cn = su_cn_summary(clf);
  res.su_cn_mean = su_cn.mean();

  double margin_sum = 0.0;
  for (std::int64_t start = 0; start < test_points; start += kTestChunk) {
    std::int64_t count = std::min(kTestChunk, test_points - start);
    std::uint64_t chunk_seed = mix64(mix64(seed ^ 2) ^ static_cast<std::uint64_t>(start));
    TestBatch batch = sample_test_batch(ens, chunk_seed, count, block_size);
    std::vector<std::int64_t> predicted = predict_batch(clf, batch);
    for (std::int64_t i = 0; i < count; ++i) {
      if (predicted[static_cast<std::size_t>(i)] != batch.labels[static_cast<std::size_t>(i)])
        ++res.errors;
      margin_sum += margin_sample(batch.first_k.row(i).transpose()).closest_margin;
    }
  }
  res.margin_mean = margin_sum / static_cast<double>(test_points);
  return res;
}

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t config_hash(const ExperimentConfig& cfg) {
  std::string s;
  char buf[64];
  auto add = [&](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g;", v);
    s += buf;
  };
  add(cfg.exponents.p);
  add(cfg.exponents.q);
  add(cfg.exponents.r);
  add(cfg.exponents.t);
  add(static_cast<double>(cfg.exponents.c_k));
  for (auto n : cfg.n_list) add(static_cast<double>(n));
  add(static_cast<double>(cfg.trials_per_n));
  add(static_cast<double>(cfg.test_points_per_trial));
  add(static_cast<double>(cfg.master_seed));
  add(cfg.confidence);
  return fnv1a64(s);
}

}  // namespace detail

// Seeded sweep over n. Trials are independent work units scheduled over
// `cfg.threads` workers; each trial's seed depends only on
// (master_seed, n, trial_index) and results aggregate in (n, trial) order,
// so the report is identical for any worker count.
inline ExperimentReport run_sweep(const ExperimentConfig& cfg) {
  cfg.check();
  ValidityReport validity = validate(cfg.exponents);
  if (!validity.ok()) throw std::invalid_argument("run_sweep: invalid exponents");

  std::vector<InstantiatedEnsemble> ensembles;
  for (std::int64_t n : cfg.n_list)
    ensembles.push_back(instantiate(cfg.exponents, n, InstantiatePolicy::Relaxed));

  struct Task {
    std::size_t n_index;
    std::int64_t trial;
  };
  std::vector<Task> tasks;
  for (std::size_t ni = 0; ni < ensembles.size(); ++ni)
    for (std::int64_t trial = 0; trial < cfg.trials_per_n; ++trial) tasks.push_back({ni, trial});

  std::vector<detail::TrialResult> results(tasks.size());
  std::vector<std::string> failures(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& task = tasks[i];
      std::uint64_t seed =
          trial_seed(cfg.master_seed, cfg.n_list[task.n_index], task.trial);
      try {
        results[i] = detail::run_trial(ensembles[task.n_index], seed,
                                       cfg.test_points_per_trial, cfg.block_size);
      } catch (const std::exception& e) {
        failures[i] = "(n=" + std::to_string(cfg.n_list[task.n_index]) +
                      ", trial=" + std::to_string(task.trial) + "): " + e.what();
      }
    }
  };

  int workers = std::max(1, cfg.threads);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  // A failed trial aborts the sweep; skipping would bias the estimates.
  for (const auto& f : failures)
    if (!f.empty()) throw std::runtime_error("sweep trial failed " + f);

  ExperimentReport report;
  report.master_seed = cfg.master_seed;
  report.config_hash = detail::config_hash(cfg);
  for (std::size_t ni = 0; ni < ensembles.size(); ++ni) {
    const auto& ens = ensembles[ni];
    SweepRow row;
    row.n = ens.n;
    row.d = ens.d;
    row.s = ens.s;
    row.k = ens.k;
    row.trials = cfg.trials_per_n;
    row.test_points = cfg.test_points_per_trial;
    double su_sum = 0.0, margin_sum = 0.0;
    std::int64_t eigen_pass = 0, eigen_total = 0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      if (tasks[i].n_index != ni) continue;
      row.error_count += results[i].errors;
      su_sum += results[i].su_cn_mean;
      margin_sum += results[i].margin_mean;
      if (results[i].eigen_computed) {
        ++eigen_total;
        if (results[i].eigen_ok) ++eigen_pass;
      }
    }
    std::int64_t total = row.trials * row.test_points;
    row.error_rate = static_cast<double>(row.error_count) / static_cast<double>(total);
    WilsonInterval ci = wilson_interval(row.error_count, total, cfg.confidence);
    row.ci_low = ci.low;
    row.ci_high = ci.high;
    row.mean_su_cn = su_sum / static_cast<double>(row.trials);
    row.mean_margin = margin_sum / static_cast<double>(row.trials);
    row.eigen_pass_rate = eigen_total > 0
                              ? static_cast<double>(eigen_pass) / static_cast<double>(eigen_total)
                              : 0.0;
    report.rows.push_back(row);
  }
  return report;
}

struct TrendTest {
  bool monotone_decreasing = false;
  bool separated_extremes = false;
  bool pass = false;
};

// Finite-n stand-in for the asymptotic claim: point estimates nonincreasing
// in n and the widest-n interval entirely below the smallest-n interval.
inline TrendTest trend_test(const ExperimentReport& report) {
  if (report.rows.size() < 2) throw std::invalid_argument("trend_test needs >= 2 rows");
  TrendTest tt;
  tt.monotone_decreasing = true;
  for (std::size_t i = 1; i < report.rows.size(); ++i)
    if (report.rows[i].error_rate > report.rows[i - 1].error_rate)
      tt.monotone_decreasing = false;
  tt.separated_extremes = report.rows.back().ci_high < report.rows.front().ci_low;
  tt.pass = tt.monotone_decreasing && tt.separated_extremes;
  return tt;
}

struct SlopeEstimate {
  double slope = 0.0;
  double std_error = 0.0;
};

// Least-squares slope of ln(value) against ln(n).
inline SlopeEstimate slope_estimate(const std::vector<std::int64_t>& ns,
                                    const std::vector<double>& values) {
  if (ns.size() != values.size() || ns.size() < 2)
    throw std::invalid_argument("slope_estimate needs >= 2 matching points");
  const std::size_t m = ns.size();
  double sx = 0.0, sy = 0.0;
  std::vector<double> xs(m), ys(m);
  for (std::size_t i = 0; i < m; ++i) {
    if (values[i] <= 0.0) throw std::invalid_argument("slope_estimate needs positive values");
    xs[i] = std::log(static_cast<double>(ns[i]));
    ys[i] = std::log(values[i]);
    sx += xs[i];
    sy += ys[i];
  }
  double mx = sx / m, my = sy / m;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  SlopeEstimate est;
  est.slope = sxy / sxx;
  if (m > 2) {
    double sse = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      double resid = ys[i] - my - est.slope * (xs[i] - mx);
      sse += resid * resid;
    }
    est.std_error = std::sqrt(sse / (static_cast<double>(m) - 2.0) / sxx);
  }
  return est;
}

struct OracleCheckResult {
  double max_deviation = 0.0;
  std::int64_t instances = 0;
  std::string worst_quantity;
  bool pass = false;
};

namespace detail {
inline double matrix_deviation(const Eigen::MatrixXd& got, const Eigen::MatrixXd& want) {
  double scale = std::max(want.cwiseAbs().maxCoeff(), 1e-300);
  return (got - want).cwiseAbs().maxCoeff() / scale;
}
inline double scalar_deviation(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}
}  // namespace detail

// Cross-checks the streamed pipeline against the dense pseudoinverse oracle
// on small random instances. `perturbation`, when nonzero, is injected into
// the streamed primal coefficients as a negative control.
inline OracleCheckResult oracle_crosscheck(std::int64_t instances, std::uint64_t seed,
                                           std::int64_t max_n = 20, std::int64_t max_d = 200,
                                           double tolerance = 1e-8, double perturbation = 0.0) {
  OracleCheckResult res;
  res.instances = instances;
  std::mt19937_64 rng(mix64(seed));
  auto uniform = [&](double lo, double hi) {
    return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
  };

  auto note = [&](double dev, const char* what) {
    if (dev > res.max_deviation) {
      res.max_deviation = dev;
      res.worst_quantity = what;
    }
  };

  for (std::int64_t inst = 0; inst < instances; ++inst) {
    // Random small valid instance with d <= max_d and k <= s.
    std::int64_t n = 8 + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(max_n - 7));
    double p_max = std::log(static_cast<double>(max_d)) / std::log(static_cast<double>(n));
    double p = uniform(1.15, std::min(2.5, p_max));
    double r = uniform(std::log(2.5) / std::log(static_cast<double>(n)), 0.9);
    double q = uniform(0.05, std::min(0.9 * (p - r), 1.2));
    EnsembleExponents exp{p, q, r, 0.0, 2};
    InstantiatedEnsemble ens;
    try {
      ens = instantiate(exp, n);
    } catch (const std::invalid_argument&) {
      --inst;  // degenerate draw, resample
      continue;
    }

    TrainingSet ts = sample_training_set(ens, mix64(seed ^ (0x5bd1e995ULL + inst)), 16);
    MniClassifier clf = fit(ts);
    DenseOracle oracle(ts);

    Eigen::MatrixXd primal = primal_coefficients(clf, 1, ens.d + 1);
    if (perturbation != 0.0) primal(0, 0) += perturbation;
    note(detail::matrix_deviation(primal, oracle.primal()), "primal");

    std::uint64_t test_seed = mix64(seed ^ (0xdeadbeefULL + inst));
    for (std::int64_t i = 0; i < 3; ++i) {
      auto [x, label] = sample_test_point(ens, test_seed, i);
      (void)label;
      note(detail::matrix_deviation(score(clf, x), oracle.score(x)), "score");
    }
    for (std::int64_t a = 1; a <= ens.k; ++a)
      for (std::int64_t b = 1; b <= ens.k; ++b) {
        if (a == b) continue;
        note(detail::scalar_deviation(relative_survival(clf, a, b), oracle.survival(a, b)),
             "survival");
        note(detail::scalar_deviation(contamination(clf, a, b), oracle.contamination(a, b)),
             "contamination");
      }
  }
  res.pass = res.max_deviation <= tolerance;
  return res;
}

}  // namespace bilevel
