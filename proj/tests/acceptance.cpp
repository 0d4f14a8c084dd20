// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failures. Criterion 12 drives the installed CLI binary (path injected at
// compile time via BILEVEL_CLI_PATH).

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "bilevel/dense_oracle.hpp"
#include "bilevel/diagnostics.hpp"
#include "bilevel/experiments.hpp"
#include "bilevel/regimes.hpp"

using namespace bilevel;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

void report(int index, const char* name, bool pass, const std::string& detail, double seconds) {
  std::printf("criterion %2d %-24s %s (%s, %.1fs)\n", index, name, pass ? "PASS" : "FAIL",
              detail.c_str(), seconds);
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double elapsed() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Random valid fixed-k instance with n in [n_lo, n_hi] and d <= d_max.
InstantiatedEnsemble random_instance(std::mt19937_64& rng, std::int64_t n_lo, std::int64_t n_hi,
                                     std::int64_t d_max) {
  for (;;) {
    std::int64_t n =
        n_lo + static_cast<std::int64_t>(rng() % static_cast<std::uint64_t>(n_hi - n_lo + 1));
    double p_max = std::log(static_cast<double>(d_max)) / std::log(static_cast<double>(n));
    double p = uniform(rng, 1.15, std::min(2.5, p_max));
    double r = uniform(rng, std::log(2.5) / std::log(static_cast<double>(n)), 0.9);
    double q = uniform(rng, 0.05, std::min(0.9 * (p - r), 1.2));
    try {
      return instantiate({p, q, r, 0.0, 2}, n);
    } catch (const std::invalid_argument&) {
    }
  }
}

// 1. Interpolation: A w_m reproduces the zero-mean encodings.
void criterion_interpolation() {
  Timer timer;
  std::mt19937_64 rng(101);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    InstantiatedEnsemble ens = random_instance(rng, 20, 200, 20000);
    MniClassifier clf = fit(sample_training_set(ens, mix64(1000 + i)));
    double resid = (clf.gram.A * clf.dual - clf.encoding.zero_mean).cwiseAbs().maxCoeff();
    worst = std::max(worst, resid);
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "max residual %.3g", worst);
  report(1, "interpolation", worst <= 1e-6, buf, timer.elapsed());
}

// 2. Streamed pipeline vs dense pseudoinverse oracle.
void criterion_oracle() {
  Timer timer;
  OracleCheckResult res = oracle_crosscheck(25, 202);
  char buf[80];
  std::snprintf(buf, sizeof(buf), "max deviation %.3g over %lld instances", res.max_deviation,
                static_cast<long long>(res.instances));
  report(2, "oracle-equivalence", res.pass && res.max_deviation <= 1e-8, buf, timer.elapsed());
}

// 3. Total mass: sum of lambda equals d.
void criterion_total_mass() {
  Timer timer;
  std::mt19937_64 rng(303);
  double worst = 0.0;
  int done = 0;
  while (done < 1000) {
    std::int64_t n = 10 + static_cast<std::int64_t>(rng() % 9991);
    double p = uniform(rng, 1.05, 3.0);
    double r = uniform(rng, 0.0, 0.95);
    double q = uniform(rng, 0.01, std::max(0.02, p - r - 0.01));
    double t = uniform(rng, 0.0, std::max(0.0, r - 0.01));
    EnsembleExponents e{p, q, r, t, 2};
    if (!validate(e).ok()) continue;
    InstantiatedEnsemble ens;
    try {
      ens = instantiate(e, n, InstantiatePolicy::Relaxed);
    } catch (const std::invalid_argument&) {
      continue;
    }
    worst = std::max(worst,
                     std::abs(ens.sum_lambda - static_cast<double>(ens.d)) /
                         static_cast<double>(ens.d));
    ++done;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "max relative deviation %.3g", worst);
  report(3, "total-mass", worst <= 1e-9, buf, timer.elapsed());
}

// 4. Eigenvalue sandwich at the reference configuration.
void criterion_eigen_sandwich() {
  Timer timer;
  InstantiatedEnsemble ens = instantiate({2.3, 0.75, 0.6, 0.0, 3}, 100);
  int pass_count = 0;
  for (int seed = 0; seed < 100; ++seed) {
    TrainingSet ts = sample_training_set(ens, mix64(400 + seed));
    GramMatrix gram = build_gram(ts);
    if (eigen_check(ts, gram).sandwich_ok) ++pass_count;
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%d/100 trials inside the sandwich", pass_count);
  report(4, "eigen-sandwich", pass_count >= 99, buf, timer.elapsed());
}

ExperimentConfig sweep_config(double t, std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.exponents = {2.3, 0.75, 0.6, t, 3};
  cfg.n_list = {50, 100, 200};
  cfg.trials_per_n = 20;
  cfg.test_points_per_trial = 2000;
  cfg.master_seed = seed;
  cfg.threads = 1;
  return cfg;
}

// 5 and 7 share the success-region sweep.
ExperimentReport criterion_success_trend() {
  Timer timer;
  ExperimentReport report_data = run_sweep(sweep_config(0.0, 505));
  TrendTest tt = trend_test(report_data);
  std::ostringstream detail;
  detail << "rates";
  for (const auto& row : report_data.rows) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), " %.4f", row.error_rate);
    detail << buf;
  }
  detail << (tt.monotone_decreasing ? ", monotone" : ", not monotone")
         << (tt.separated_extremes ? ", extremes separated" : ", extremes overlap");
  report(5, "success-trend", tt.pass, detail.str(), timer.elapsed());
  return report_data;
}

// 6. Failure region: error stays at or above the pilot-calibrated 0.5 floor
// and does not significantly decrease from the smallest to the largest n.
void criterion_failure_region() {
  Timer timer;
  ExperimentReport rep = run_sweep(sweep_config(0.5, 606));
  bool floor_ok = true;
  std::ostringstream detail;
  detail << "rates";
  for (const auto& row : rep.rows) {
    if (row.error_rate < 0.5) floor_ok = false;
    char buf[32];
    std::snprintf(buf, sizeof(buf), " %.4f", row.error_rate);
    detail << buf;
  }
  bool no_significant_decrease = !(rep.rows.back().ci_high < rep.rows.front().ci_low);
  detail << (floor_ok ? ", floor held" : ", floor broken")
         << (no_significant_decrease ? ", no significant decrease" : ", significant decrease");
  report(6, "failure-region", floor_ok && no_significant_decrease, detail.str(), timer.elapsed());
}

// 7. SU/CN log-log slope against n is significantly positive.
void criterion_su_cn_slope(const ExperimentReport& success) {
  Timer timer;
  std::vector<double> means;
  for (const auto& row : success.rows) means.push_back(row.mean_su_cn);
  SlopeEstimate est = slope_estimate({50, 100, 200}, means);
  double predicted = slope_prediction(2.3, 0.75, 0.6, 0.0);
  bool pass = predicted > 0.0 && est.slope > 0.0 && std::abs(est.slope) > 2.0 * est.std_error;
  char buf[96];
  std::snprintf(buf, sizeof(buf), "slope %.4f +- %.4f, predicted exponent %.4f", est.slope,
                est.std_error, predicted);
  report(7, "su-cn-slope", pass, buf, timer.elapsed());
}

// 8. Max-of-k Gaussian bracket.
void criterion_max_gaussian() {
  Timer timer;
  bool pass = true;
  std::ostringstream detail;
  for (std::int64_t k : {4, 16, 64}) {
    ProbeResult pr = max_gaussian_probe(k, 100000, 800 + static_cast<std::uint64_t>(k));
    bool inside = pr.within_3se && pr.empirical_mean >= pr.lower_bound &&
                  pr.empirical_mean <= pr.upper_bound;
    if (!inside) pass = false;
    char buf[48];
    std::snprintf(buf, sizeof(buf), " k=%lld:%s", static_cast<long long>(k),
                  inside ? "in" : "OUT");
    detail << buf;
  }
  report(8, "max-gaussian-bracket", pass, "bracket" + detail.str(), timer.elapsed());
}

// 9. Encoding concentration at n=1000, k=10, delta=0.5.
void criterion_encoding_concentration() {
  Timer timer;
  InstantiatedEnsemble ens = instantiate({2.0, 0.5, 0.5, 0.0, 10}, 1000);
  int within = 0;
  for (int seed = 0; seed < 1000; ++seed) {
    TrainingSet ts = sample_training_set(ens, mix64(900 + seed));
    if (encoding_concentration(ts, 1, 2).within) ++within;
  }
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%d/1000 seeds within", within);
  report(9, "encoding-concentration", within >= 950, buf, timer.elapsed());
}

// 10. Margin scaling: median margin times sqrt(2 ln k) is order one.
void criterion_margin_scaling() {
  Timer timer;
  bool pass = true;
  std::ostringstream detail;
  for (std::int64_t k : {8, 64, 512}) {
    NormalStream stream(mix64(1000 + static_cast<std::uint64_t>(k)));
    const std::int64_t samples = 100000;
    std::vector<double> margins;
    margins.reserve(samples);
    Eigen::VectorXd x(k);
    for (std::int64_t i = 0; i < samples; ++i) {
      for (std::int64_t j = 0; j < k; ++j) x[j] = stream.next();
      margins.push_back(margin_sample(x).closest_margin);
    }
    std::nth_element(margins.begin(), margins.begin() + samples / 2, margins.end());
    double scaled = margins[samples / 2] * std::sqrt(2.0 * std::log(static_cast<double>(k)));
    if (!(scaled >= 0.1 && scaled <= 10.0)) pass = false;
    char buf[48];
    std::snprintf(buf, sizeof(buf), " k=%lld:%.3f", static_cast<long long>(k), scaled);
    detail << buf;
  }
  report(10, "margin-scaling", pass, "scaled medians" + detail.str(), timer.elapsed());
}

// 11. Regime oracle: hand table plus the theorem-implies-conjecture subset.
void criterion_regime_oracle() {
  Timer timer;
  struct Row {
    double p, q, r, t;
    RegimeStatus status;
  };
  const Row table[] = {
      {2.3, 0.75, 0.6, 0.05, RegimeStatus::provable_generalize},
      {2.3, 0.75, 0.6, 0.15, RegimeStatus::conjectured_generalize},
      {2.3, 0.75, 0.6, 0.45, RegimeStatus::conjectured_fail},
      {2.3, 0.75, 0.6, 0.4, RegimeStatus::boundary},
      {2.3, 0.75, 0.2, 0.1, RegimeStatus::conjectured_generalize},
      {3.7, 0.95, 0.8, 0.1, RegimeStatus::provable_generalize},
      {3.7, 0.95, 0.8, 0.3, RegimeStatus::conjectured_fail},
      {1.0, 0.5, 0.5, 0.0, RegimeStatus::invalid_model},
      {2.0, 2.0, 0.5, 0.0, RegimeStatus::invalid_model},
      {2.5, 0.5, 0.5, 0.6, RegimeStatus::invalid_model},
      {2.0, 0.3, 0.5, 0.1, RegimeStatus::conjectured_generalize},
      {3.7, 0.95, 0.8, 0.0, RegimeStatus::provable_generalize},
  };
  int table_mismatches = 0;
  for (const auto& row : table)
    if (classify_point(row.p, row.q, row.r, row.t).status != row.status) ++table_mismatches;

  std::mt19937_64 rng(1111);
  int subset_violations = 0;
  for (int i = 0; i < 200 * 200; ++i) {
    double p = uniform(rng, 1.0, 4.5), q = uniform(rng, 0.0, 2.0);
    double r = uniform(rng, 0.0, 1.0), t = uniform(rng, 0.0, 1.0);
    if (theorem_region(p, q, r, t).holds &&
        conjecture_region(p, q, r, t).outcome != ConjectureOutcome::converge_to_0)
      ++subset_violations;
  }
  char buf[96];
  std::snprintf(buf, sizeof(buf), "%d table mismatches, %d subset violations on 40000 samples",
                table_mismatches, subset_violations);
  report(11, "regime-oracle", table_mismatches == 0 && subset_violations == 0, buf,
         timer.elapsed());
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// 12. Byte-identical CLI outputs across reruns and worker counts.
void criterion_determinism() {
  Timer timer;
  fs::path root = fs::temp_directory_path() / "bilevel_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string cli = BILEVEL_CLI_PATH;
  const std::string sweep_args =
      " sweep --p 1.6 --q 0.4 --r 0.55 --t 0 --c-k 2 --n-list 20,30,40 --trials 3"
      " --test-points 200 --seed 77 --block-size 64";
  const std::string diag_args =
      " diagnose --p 1.6 --q 0.3 --r 0.65 --t 0 --c-k 3 --n 24 --seed 5 --probe-trials 100";

  bool ran_ok = true;
  auto run = [&](const std::string& args, const std::string& dir) {
    std::string command = cli + args + " --out " + (root / dir).string() + " > /dev/null";
    if (std::system(command.c_str()) != 0) ran_ok = false;
  };
  run(sweep_args + " --threads 1", "s1");
  run(sweep_args + " --threads 2", "s2");
  run(sweep_args + " --threads 8", "s8");
  run(sweep_args + " --threads 1", "s1b");
  run(diag_args + " --threads 1", "d1");
  run(diag_args + " --threads 2", "d2");
  run(diag_args + " --threads 8", "d8");
  run(diag_args + " --threads 1", "d1b");

  std::string s1 = slurp(root / "s1/sweep.csv");
  bool sweep_ok = !s1.empty() && s1 == slurp(root / "s2/sweep.csv") &&
                  s1 == slurp(root / "s8/sweep.csv") && s1 == slurp(root / "s1b/sweep.csv");
  std::string d1 = slurp(root / "d1/diagnose.csv") + slurp(root / "d1/probes.json");
  bool diag_ok = !d1.empty() &&
                 d1 == slurp(root / "d2/diagnose.csv") + slurp(root / "d2/probes.json") &&
                 d1 == slurp(root / "d8/diagnose.csv") + slurp(root / "d8/probes.json") &&
                 d1 == slurp(root / "d1b/diagnose.csv") + slurp(root / "d1b/probes.json");
  std::string detail = std::string("sweep ") + (sweep_ok ? "identical" : "DIFFERS") +
                       ", diagnose " + (diag_ok ? "identical" : "DIFFERS");
  if (!ran_ok) detail += ", CLI invocation failed";
  report(12, "determinism", ran_ok && sweep_ok && diag_ok, detail, timer.elapsed());
  fs::remove_all(root);
}

}  // namespace

int main() {
  criterion_interpolation();
  criterion_oracle();
  criterion_total_mass();
  criterion_eigen_sandwich();
  ExperimentReport success = criterion_success_trend();
  criterion_failure_region();
  criterion_su_cn_slope(success);
  criterion_max_gaussian();
  criterion_encoding_concentration();
  criterion_margin_scaling();
  criterion_regime_oracle();
  criterion_determinism();
  std::printf("%s: %d of 12 criteria failed\n", g_failures == 0 ? "ACCEPTED" : "REJECTED",
              g_failures);
  return g_failures;
}
