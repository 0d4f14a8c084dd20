// Command-line surface for the bi-level interpolation toolkit.
//
// Commands: regime-map, simulate, sweep, diagnose, oracle-check.
// Every run writes its outputs plus a manifest.json with content digests.
// Exit codes: 0 success, 1 numerical failure, 2 configuration error.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bilevel/diagnostics.hpp"
#include "bilevel/experiments.hpp"
#include "bilevel/regimes.hpp"

namespace fs = std::filesystem;
using namespace bilevel;

namespace {

// 17 significant digits: round-trip exact for IEEE doubles.
std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string iso8601_now() {
  std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

// Collects output files and their digests for the manifest.
struct RunOutputs {
  fs::path dir;
  std::vector<std::pair<std::string, std::uint64_t>> files;

  void write(const std::string& name, const std::string& content) {
    fs::create_directories(dir);
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << content;
    files.emplace_back(name, detail::fnv1a64(content));
  }
};

void write_manifest(RunOutputs& outputs, const std::string& command,
                    const std::map<std::string, std::string>& resolved, std::uint64_t seed,
                    const std::string& started) {
  std::ostringstream j;
  j << "{\n";
  j << "  \"command\": \"" << json_escape(command) << "\",\n";
  j << "  \"code_version\": \"" << kCodeVersion << "\",\n";
  j << "  \"seed\": " << seed << ",\n";
  j << "  \"started_at\": \"" << started << "\",\n";
  j << "  \"finished_at\": \"" << iso8601_now() << "\",\n";
  j << "  \"config\": {\n";
  std::size_t i = 0;
  for (const auto& [k, v] : resolved) {
    j << "    \"" << json_escape(k) << "\": \"" << json_escape(v) << "\"";
    j << (++i < resolved.size() ? ",\n" : "\n");
  }
  j << "  },\n";
  j << "  \"outputs\": [\n";
  for (std::size_t f = 0; f < outputs.files.size(); ++f) {
    char hex[24];
    std::snprintf(hex, sizeof(hex), "%016llx",
                  static_cast<unsigned long long>(outputs.files[f].second));
    j << "    {\"file\": \"" << json_escape(outputs.files[f].first) << "\", \"fnv1a64\": \"" << hex
      << "\"}" << (f + 1 < outputs.files.size() ? ",\n" : "\n");
  }
  j << "  ]\n}\n";
  outputs.write("manifest.json", j.str());
}

// Flat `key = value` config file; '#' starts a comment.
std::map<std::string, std::string> load_config(const std::string& path) {
  std::map<std::string, std::string> cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config file: " + path);
  std::string line;
  auto trim = [](std::string s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
  };
  while (std::getline(in, line)) {
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (!key.empty()) cfg[key] = value;
  }
  return cfg;
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream in(text);
  T v{};
  in >> v;
  if (in.fail()) throw std::invalid_argument("bad value for key " + key + ": " + text);
  return v;
}

template <>
std::string parse_value<std::string>(const std::string&, const std::string& text) {
  return text;
}

// Precedence: command-line flag, then config file, then the built-in default.
// `required` keys must come from one of the first two.
template <typename T>
void resolve(CLI::App* cmd, const std::string& flag, const std::map<std::string, std::string>& cfg,
             const std::string& key, T& var, bool required = false) {
  if (cmd->count(flag) > 0) return;
  auto it = cfg.find(key);
  if (it != cfg.end()) {
    var = parse_value<T>(key, it->second);
    return;
  }
  if (required) throw std::invalid_argument("missing required key: " + key);
}

std::vector<std::int64_t> parse_int_list(const std::string& text) {
  std::vector<std::int64_t> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(parse_value<std::int64_t>("list entry", item));
  if (out.empty()) throw std::invalid_argument("empty integer list: " + text);
  return out;
}

// "lo:hi:step" grid spec; a bare number is a single-point axis.
GridAxis parse_axis(const std::string& key, const std::string& text) {
  GridAxis axis;
  if (text.find(':') == std::string::npos) {
    axis.lo = axis.hi = parse_value<double>(key, text);
    axis.step = 1.0;
    return axis;
  }
  std::stringstream in(text);
  std::string part;
  std::vector<double> parts;
  while (std::getline(in, part, ':')) parts.push_back(parse_value<double>(key, part));
  if (parts.size() != 3) throw std::invalid_argument("axis must be lo:hi:step: " + text);
  axis.lo = parts[0];
  axis.hi = parts[1];
  axis.step = parts[2];
  axis.count();  // validates
  return axis;
}

// Shared flag state; defaults resolved from environment where documented.
struct GlobalFlags {
  std::uint64_t seed = 0;
  int threads = 1;
  std::int64_t block_size = kDefaultBlockSize;
  std::string out = ".";
  std::string config;
  std::string format = "csv";
  bool svg = false;

  void attach(CLI::App* cmd) {
    if (const char* env = std::getenv("BILEVEL_MNI_THREADS")) {
      try {
        threads = std::stoi(env);
      } catch (...) {
        throw std::invalid_argument("BILEVEL_MNI_THREADS is not an integer");
      }
    }
    cmd->add_option("--seed", seed, "master seed (64-bit)");
    cmd->add_option("--threads", threads, "worker threads");
    cmd->add_option("--block-size", block_size, "feature streaming block size");
    cmd->add_option("--out", out, "output directory");
    cmd->add_option("--config", config, "flat key = value config file");
    cmd->add_option("--format", format, "csv|json")
        ->check(CLI::IsMember({"csv", "json"}));
    cmd->add_flag("--svg", svg, "also emit an SVG plot where supported");
  }

  void resolve_from(CLI::App* cmd, const std::map<std::string, std::string>& cfg) {
    resolve(cmd, "--seed", cfg, "seed", seed);
    resolve(cmd, "--threads", cfg, "threads", threads);
    resolve(cmd, "--block-size", cfg, "block-size", block_size);
    resolve(cmd, "--out", cfg, "out", out);
    resolve(cmd, "--format", cfg, "format", format);
    if (cmd->count("--svg") == 0 && cfg.count("svg")) svg = cfg.at("svg") == "true";
    if (block_size < 1) throw std::invalid_argument("block-size must be positive");
    if (threads < 1) throw std::invalid_argument("threads must be positive");
  }

  std::map<std::string, std::string> as_map() const {
    return {{"seed", std::to_string(seed)},       {"threads", std::to_string(threads)},
            {"block-size", std::to_string(block_size)}, {"out", out},
            {"format", format},                   {"svg", svg ? "true" : "false"}};
  }
};

const char* status_color(RegimeStatus s) {
  switch (s) {
    case RegimeStatus::invalid_model: return "#cccccc";
    case RegimeStatus::provable_generalize: return "#1a9850";
    case RegimeStatus::conjectured_generalize: return "#a6d96a";
    case RegimeStatus::conjectured_fail: return "#d73027";
    case RegimeStatus::boundary: return "#fee08b";
  }
  return "#000000";
}

std::string regime_map_svg(const std::vector<RegimeVerdict>& grid, const GridAxis& r_axis,
                           const GridAxis& t_axis) {
  const std::int64_t rc = r_axis.count();
  const std::int64_t tc = t_axis.count();
  const double size = 640.0, margin = 40.0;
  const double cw = size / static_cast<double>(rc);
  const double ch = size / static_cast<double>(tc);
  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size + 2 * margin
      << "\" height=\"" << size + 2 * margin << "\">\n";
  for (std::int64_t ti = 0; ti < tc; ++ti)
    for (std::int64_t ri = 0; ri < rc; ++ri) {
      const auto& cell = grid[static_cast<std::size_t>(ti * rc + ri)];
      double x = margin + static_cast<double>(ri) * cw;
      double y = margin + size - static_cast<double>(ti + 1) * ch;  // t grows upward
      svg << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << cw << "\" height=\"" << ch
          << "\" fill=\"" << status_color(cell.status) << "\"/>\n";
    }
  svg << "<text x=\"" << margin + size / 2 << "\" y=\"" << size + 2 * margin - 8
      << "\" text-anchor=\"middle\" font-size=\"14\">r</text>\n";
  svg << "<text x=\"14\" y=\"" << margin + size / 2
      << "\" text-anchor=\"middle\" font-size=\"14\" transform=\"rotate(-90 14 "
      << margin + size / 2 << ")\">t</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

int cmd_regime_map(CLI::App* cmd, GlobalFlags& g, std::string& p_s, std::string& q_s,
                   std::string& r_s, std::string& t_s) {
  std::string started = iso8601_now();
  auto cfg = load_config(g.config);
  g.resolve_from(cmd, cfg);
  resolve(cmd, "--p", cfg, "p", p_s, true);
  resolve(cmd, "--q", cfg, "q", q_s, true);
  resolve(cmd, "--r", cfg, "r", r_s);
  resolve(cmd, "--t", cfg, "t", t_s);
  double p = parse_value<double>("p", p_s);
  double q = parse_value<double>("q", q_s);
  GridAxis r_axis = parse_axis("r", r_s);
  GridAxis t_axis = parse_axis("t", t_s);

  auto grid = regime_map(p, q, r_axis, t_axis);

  RunOutputs outputs{g.out, {}};
  if (g.format == "json") {
    std::ostringstream j;
    j << "[\n";
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto& v = grid[i];
      const auto& tight = *std::min_element(
          v.binding.begin(), v.binding.end(),
          [](const auto& a, const auto& b) { return a.margin < b.margin; });
      j << "  {\"p\": " << fmt17(v.p) << ", \"q\": " << fmt17(v.q) << ", \"r\": " << fmt17(v.r)
        << ", \"t\": " << fmt17(v.t) << ", \"status\": \"" << to_string(v.status)
        << "\", \"svm_equiv\": " << (v.svm_equivalent ? "true" : "false")
        << ", \"binding_constraint\": \"" << json_escape(tight.name)
        << "\", \"margin\": " << fmt17(tight.margin) << "}"
        << (i + 1 < grid.size() ? ",\n" : "\n");
    }
    j << "]\n";
    outputs.write("regime_map.json", j.str());
  } else {
    std::ostringstream csv;
    csv << "p,q,r,t,status,svm_equiv,binding_constraint,margin\n";
    for (const auto& v : grid) {
      const auto& tight = *std::min_element(
          v.binding.begin(), v.binding.end(),
          [](const auto& a, const auto& b) { return a.margin < b.margin; });
      csv << fmt17(v.p) << ',' << fmt17(v.q) << ',' << fmt17(v.r) << ',' << fmt17(v.t) << ','
          << to_string(v.status) << ',' << (v.svm_equivalent ? "true" : "false") << ','
          << tight.name << ',' << fmt17(tight.margin) << '\n';
    }
    outputs.write("regime_map.csv", csv.str());
  }
  if (g.svg) outputs.write("regime_map.svg", regime_map_svg(grid, r_axis, t_axis));

  auto resolved = g.as_map();
  resolved["p"] = fmt17(p);
  resolved["q"] = fmt17(q);
  resolved["r"] = r_s;
  resolved["t"] = t_s;
  write_manifest(outputs, "regime-map", resolved, g.seed, started);
  std::printf("regime-map: %zu cells -> %s\n", grid.size(), g.out.c_str());
  return 0;
}

struct ModelFlags {
  double p = 0.0, q = 0.0, r = 0.0, t = 0.0;
  int c_k = 2;

  void attach(CLI::App* cmd) {
    cmd->add_option("--p", p, "overparameterization exponent");
    cmd->add_option("--q", q, "weight decay exponent");
    cmd->add_option("--r", r, "favored-feature exponent");
    cmd->add_option("--t", t, "class count exponent");
    cmd->add_option("--c-k", c_k, "class multiplier");
  }

  void resolve_from(CLI::App* cmd, const std::map<std::string, std::string>& cfg) {
    resolve(cmd, "--p", cfg, "p", p, true);
    resolve(cmd, "--q", cfg, "q", q, true);
    resolve(cmd, "--r", cfg, "r", r, true);
    resolve(cmd, "--t", cfg, "t", t);
    resolve(cmd, "--c-k", cfg, "c-k", c_k);
  }

  EnsembleExponents exponents() const { return {p, q, r, t, c_k}; }

  void record(std::map<std::string, std::string>& m) const {
    m["p"] = fmt17(p);
    m["q"] = fmt17(q);
    m["r"] = fmt17(r);
    m["t"] = fmt17(t);
    m["c-k"] = std::to_string(c_k);
  }
};

std::string sweep_csv(const ExperimentReport& report) {
  std::ostringstream csv;
  csv << "n,d,s,k,trials,test_points,errors,error_rate,ci_low,ci_high,mean_su_cn,mean_margin,"
         "eigen_pass_rate\n";
  for (const auto& row : report.rows)
    csv << row.n << ',' << row.d << ',' << row.s << ',' << row.k << ',' << row.trials << ','
        << row.test_points << ',' << row.error_count << ',' << fmt17(row.error_rate) << ','
        << fmt17(row.ci_low) << ',' << fmt17(row.ci_high) << ',' << fmt17(row.mean_su_cn) << ','
        << fmt17(row.mean_margin) << ',' << fmt17(row.eigen_pass_rate) << '\n';
  return csv.str();
}

std::string sweep_json(const ExperimentReport& report) {
  std::ostringstream j;
  char hex[24];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(report.config_hash));
  j << "{\n  \"code_version\": \"" << report.code_version << "\",\n  \"master_seed\": "
    << report.master_seed << ",\n  \"config_hash\": \"" << hex << "\",\n  \"rows\": [\n";
  for (std::size_t i = 0; i < report.rows.size(); ++i) {
    const auto& row = report.rows[i];
    j << "    {\"n\": " << row.n << ", \"d\": " << row.d << ", \"s\": " << row.s
      << ", \"k\": " << row.k << ", \"trials\": " << row.trials
      << ", \"test_points\": " << row.test_points << ", \"errors\": " << row.error_count
      << ", \"error_rate\": " << fmt17(row.error_rate) << ", \"ci_low\": " << fmt17(row.ci_low)
      << ", \"ci_high\": " << fmt17(row.ci_high) << ", \"mean_su_cn\": " << fmt17(row.mean_su_cn)
      << ", \"mean_margin\": " << fmt17(row.mean_margin)
      << ", \"eigen_pass_rate\": " << fmt17(row.eigen_pass_rate) << "}"
      << (i + 1 < report.rows.size() ? ",\n" : "\n");
  }
  j << "  ]\n}\n";
  return j.str();
}

int cmd_sweep(CLI::App* cmd, GlobalFlags& g, ModelFlags& model, std::string& n_list_s,
              std::int64_t& trials, std::int64_t& test_points, double& confidence) {
  std::string started = iso8601_now();
  auto cfgmap = load_config(g.config);
  g.resolve_from(cmd, cfgmap);
  model.resolve_from(cmd, cfgmap);
  resolve(cmd, "--n-list", cfgmap, "n-list", n_list_s, true);
  resolve(cmd, "--trials", cfgmap, "trials", trials);
  resolve(cmd, "--test-points", cfgmap, "test-points", test_points);
  resolve(cmd, "--confidence", cfgmap, "confidence", confidence);

  ExperimentConfig cfg;
  cfg.exponents = model.exponents();
  cfg.n_list = parse_int_list(n_list_s);
  cfg.trials_per_n = trials;
  cfg.test_points_per_trial = test_points;
  cfg.master_seed = g.seed;
  cfg.confidence = confidence;
  cfg.block_size = g.block_size;
  cfg.threads = g.threads;
  cfg.check();

  ExperimentReport report = run_sweep(cfg);

  RunOutputs outputs{g.out, {}};
  if (g.format == "json")
    outputs.write("sweep.json", sweep_json(report));
  else
    outputs.write("sweep.csv", sweep_csv(report));

  auto resolved = g.as_map();
  model.record(resolved);
  resolved["n-list"] = n_list_s;
  resolved["trials"] = std::to_string(trials);
  resolved["test-points"] = std::to_string(test_points);
  resolved["confidence"] = fmt17(confidence);
  write_manifest(outputs, "sweep", resolved, g.seed, started);
  std::printf("sweep: %zu rows -> %s\n", report.rows.size(), g.out.c_str());
  return 0;
}

std::string diagnose_csv(const std::vector<PairDiagnostics>& pairs) {
  std::ostringstream csv;
  csv << "alpha,beta,survival,contamination,variation,su_cn\n";
  for (const auto& pd : pairs) {
    csv << pd.alpha << ',' << pd.beta << ',' << fmt17(pd.survival) << ','
        << fmt17(pd.contamination) << ',';
    if (pd.variation) csv << fmt17(*pd.variation);
    csv << ',' << fmt17(pd.su_cn) << '\n';
  }
  return csv.str();
}

std::string probe_json(const ProbeResult& pr) {
  std::ostringstream j;
  j << "{\"empirical_mean\": " << fmt17(pr.empirical_mean)
    << ", \"std_error\": " << fmt17(pr.std_error) << ", \"lower_bound\": " << fmt17(pr.lower_bound)
    << ", \"upper_bound\": " << fmt17(pr.upper_bound)
    << ", \"within_3se\": " << (pr.within_3se ? "true" : "false") << "}";
  return j.str();
}

int cmd_diagnose(CLI::App* cmd, GlobalFlags& g, ModelFlags& model, std::int64_t& n,
                 std::int64_t& probe_trials) {
  std::string started = iso8601_now();
  auto cfgmap = load_config(g.config);
  g.resolve_from(cmd, cfgmap);
  model.resolve_from(cmd, cfgmap);
  resolve(cmd, "--n", cfgmap, "n", n, true);
  resolve(cmd, "--probe-trials", cfgmap, "probe-trials", probe_trials);
  if (probe_trials < 1) throw std::invalid_argument("probe-trials must be positive");

  InstantiatedEnsemble ens = instantiate(model.exponents(), n);
  TrainingSet ts = sample_training_set(ens, g.seed, g.block_size);
  MniClassifier clf = fit(std::move(ts));
  std::vector<PairDiagnostics> pairs = pairwise_diagnostics(clf);
  EigenDiagnostics ed = eigen_check(clf.training, clf.gram);
  EncodingConcentration ec = encoding_concentration(clf.training, 1, 2);
  ExpectationProbes probes = expectation_probes(ens, probe_trials, mix64(g.seed ^ 0x9e3779b9ULL));

  RunOutputs outputs{g.out, {}};
  outputs.write("diagnose.csv", diagnose_csv(pairs));
  std::ostringstream j;
  j << "{\n";
  j << "  \"ensemble\": {\"n\": " << ens.n << ", \"d\": " << ens.d << ", \"s\": " << ens.s
    << ", \"k\": " << ens.k << ", \"a\": " << fmt17(ens.a)
    << ", \"lambda_favored\": " << fmt17(ens.lambda_favored)
    << ", \"lambda_unfavored\": " << fmt17(ens.lambda_unfavored) << "},\n";
  j << "  \"eigen\": {\"mu_bar\": " << fmt17(ed.mu_bar) << ", \"diamond\": " << fmt17(ed.diamond)
    << ", \"delta_mu\": " << fmt17(ed.delta_mu)
    << ", \"empirical_min\": " << fmt17(ed.empirical_min)
    << ", \"empirical_max\": " << fmt17(ed.empirical_max)
    << ", \"sandwich_ok\": " << (ed.sandwich_ok ? "true" : "false") << "},\n";
  j << "  \"encoding\": {\"delta_y_sq\": " << fmt17(ec.delta_y_sq)
    << ", \"expected\": " << fmt17(ec.expected)
    << ", \"within\": " << (ec.within ? "true" : "false") << "},\n";
  j << "  \"probes\": {\n";
  j << "    \"z_alpha_y_alpha\": " << probe_json(probes.z_alpha_y_alpha) << ",\n";
  j << "    \"z_alpha_y_beta\": " << probe_json(probes.z_alpha_y_beta) << ",\n";
  j << "    \"max_of_k\": " << probe_json(probes.max_of_k) << "\n";
  j << "  }\n}\n";
  outputs.write("probes.json", j.str());

  auto resolved = g.as_map();
  model.record(resolved);
  resolved["n"] = std::to_string(n);
  resolved["probe-trials"] = std::to_string(probe_trials);
  write_manifest(outputs, "diagnose", resolved, g.seed, started);
  std::printf("diagnose: %zu pairs -> %s\n", pairs.size(), g.out.c_str());
  return 0;
}

int cmd_simulate(CLI::App* cmd, GlobalFlags& g, ModelFlags& model, std::int64_t& n,
                 std::int64_t& test_points) {
  std::string started = iso8601_now();
  auto cfgmap = load_config(g.config);
  g.resolve_from(cmd, cfgmap);
  model.resolve_from(cmd, cfgmap);
  resolve(cmd, "--n", cfgmap, "n", n, true);
  resolve(cmd, "--test-points", cfgmap, "test-points", test_points);
  if (test_points < 1) throw std::invalid_argument("test-points must be positive");

  InstantiatedEnsemble ens = instantiate(model.exponents(), n);
  detail::TrialResult trial =
      detail::run_trial(ens, trial_seed(g.seed, n, 0), test_points, g.block_size);
  double error_rate = static_cast<double>(trial.errors) / static_cast<double>(test_points);
  WilsonInterval ci = wilson_interval(trial.errors, test_points, 0.95);

  RunOutputs outputs{g.out, {}};
  std::ostringstream j;
  j << "{\n";
  j << "  \"ensemble\": {\"n\": " << ens.n << ", \"d\": " << ens.d << ", \"s\": " << ens.s
    << ", \"k\": " << ens.k << ", \"a\": " << fmt17(ens.a)
    << ", \"lambda_favored\": " << fmt17(ens.lambda_favored)
    << ", \"lambda_unfavored\": " << fmt17(ens.lambda_unfavored) << "},\n";
  j << "  \"test_points\": " << test_points << ",\n";
  j << "  \"errors\": " << trial.errors << ",\n";
  j << "  \"error_rate\": " << fmt17(error_rate) << ",\n";
  j << "  \"ci_low\": " << fmt17(ci.low) << ",\n";
  j << "  \"ci_high\": " << fmt17(ci.high) << ",\n";
  j << "  \"mean_su_cn\": " << fmt17(trial.su_cn_mean) << ",\n";
  j << "  \"mean_margin\": " << fmt17(trial.margin_mean) << ",\n";
  j << "  \"eigen_computed\": " << (trial.eigen_computed ? "true" : "false") << ",\n";
  j << "  \"eigen_ok\": " << (trial.eigen_ok ? "true" : "false") << "\n";
  j << "}\n";
  outputs.write("simulate.json", j.str());

  auto resolved = g.as_map();
  model.record(resolved);
  resolved["n"] = std::to_string(n);
  resolved["test-points"] = std::to_string(test_points);
  write_manifest(outputs, "simulate", resolved, g.seed, started);
  std::printf("simulate: n=%lld error_rate=%s -> %s\n", static_cast<long long>(n),
              fmt17(error_rate).c_str(), g.out.c_str());
  return 0;
}

int cmd_oracle_check(CLI::App* cmd, GlobalFlags& g, std::int64_t& instances, std::int64_t& max_n,
                     std::int64_t& max_d, double& tolerance, double& perturb) {
  std::string started = iso8601_now();
  auto cfgmap = load_config(g.config);
  g.resolve_from(cmd, cfgmap);
  resolve(cmd, "--instances", cfgmap, "instances", instances);
  resolve(cmd, "--max-n", cfgmap, "max-n", max_n);
  resolve(cmd, "--max-d", cfgmap, "max-d", max_d);
  resolve(cmd, "--tolerance", cfgmap, "tolerance", tolerance);
  resolve(cmd, "--perturb", cfgmap, "perturb", perturb);
  if (instances < 1 || max_n < 10 || max_d < 20)
    throw std::invalid_argument("oracle-check: instances >= 1, max-n >= 10, max-d >= 20");

  OracleCheckResult res = oracle_crosscheck(instances, g.seed, max_n, max_d, tolerance, perturb);

  RunOutputs outputs{g.out, {}};
  std::ostringstream j;
  j << "{\n  \"instances\": " << res.instances << ",\n  \"max_deviation\": "
    << fmt17(res.max_deviation) << ",\n  \"worst_quantity\": \"" << json_escape(res.worst_quantity)
    << "\",\n  \"pass\": " << (res.pass ? "true" : "false") << "\n}\n";
  outputs.write("oracle_check.json", j.str());

  auto resolved = g.as_map();
  resolved["instances"] = std::to_string(instances);
  resolved["max-n"] = std::to_string(max_n);
  resolved["max-d"] = std::to_string(max_d);
  resolved["tolerance"] = fmt17(tolerance);
  resolved["perturb"] = fmt17(perturb);
  write_manifest(outputs, "oracle-check", resolved, g.seed, started);

  std::printf("oracle-check: %s max_deviation=%s (%s)\n", res.pass ? "PASS" : "FAIL",
              fmt17(res.max_deviation).c_str(),
              res.worst_quantity.empty() ? "none" : res.worst_quantity.c_str());
  return res.pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bi-level Gaussian ensemble toolkit"};
  app.require_subcommand(1);

  GlobalFlags g_map, g_sim, g_sweep, g_diag, g_oracle;
  ModelFlags m_sim, m_sweep, m_diag;

  auto* map_cmd = app.add_subcommand("regime-map", "classify an (r, t) grid at fixed (p, q)");
  std::string map_p, map_q, map_r = "0:1:0.01", map_t = "0:1:0.01";
  g_map.attach(map_cmd);
  map_cmd->add_option("--p", map_p, "overparameterization exponent");
  map_cmd->add_option("--q", map_q, "weight decay exponent");
  map_cmd->add_option("--r", map_r, "r axis, lo:hi:step or a single value");
  map_cmd->add_option("--t", map_t, "t axis, lo:hi:step or a single value");

  auto* sim_cmd = app.add_subcommand("simulate", "run a single seeded instance");
  std::int64_t sim_n = 0, sim_test_points = 1000;
  g_sim.attach(sim_cmd);
  m_sim.attach(sim_cmd);
  sim_cmd->add_option("--n", sim_n, "training set size");
  sim_cmd->add_option("--test-points", sim_test_points, "test points");

  auto* sweep_cmd = app.add_subcommand("sweep", "Monte Carlo sweep over n");
  std::string sweep_n_list;
  std::int64_t sweep_trials = 10, sweep_test_points = 1000;
  double sweep_confidence = 0.95;
  g_sweep.attach(sweep_cmd);
  m_sweep.attach(sweep_cmd);
  sweep_cmd->add_option("--n-list", sweep_n_list, "comma-separated ascending n values");
  sweep_cmd->add_option("--trials", sweep_trials, "trials per n");
  sweep_cmd->add_option("--test-points", sweep_test_points, "test points per trial");
  sweep_cmd->add_option("--confidence", sweep_confidence, "interval confidence level");

  auto* diag_cmd = app.add_subcommand("diagnose", "per-pair diagnostics for one instance");
  std::int64_t diag_n = 0, diag_probe_trials = 200;
  g_diag.attach(diag_cmd);
  m_diag.attach(diag_cmd);
  diag_cmd->add_option("--n", diag_n, "training set size");
  diag_cmd->add_option("--probe-trials", diag_probe_trials, "expectation probe trials");

  auto* oracle_cmd = app.add_subcommand("oracle-check", "streamed vs dense pipeline crosscheck");
  std::int64_t oc_instances = 25, oc_max_n = 20, oc_max_d = 200;
  double oc_tolerance = 1e-8, oc_perturb = 0.0;
  g_oracle.attach(oracle_cmd);
  oracle_cmd->add_option("--instances", oc_instances, "random instances");
  oracle_cmd->add_option("--max-n", oc_max_n, "largest training set size");
  oracle_cmd->add_option("--max-d", oc_max_d, "largest feature count");
  oracle_cmd->add_option("--tolerance", oc_tolerance, "relative deviation tolerance");
  oracle_cmd->add_option("--perturb", oc_perturb, "injected primal perturbation (test hook)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (map_cmd->parsed()) return cmd_regime_map(map_cmd, g_map, map_p, map_q, map_r, map_t);
    if (sim_cmd->parsed()) return cmd_simulate(sim_cmd, g_sim, m_sim, sim_n, sim_test_points);
    if (sweep_cmd->parsed())
      return cmd_sweep(sweep_cmd, g_sweep, m_sweep, sweep_n_list, sweep_trials, sweep_test_points,
                       sweep_confidence);
    if (diag_cmd->parsed()) return cmd_diagnose(diag_cmd, g_diag, m_diag, diag_n, diag_probe_trials);
    if (oracle_cmd->parsed())
      return cmd_oracle_check(oracle_cmd, g_oracle, oc_instances, oc_max_n, oc_max_d, oc_tolerance,
                              oc_perturb);
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
