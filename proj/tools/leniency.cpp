// leniency: estimation and checklist workflow for examiner designs.
//
//   leniency estimate     --data cases.csv --fe unit:year [--estimator ujive,2sls,ols]
//   leniency balance      --data cases.csv --fe unit --covariates age,size
//   leniency monotonicity --data cases.csv --fe unit [--bins 10 | --edges 0,1,2,5]
//   leniency compliers    --data cases.csv --fe unit --covariates female
//   leniency simulate     --reps 500 --seed 7 [--config sim.txt] [--emit-data one.csv]
//
// Exit codes: 0 ok, 2 input or configuration error, 3 degenerate design or capacity.

#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "leniency/checklist.hpp"
#include "leniency/error.hpp"
#include "leniency/estimators.hpp"
#include "leniency/inference.hpp"
#include "leniency/kernels.hpp"
#include "leniency/prune.hpp"
#include "leniency/report.hpp"
#include "leniency/simulation.hpp"

using namespace leniency;
using nlohmann::json;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitDegenerate = 3;

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep))
    if (!cur.empty()) out.push_back(cur);
  return out;
}

double to_double(const std::string& s, const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw InputError(what + ": '" + s + "' is not a number");
  }
}

struct Common {
  std::string data;
  std::string outcome = "y";
  std::string treatment = "x";
  std::string examiner = "examiner";
  std::string fe = "cell";
  std::string covariates;
  std::string out;
  std::string format = "json";
  std::uint64_t seed = 0;
  int threads = 0;
  std::string config;
};

// Options that a key=value --config file may set when absent from the
// command line.
struct Configurable {
  CLI::Option* option;
  std::function<void(const std::string&)> assign;
};

void add_common(CLI::App* cmd, Common& c, std::map<std::string, Configurable>& keys, bool data) {
  if (data) {
    keys["data"] = {cmd->add_option("--data", c.data, "input CSV (RFC 4180, header row)"),
                    [&c](const std::string& v) { c.data = v; }};
    keys["outcome"] = {cmd->add_option("--outcome", c.outcome, "outcome column")->capture_default_str(),
                       [&c](const std::string& v) { c.outcome = v; }};
    keys["treatment"] = {cmd->add_option("--treatment", c.treatment, "treatment column")->capture_default_str(),
                         [&c](const std::string& v) { c.treatment = v; }};
    keys["examiner"] = {cmd->add_option("--examiner", c.examiner, "decision-maker column")->capture_default_str(),
                        [&c](const std::string& v) { c.examiner = v; }};
    keys["fe"] = {cmd->add_option("--fe", c.fe, "fixed effects: ',' separates sets, ':' interacts")
                      ->capture_default_str(),
                  [&c](const std::string& v) { c.fe = v; }};
    keys["covariates"] = {cmd->add_option("--covariates", c.covariates, "comma-separated covariate columns"),
                          [&c](const std::string& v) { c.covariates = v; }};
  }
  keys["out"] = {cmd->add_option("--out", c.out, "output path (default stdout)"),
                 [&c](const std::string& v) { c.out = v; }};
  keys["format"] = {cmd->add_option("--format", c.format, "json or csv")
                        ->check(CLI::IsMember({"json", "csv"}))
                        ->capture_default_str(),
                    [&c](const std::string& v) {
                      if (v != "json" && v != "csv") throw InputError("format must be json or csv");
                      c.format = v;
                    }};
  keys["seed"] = {cmd->add_option("--seed", c.seed, "random seed")->capture_default_str(),
                  [&c](const std::string& v) { c.seed = static_cast<std::uint64_t>(std::stoull(v)); }};
  keys["threads"] = {cmd->add_option("--threads", c.threads, "OpenMP threads (0 = runtime default)"),
                     [&c](const std::string& v) { c.threads = std::stoi(v); }};
  cmd->add_option("--config", c.config, "key=value file supplying defaults for these flags");
}

// Applies --config entries for options not given on the command line. Keys
// unknown to this subcommand are returned for the caller to interpret.
std::map<std::string, std::string> apply_config(const Common& c, std::map<std::string, Configurable>& keys) {
  std::map<std::string, std::string> rest;
  if (c.config.empty()) return rest;
  for (const auto& [k, v] : read_kv_file(c.config)) {
    auto it = keys.find(k);
    if (it == keys.end()) {
      rest[k] = v;
      continue;
    }
    if (it->second.option->count() == 0) it->second.assign(v);
  }
  return rest;
}

Schema make_schema(const Common& c) {
  if (c.data.empty()) throw InputError("--data is required");
  Schema s;
  s.outcome = c.outcome;
  s.treatment = c.treatment;
  s.examiner = c.examiner;
  s.fixed_effects = Schema::parse_fe(c.fe);
  s.covariates = split(c.covariates, ',');
  return s;
}

RunManifest manifest_for(const std::string& command, const Common& c, const Schema* schema) {
  RunManifest m;
  m.command = command;
  if (!c.data.empty()) m.inputs.push_back(c.data);
  if (!c.config.empty()) m.inputs.push_back(c.config);
  if (schema) {
    m.schema = {{"outcome", schema->outcome}, {"treatment", schema->treatment}, {"examiner", schema->examiner},
                {"fe", c.fe}};
    if (!c.covariates.empty()) m.schema["covariates"] = c.covariates;
  }
  return m;
}

void emit(const Common& c, const std::function<void(std::ostream&)>& write) {
  if (c.out.empty()) {
    write(std::cout);
    return;
  }
  std::ofstream f(c.out, std::ios::binary);
  if (!f) throw InputError("cannot write '" + c.out + "'");
  write(f);
  if (!f) throw InputError("failed writing '" + c.out + "'");
}

// CSV tables carry no manifest, so one is written next to the file.
void emit_csv(const Common& c, const RunManifest& m, const std::function<void(std::ostream&)>& write) {
  emit(c, write);
  if (c.out.empty()) return;
  std::ofstream f(c.out + ".manifest.json", std::ios::binary);
  if (!f) throw InputError("cannot write '" + c.out + ".manifest.json'");
  f << m.to_json().dump(2) << '\n';
}

void emit_json(const Common& c, const json& j) {
  emit(c, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
}

PrunedDesign load_and_prune(const Common& c, const Schema& s) {
  const Dataset ds = load_dataset(c.data, s);
  return prune(ds);
}

std::vector<std::string> covariate_list(const Common& c) {
  auto v = split(c.covariates, ',');
  if (v.empty()) throw InputError("--covariates is required");
  return v;
}

// --- estimate ---------------------------------------------------------------

struct EstimateArgs {
  std::string estimators = "ujive,2sls,ols";
  std::optional<double> weak_iv_beta0;
  std::string weak_iv_grid;
  std::string rho_beta;
  int fejiv_cap = kDefaultFejivCap;
  std::string cluster;
};

int run_estimate(const Common& c, const EstimateArgs& a) {
  if (!a.cluster.empty())
    throw InputError(
        "clustered standard errors are not implemented (they require a leave-cluster-out estimator). "
        "Rule of thumb: cluster at the level of variation in the assignment; with case-level random "
        "assignment the default heteroskedasticity-robust errors apply");
  const Schema s = make_schema(c);
  const PrunedDesign pd = load_and_prune(c, s);
  const Eigen::VectorXd& y = pd.data.outcome;
  const Eigen::VectorXd& x = pd.data.treatment;

  RunManifest m = manifest_for("estimate", c, &s);
  m.prune = pd.report;
  std::vector<EstimatorResult> results;
  for (const auto& name : split(a.estimators, ',')) {
    const EstimatorKind k = parse_estimator(name);
    m.estimators.emplace_back(to_string(k));
    if (k == EstimatorKind::FEJIV)
      results.push_back(estimate(GMatrix(pd.context, fejiv_lambda(pd.context, a.fejiv_cap)), y, x));
    else
      results.push_back(estimate(GMatrix(pd.context, k), y, x));
  }
  if (results.empty()) throw InputError("--estimator lists no estimators");

  if (c.format == "csv") {
    emit_csv(c, m, [&](std::ostream& o) { write_estimates_csv(o, results); });
    return 0;
  }
  json j;
  j["manifest"] = m.to_json();
  j["estimates"] = json::array();
  for (const auto& r : results) j["estimates"].push_back(to_json(r));

  const bool want_weak = a.weak_iv_beta0.has_value() || !a.weak_iv_grid.empty();
  if (want_weak || !a.rho_beta.empty()) {
    const GMatrix ujive(pd.context, EstimatorKind::UJIVE);
    if (want_weak) {
      const WeakIVTest test(ujive, y, x);
      Grid grid;
      if (a.weak_iv_grid.empty()) {
        grid = WeakIVTest::default_grid(estimate(ujive, y, x));
      } else {
        const auto parts = split(a.weak_iv_grid, ':');
        if (parts.size() != 3) throw InputError("--weak-iv-grid expects lo:hi:n");
        grid.lo = to_double(parts[0], "--weak-iv-grid");
        grid.hi = to_double(parts[1], "--weak-iv-grid");
        grid.points = static_cast<int>(to_double(parts[2], "--weak-iv-grid"));
      }
      j["weak_iv"] = to_json(test.invert(a.weak_iv_beta0.value_or(0.0), grid));
    }
    if (!a.rho_beta.empty()) {
      const auto parts = split(a.rho_beta, ':');
      if (parts.empty() || parts.size() > 2) throw InputError("--rho-beta expects b or lo:hi");
      const double lo = to_double(parts[0], "--rho-beta");
      const double hi = parts.size() == 2 ? to_double(parts[1], "--rho-beta") : lo;
      j["rho"] = to_json(rho_diagnostic(ujive, y, x, lo, hi));
    }
  }
  emit_json(c, j);
  return 0;
}

// --- balance / monotonicity / compliers ---------------------------------------

int run_balance(const Common& c) {
  const Schema s = make_schema(c);
  const auto covs = covariate_list(c);
  const PrunedDesign pd = load_and_prune(c, s);
  const auto rows = balance_check(pd, covs);
  RunManifest m = manifest_for("balance", c, &s);
  m.prune = pd.report;
  m.estimators = {"UJIVE"};
  if (c.format == "csv") {
    emit_csv(c, m, [&](std::ostream& o) { write_balance_csv(o, rows); });
    return 0;
  }
  json j{{"manifest", m.to_json()}, {"design_fingerprint", fingerprint_hex(design_fingerprint(pd.context))}};
  j["rows"] = json::array();
  for (const auto& r : rows) j["rows"].push_back(to_json(r));
  emit_json(c, j);
  return 0;
}

struct MonotonicityArgs {
  int bins = 10;
  std::string edges;
  double alpha = 0.05;
  bool bonferroni = false;
};

int run_monotonicity(const Common& c, const MonotonicityArgs& a) {
  const Schema s = make_schema(c);
  const PrunedDesign pd = load_and_prune(c, s);
  const Eigen::VectorXd& y = pd.data.outcome;
  std::vector<Bin> bins;
  if (a.edges.empty()) {
    bins = default_bins(y, a.bins);
  } else {
    std::vector<double> e;
    for (const auto& t : split(a.edges, ',')) e.push_back(to_double(t, "--edges"));
    if (e.size() < 2) throw InputError("--edges needs at least two values");
    for (std::size_t k = 0; k + 1 < e.size(); ++k) {
      if (!(e[k + 1] > e[k])) throw InputError("--edges must be strictly increasing");
      bins.push_back(Bin{e[k], e[k + 1], k + 2 == e.size()});
    }
  }
  const MonotonicityResult r = monotonicity_test(pd.context, y, pd.data.treatment, bins, a.alpha, a.bonferroni);
  RunManifest m = manifest_for("monotonicity", c, &s);
  m.prune = pd.report;
  m.estimators = {"UJIVE"};
  if (c.format == "csv") {
    emit_csv(c, m, [&](std::ostream& o) { write_monotonicity_csv(o, r); });
    return 0;
  }
  json j = to_json(r);
  j["manifest"] = m.to_json();
  j["alpha"] = a.alpha;
  j["bonferroni"] = a.bonferroni;
  emit_json(c, j);
  return 0;
}

int run_compliers(const Common& c) {
  const Schema s = make_schema(c);
  const auto covs = covariate_list(c);
  const PrunedDesign pd = load_and_prune(c, s);
  const auto rows = complier_means(pd, covs);
  RunManifest m = manifest_for("compliers", c, &s);
  m.prune = pd.report;
  m.estimators = {"UJIVE"};
  if (c.format == "csv") {
    emit_csv(c, m, [&](std::ostream& o) { write_compliers_csv(o, rows); });
    return 0;
  }
  json j{{"manifest", m.to_json()}, {"design_fingerprint", fingerprint_hex(design_fingerprint(pd.context))}};
  j["rows"] = json::array();
  for (const auto& r : rows) j["rows"].push_back(to_json(r));
  emit_json(c, j);
  return 0;
}

// --- simulate -------------------------------------------------------------

struct SimulateArgs {
  std::map<std::string, std::string> overrides;
  int reps = 100;
  std::string estimators = "ols,2sls,ujive,b2sls,jive,ijive";
  std::string emit_data;
  bool weak_iv = false;
  bool monotonicity = false;
};

int run_simulate(const Common& c, SimulateArgs& a, std::map<std::string, std::string> file_kv) {
  for (const auto& [k, v] : a.overrides) file_kv[k] = v;
  file_kv["seed"] = std::to_string(c.seed);
  const SimConfig cfg = SimConfig::from_kv(file_kv);

  MonteCarloOptions opts;
  opts.reps = a.reps;
  opts.kinds.clear();
  for (const auto& name : split(a.estimators, ',')) opts.kinds.push_back(parse_estimator(name));
  opts.weak_iv = a.weak_iv;
  opts.monotonicity = a.monotonicity;

  if (!a.emit_data.empty()) {
    const Population pop = generate(cfg, 0);
    std::ofstream f(a.emit_data, std::ios::binary);
    if (!f) throw InputError("cannot write '" + a.emit_data + "'");
    write_dataset_csv(pop.data, f);
  }
  const MonteCarloSummary s = monte_carlo(cfg, opts);
  RunManifest m = manifest_for("simulate", c, nullptr);
  m.seed = cfg.seed;
  for (auto k : opts.kinds) m.estimators.emplace_back(to_string(k));
  m.config = cfg.to_kv();
  m.config["reps"] = std::to_string(a.reps);
  if (c.format == "csv") {
    emit_csv(c, m, [&](std::ostream& o) { write_monte_carlo_csv(o, s); });
    return 0;
  }
  json j = to_json(s);
  j["manifest"] = m.to_json();
  emit_json(c, j);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Estimation and diagnostics for leniency (examiner) instrumental-variable designs"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Common common;
  std::map<const CLI::App*, std::map<std::string, Configurable>> keys;

  EstimateArgs est;
  auto* c_est = app.add_subcommand("estimate", "point estimates, robust SEs and first-stage diagnostics");
  add_common(c_est, common, keys[c_est], true);
  keys[c_est]["estimator"] = {c_est->add_option("--estimator", est.estimators, "comma list of ols,2sls,jive,ijive,ujive,b2sls,fejiv")
                           ->capture_default_str(),
                       [&est](const std::string& v) { est.estimators = v; }};
  c_est->add_option("--weak-iv-beta0", est.weak_iv_beta0, "null value for the weak-instrument robust test");
  c_est->add_option("--weak-iv-grid", est.weak_iv_grid, "lo:hi:n grid for confidence-set inversion");
  c_est->add_option("--rho-beta", est.rho_beta, "beta* value or lo:hi range for the rho diagnostic");
  c_est->add_option("--fejiv-cap", est.fejiv_cap, "largest n for the dense FEJIV solve")->capture_default_str();
  c_est->add_option("--cluster", est.cluster, "not supported; prints clustering guidance");

  auto* c_bal = app.add_subcommand("balance", "UJIVE balance regressions of covariates on treatment");
  add_common(c_bal, common, keys[c_bal], true);

  MonotonicityArgs mono;
  auto* c_mono = app.add_subcommand("monotonicity", "average-monotonicity test by outcome bins");
  add_common(c_mono, common, keys[c_mono], true);
  c_mono->add_option("--bins", mono.bins, "number of quantile bins for continuous outcomes")->capture_default_str();
  c_mono->add_option("--edges", mono.edges, "explicit increasing bin edges, comma separated");
  c_mono->add_option("--alpha", mono.alpha, "test level")->capture_default_str();
  c_mono->add_flag("--bonferroni", mono.bonferroni, "divide the level by the number of tests");

  auto* c_comp = app.add_subcommand("compliers", "complier means of covariates");
  add_common(c_comp, common, keys[c_comp], true);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Monte Carlo study on the synthetic design");
  add_common(c_sim, common, keys[c_sim], false);
  c_sim->add_option("--reps", sim.reps, "replications")->capture_default_str();
  c_sim->add_option("--estimator", sim.estimators, "comma list of estimators")->capture_default_str();
  c_sim->add_option("--emit-data", sim.emit_data, "write replication 0 as CSV");
  c_sim->add_flag("--weak-iv", sim.weak_iv, "record weak-IV test rejections at the target");
  c_sim->add_flag("--monotonicity", sim.monotonicity, "record monotonicity flags");
  struct SimFlag {
    const char* flag;
    const char* key;
    const char* help;
  };
  static const SimFlag sim_flags[] = {
      {"--n", "n", "cases per replication"},
      {"--cells", "n_cells", "fixed-effect cells"},
      {"--examiners-per-cell", "examiners_per_cell", "examiners in each cell"},
      {"--leniency-spread", "leniency_spread", "examiner threshold spread"},
      {"--target-F", "target_F", "solve the spread for this E[F]"},
      {"--endogeneity", "endogeneity", "corr(eps, nu)"},
      {"--effect-model", "effect_model", "constant or heterogeneous"},
      {"--beta", "beta", "treatment effect"},
      {"--effect-heterogeneity", "effect_heterogeneity", "slope of beta_i on the latent index"},
      {"--defier-fraction", "defier_fraction", "share of defier-type cases, < 0.5"},
      {"--defier-effect-shift", "defier_effect_shift", "effect shift for defier-type cases"},
      {"--heteroskedasticity", "heteroskedasticity", "none or leniency"},
      {"--outcome-type", "outcome", "continuous or count"},
  };
  std::map<std::string, std::string> sim_values;
  for (const auto& f : sim_flags) c_sim->add_option(f.flag, sim_values[f.key], f.help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (common.threads > 0) kernels::set_threads(common.threads);
    CLI::App* used = app.get_subcommands().front();
    auto rest = apply_config(common, keys[used]);
    if (used == c_sim) {
      for (const auto& f : sim_flags)
        if (c_sim->get_option(f.flag)->count() > 0) sim.overrides[f.key] = sim_values[f.key];
      if (!common.config.empty() && rest.count("reps") && c_sim->get_option("--reps")->count() == 0)
        sim.reps = std::stoi(rest["reps"]);
      rest.erase("reps");
      if (common.threads > 0) kernels::set_threads(common.threads);
      return run_simulate(common, sim, rest);
    }
    if (!rest.empty()) throw ConfigError("unknown config key '" + rest.begin()->first + "'");
    if (common.threads > 0) kernels::set_threads(common.threads);
    if (used == c_est) return run_estimate(common, est);
    if (used == c_bal) return run_balance(common);
    if (used == c_mono) return run_monotonicity(common, mono);
    if (used == c_comp) return run_compliers(common);
  } catch (const DegenerateDesignError& e) {
    std::cerr << "leniency: degenerate design: " << e.what() << '\n';
    return kExitDegenerate;
  } catch (const InputError& e) {
    std::cerr << "leniency: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "leniency: invalid value: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "leniency: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
