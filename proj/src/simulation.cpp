#include "leniency/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

#include "leniency/checklist.hpp"
#include "leniency/csv.hpp"
#include "leniency/error.hpp"
#include "leniency/estimators.hpp"
#include "leniency/inference.hpp"
#include "leniency/prune.hpp"

namespace leniency {

namespace {

double phi(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); }
double Phi(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }

double parse_double(const std::string& key, const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || !std::isfinite(v))
    throw ConfigError("config key '" + key + "': '" + s + "' is not a finite number");
  return v;
}

long long parse_int(const std::string& key, const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const long long v = std::strtoll(begin, &end, 10);
  if (end == begin || *end != '\0') throw ConfigError("config key '" + key + "': '" + s + "' is not an integer");
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string to_string(EffectModel m) { return m == EffectModel::constant ? "constant" : "heterogeneous"; }
std::string to_string(Heteroskedasticity h) { return h == Heteroskedasticity::none ? "none" : "leniency"; }
std::string to_string(OutcomeType o) { return o == OutcomeType::continuous ? "continuous" : "count"; }

void SimConfig::validate() const {
  if (n < 2) throw ConfigError("n must be at least 2");
  if (n_cells < 1) throw ConfigError("n_cells must be at least 1");
  if (examiners_per_cell < 2) throw ConfigError("examiners_per_cell must be at least 2");
  if (!(defier_fraction >= 0.0 && defier_fraction < 0.5)) throw ConfigError("defier_fraction must lie in [0, 0.5)");
  if (!(endogeneity > -1.0 && endogeneity < 1.0)) throw ConfigError("endogeneity must lie in (-1, 1)");
  if (!(leniency_spread >= 0.0)) throw ConfigError("leniency_spread must be non-negative");
  if (target_F && !(*target_F > 1.0)) throw ConfigError("target_F must exceed 1");
  if (effect_model == EffectModel::constant && (effect_heterogeneity != 0.0 || defier_effect_shift != 0.0))
    throw ConfigError("effect_heterogeneity and defier_effect_shift need effect_model = heterogeneous");
  if (defier_effect_shift != 0.0 && defier_fraction == 0.0)
    throw ConfigError("defier_effect_shift needs a positive defier_fraction");
}

SimConfig SimConfig::from_kv(const std::map<std::string, std::string>& kv) {
  SimConfig c;
  for (const auto& [key, value] : kv) {
    if (key == "n")
      c.n = static_cast<int>(parse_int(key, value));
    else if (key == "n_cells")
      c.n_cells = static_cast<int>(parse_int(key, value));
    else if (key == "examiners_per_cell")
      c.examiners_per_cell = static_cast<int>(parse_int(key, value));
    else if (key == "leniency_spread")
      c.leniency_spread = parse_double(key, value);
    else if (key == "target_F")
      c.target_F = parse_double(key, value);
    else if (key == "endogeneity")
      c.endogeneity = parse_double(key, value);
    else if (key == "effect_model") {
      if (value == "constant")
        c.effect_model = EffectModel::constant;
      else if (value == "heterogeneous")
        c.effect_model = EffectModel::heterogeneous;
      else
        throw ConfigError("effect_model must be constant or heterogeneous");
    } else if (key == "beta")
      c.beta = parse_double(key, value);
    else if (key == "effect_heterogeneity")
      c.effect_heterogeneity = parse_double(key, value);
    else if (key == "defier_fraction")
      c.defier_fraction = parse_double(key, value);
    else if (key == "defier_effect_shift")
      c.defier_effect_shift = parse_double(key, value);
    else if (key == "heteroskedasticity") {
      if (value == "none")
        c.heteroskedasticity = Heteroskedasticity::none;
      else if (value == "leniency")
        c.heteroskedasticity = Heteroskedasticity::leniency;
      else
        throw ConfigError("heteroskedasticity must be none or leniency");
    } else if (key == "outcome") {
      if (value == "continuous")
        c.outcome = OutcomeType::continuous;
      else if (value == "count")
        c.outcome = OutcomeType::count;
      else
        throw ConfigError("outcome must be continuous or count");
    } else if (key == "baseline_threshold")
      c.baseline_threshold = parse_double(key, value);
    else if (key == "cell_threshold_spread")
      c.cell_threshold_spread = parse_double(key, value);
    else if (key == "seed") {
      const long long s = parse_int(key, value);
      if (s < 0) throw ConfigError("seed must be non-negative");
      c.seed = static_cast<std::uint64_t>(s);
    } else
      throw ConfigError("unknown config key '" + key + "'");
  }
  c.validate();
  return c;
}

std::map<std::string, std::string> SimConfig::to_kv() const {
  using csv::format_double;
  std::map<std::string, std::string> kv{
      {"n", std::to_string(n)},
      {"n_cells", std::to_string(n_cells)},
      {"examiners_per_cell", std::to_string(examiners_per_cell)},
      {"leniency_spread", format_double(leniency_spread)},
      {"endogeneity", format_double(endogeneity)},
      {"effect_model", to_string(effect_model)},
      {"beta", format_double(beta)},
      {"effect_heterogeneity", format_double(effect_heterogeneity)},
      {"defier_fraction", format_double(defier_fraction)},
      {"defier_effect_shift", format_double(defier_effect_shift)},
      {"heteroskedasticity", to_string(heteroskedasticity)},
      {"outcome", to_string(outcome)},
      {"baseline_threshold", format_double(baseline_threshold)},
      {"cell_threshold_spread", format_double(cell_threshold_spread)},
      {"seed", std::to_string(seed)},
  };
  if (target_F) kv["target_F"] = format_double(*target_F);
  return kv;
}

std::map<std::string, std::string> read_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file '" + path + "'");
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

namespace {

struct LeniencyMoments {
  double sum_var = 0.0;  // sum over cells of var_k l
  double mean_bernoulli = 0.0;
  double mean_phi = 0.0;
};

LeniencyMoments moments(const SimConfig& cfg, const std::vector<double>& c, const std::vector<double>& z,
                        double spread, std::vector<double>* leniency) {
  const int J = cfg.examiners_per_cell;
  const double q = cfg.defier_fraction;
  LeniencyMoments m;
  if (leniency) leniency->assign(static_cast<std::size_t>(cfg.n_cells * J), 0.0);
  for (int w = 0; w < cfg.n_cells; ++w) {
    double mean = 0.0, sq = 0.0;
    for (int k = 0; k < J; ++k) {
      const double d = spread * z[static_cast<std::size_t>(k)];
      const double cw = c[static_cast<std::size_t>(w)];
      const double l = (1.0 - q) * Phi(cw + d) + q * Phi(cw - d);
      if (leniency) (*leniency)[static_cast<std::size_t>(w * J + k)] = l;
      mean += l / J;
      sq += l * l / J;
      m.mean_bernoulli += l * (1.0 - l);
      m.mean_phi += (1.0 - q) * phi(cw + d) + q * phi(cw - d);
    }
    m.sum_var += sq - mean * mean;
  }
  m.mean_bernoulli /= cfg.n_cells * J;
  m.mean_phi /= cfg.n_cells * J;
  return m;
}

}  // namespace

Calibration calibrate(const SimConfig& cfg) {
  cfg.validate();
  Calibration cal;
  const int J = cfg.examiners_per_cell;
  cal.L = cfg.n_cells;
  cal.K = cfg.n_cells * (J - 1);
  for (int w = 0; w < cfg.n_cells; ++w)
    cal.cell_threshold.push_back(cfg.n_cells == 1 ? cfg.baseline_threshold
                                                  : cfg.baseline_threshold +
                                                        cfg.cell_threshold_spread *
                                                            (static_cast<double>(w) / (cfg.n_cells - 1) - 0.5));
  std::vector<double> z;
  const double sd = std::sqrt((static_cast<double>(J) * J - 1.0) / 12.0);
  for (int k = 0; k < J; ++k) z.push_back((k - 0.5 * (J - 1)) / sd);

  // K (E[F] - 1) = sum_i l~_i^2 / var(nu), with n / L cases per cell.
  auto expected_F = [&](double spread) {
    const LeniencyMoments m = moments(cfg, cal.cell_threshold, z, spread, nullptr);
    return static_cast<double>(cfg.n) / cfg.n_cells * m.sum_var / m.mean_bernoulli / cal.K + 1.0;
  };
  cal.spread = cfg.leniency_spread;
  if (cfg.target_F) {
    double lo = 0.0, hi = 10.0;
    if (expected_F(hi) < *cfg.target_F)
      throw ConfigError("target_F is unreachable for this design (maximum " + std::to_string(expected_F(hi)) + ")");
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (lo + hi);
      (expected_F(mid) < *cfg.target_F ? lo : hi) = mid;
    }
    cal.spread = 0.5 * (lo + hi);
  }
  const LeniencyMoments m = moments(cfg, cal.cell_threshold, z, cal.spread, &cal.examiner_leniency);
  cal.expected_F = expected_F(cal.spread);
  const double signal = cal.K * (cal.expected_F - 1.0);
  cal.partial_R2 = signal / (cfg.n + signal);
  cal.var_nu = m.mean_bernoulli;
  cal.kappa = cfg.endogeneity * std::sqrt(m.mean_bernoulli) / m.mean_phi;
  if (!(std::fabs(cal.kappa) <= 1.0))
    throw ConfigError("endogeneity " + std::to_string(cfg.endogeneity) +
                      " is not attainable with this treatment model (needs |kappa| <= 1, got " +
                      std::to_string(cal.kappa) + ")");
  for (int w = 0; w < cfg.n_cells; ++w)
    for (int k = 0; k < J; ++k) cal.examiner_shift.push_back(cal.spread * z[static_cast<std::size_t>(k)]);
  return cal;
}

std::vector<std::vector<double>> SyntheticTruth::leniency() const {
  std::vector<std::vector<double>> l(examiners_in_cell.size());
  std::vector<int> size(examiners_in_cell.size(), 0);
  for (std::size_t w = 0; w < l.size(); ++w) l[w].assign(static_cast<std::size_t>(examiners_in_cell[w]), 0.0);
  for (int i = 0; i < n(); ++i) {
    const auto w = static_cast<std::size_t>(cell[static_cast<std::size_t>(i)]);
    ++size[w];
    for (std::size_t k = 0; k < l[w].size(); ++k) l[w][k] += potential[static_cast<std::size_t>(i)][k];
  }
  for (std::size_t w = 0; w < l.size(); ++w)
    if (size[w] > 0)
      for (auto& v : l[w]) v /= size[w];
  return l;
}

LambdaForms oracle_lambda(const SyntheticTruth& t) {
  const auto len = t.leniency();
  const int n = t.n();
  LambdaForms f;
  f.pairwise.setZero(n);
  f.closed_form.setZero(n);
  f.covariance.setZero(n);
  for (int i = 0; i < n; ++i) {
    const auto w = static_cast<std::size_t>(t.cell[static_cast<std::size_t>(i)]);
    const auto& p = t.assignment_prob[w];
    const auto& l = len[w];
    const auto& x = t.potential[static_cast<std::size_t>(i)];
    const std::size_t J = l.size();

    double lbar = 0.0;
    for (std::size_t k = 0; k < J; ++k) lbar += p[k] * l[k];
    double cov = 0.0;
    for (std::size_t k = 0; k < J; ++k) cov += p[k] * x[k] * (l[k] - lbar);
    f.covariance[i] = cov;

    double p1 = 0.0, l1 = 0.0, l0 = 0.0;
    for (std::size_t k = 0; k < J; ++k) {
      p1 += p[k] * x[k];
      (x[k] ? l1 : l0) += p[k] * l[k];
    }
    const double p0 = 1.0 - p1;
    f.closed_form[i] = (p1 > 0.0 && p0 > 0.0) ? p1 * p0 * (l1 / p1 - l0 / p0) : 0.0;

    double pw = 0.0;
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t k = j + 1; k < J; ++k)
        pw += p[j] * p[k] * (l[k] - l[j]) * (static_cast<double>(x[k]) - static_cast<double>(x[j]));
    f.pairwise[i] = pw;
  }
  return f;
}

BetaStarForms oracle_beta_star(const SyntheticTruth& t) {
  const auto len = t.leniency();
  const int n = t.n();
  BetaStarForms f;

  double num = 0.0, den = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto w = static_cast<std::size_t>(t.cell[static_cast<std::size_t>(i)]);
    const auto& p = t.assignment_prob[w];
    const auto& l = len[w];
    double lbar = 0.0;
    for (std::size_t k = 0; k < l.size(); ++k) lbar += p[k] * l[k];
    for (std::size_t k = 0; k < l.size(); ++k) {
      const bool xk = t.potential[static_cast<std::size_t>(i)][k];
      const double yk = xk ? t.y1[i] : t.y0[i];
      num += p[k] * (l[k] - lbar) * yk;
      den += p[k] * (l[k] - lbar) * (xk ? 1.0 : 0.0);
    }
  }
  f.direct = num / den;

  // Pairwise Wald estimands within each cell.
  std::vector<std::vector<int>> members(t.examiners_in_cell.size());
  for (int i = 0; i < n; ++i) members[static_cast<std::size_t>(t.cell[static_cast<std::size_t>(i)])].push_back(i);
  double wsum = 0.0, wbeta = 0.0;
  for (std::size_t w = 0; w < members.size(); ++w) {
    const auto& p = t.assignment_prob[w];
    const auto& l = len[w];
    const double nw = static_cast<double>(members[w].size());
    for (std::size_t j = 0; j < l.size(); ++j)
      for (std::size_t k = j + 1; k < l.size(); ++k) {
        const double omega = nw * p[j] * p[k] * (l[k] - l[j]) * (l[k] - l[j]);
        if (omega == 0.0) continue;
        double dy = 0.0, dx = 0.0;
        for (int i : members[w]) {
          const auto& x = t.potential[static_cast<std::size_t>(i)];
          dy += (x[k] ? t.y1[i] : t.y0[i]) - (x[j] ? t.y1[i] : t.y0[i]);
          dx += static_cast<double>(x[k]) - static_cast<double>(x[j]);
        }
        wsum += omega;
        wbeta += omega * dy / dx;
      }
  }
  f.pairwise = wbeta / wsum;
  f.omega_total = wsum;

  const LambdaForms lam = oracle_lambda(t);
  f.weighted = lam.covariance.dot(t.beta_i) / lam.covariance.sum();
  return f;
}

void finalize_truth(SyntheticTruth& t) {
  t.beta_i = t.y1 - t.y0;
  t.lambda = oracle_lambda(t).covariance;
  t.beta_star = oracle_beta_star(t).direct;
}

double super_population_beta_star(const SimConfig& cfg, const Calibration& cal) {
  if (cfg.outcome != OutcomeType::continuous) return std::numeric_limits<double>::quiet_NaN();
  const int J = cfg.examiners_per_cell;
  const double q = cfg.defier_fraction;
  const double gamma = cfg.effect_model == EffectModel::heterogeneous ? cfg.effect_heterogeneity : 0.0;
  const double shift = cfg.effect_model == EffectModel::heterogeneous ? cfg.defier_effect_shift : 0.0;
  double num = 0.0, den = 0.0;
  for (int w = 0; w < cfg.n_cells; ++w) {
    double lbar = 0.0;
    for (int k = 0; k < J; ++k) lbar += cal.examiner_leniency[static_cast<std::size_t>(w * J + k)] / J;
    for (int k = 0; k < J; ++k) {
      const auto idx = static_cast<std::size_t>(w * J + k);
      const double rel = cal.examiner_leniency[idx] - lbar;
      const double tp = cal.cell_threshold[static_cast<std::size_t>(w)] + cal.examiner_shift[idx];
      const double tm = cal.cell_threshold[static_cast<std::size_t>(w)] - cal.examiner_shift[idx];
      // E[1{a <= t}] = Phi(t) and E[1{a <= t}(-a)] = phi(t).
      const double xb = (1.0 - q) * (cfg.beta * Phi(tp) + gamma * phi(tp)) +
                        q * ((cfg.beta + shift) * Phi(tm) + gamma * phi(tm));
      num += rel * xb / J;
      den += rel * cal.examiner_leniency[idx] / J;
    }
  }
  return num / den;
}

namespace {

std::string padded(char prefix, int v, int width) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*d", prefix, width, v);
  return buf;
}

int digits(int v) {
  int d = 1;
  while (v >= 10) {
    v /= 10;
    ++d;
  }
  return d;
}

}  // namespace

Population generate(const SimConfig& cfg, std::uint64_t replication) {
  return generate(cfg, calibrate(cfg), replication, 0);
}

Population generate(const SimConfig& cfg, const Calibration& cal, std::uint64_t replication, std::uint64_t attempt) {
  cfg.validate();
  const int n = cfg.n, L = cfg.n_cells, J = cfg.examiners_per_cell;
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(replication), static_cast<std::uint32_t>(replication >> 32),
                    static_cast<std::uint32_t>(attempt), 0x5eedu};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> pick(0, J - 1);

  Population pop;
  SyntheticTruth& t = pop.truth;
  t.examiners_in_cell.assign(static_cast<std::size_t>(L), J);
  t.assignment_prob.assign(static_cast<std::size_t>(L), std::vector<double>(static_cast<std::size_t>(J), 1.0 / J));
  t.y0.resize(n);
  t.y1.resize(n);
  t.v_bin.resize(n);

  Dataset& d = pop.data;
  d.outcome.resize(n);
  d.treatment.resize(n);
  Eigen::VectorXd v_indep(n), v_bin(n), v_imb(n), v_part(n);
  std::vector<std::string> exam_labels, cell_labels;
  const int wd = digits(std::max(L - 1, 1)), kd = digits(std::max(J - 1, 1));
  const double kappa = cal.kappa;
  const double q = cfg.defier_fraction;

  for (int i = 0; i < n; ++i) {
    const int w = static_cast<int>(static_cast<long long>(i) * L / n);
    const int k = pick(rng);
    const double a = normal(rng);
    const bool defier = q > 0.0 && unif(rng) < q;
    const double e = normal(rng);

    std::vector<std::uint8_t> pot(static_cast<std::size_t>(J));
    double prop = 0.0;
    for (int j = 0; j < J; ++j) {
      const double shift = cal.examiner_shift[static_cast<std::size_t>(w * J + j)];
      pot[static_cast<std::size_t>(j)] = a <= cal.cell_threshold[static_cast<std::size_t>(w)] + (defier ? -shift : shift);
      prop += pot[static_cast<std::size_t>(j)];
    }
    prop /= J;
    // Scale depends on the case's own propensity across examiners, never on
    // the assigned examiner, so assignment stays excluded from the outcome.
    const double sigma = cfg.heteroskedasticity == Heteroskedasticity::leniency ? std::sqrt(0.2 + 1.6 * prop) : 1.0;
    const double eps = sigma * (kappa * (-a) + std::sqrt(1.0 - kappa * kappa) * e);
    double beta_i = cfg.beta;
    if (cfg.effect_model == EffectModel::heterogeneous)
      beta_i += cfg.effect_heterogeneity * (-a) + (defier ? cfg.defier_effect_shift : 0.0);
    const double alpha = 0.5 * std::sin(static_cast<double>(w));
    if (cfg.outcome == OutcomeType::continuous) {
      t.y0[i] = alpha + eps;
      t.y1[i] = alpha + beta_i + eps;
    } else {
      t.y0[i] = std::max(0.0, std::floor(2.0 + alpha + eps));
      t.y1[i] = std::max(0.0, std::floor(2.0 + alpha + beta_i + eps));
    }

    const bool x = pot[static_cast<std::size_t>(k)];
    d.treatment[i] = x ? 1.0 : 0.0;
    d.outcome[i] = x ? t.y1[i] : t.y0[i];
    t.cell.push_back(w);
    t.assigned.push_back(k);
    t.potential.push_back(std::move(pot));
    t.defier.push_back(defier);

    v_indep[i] = normal(rng);
    v_bin[i] = (a + normal(rng) > 0.0) ? 1.0 : 0.0;
    v_imb[i] = 0.5 * cal.examiner_shift[static_cast<std::size_t>(w * J + k)] / std::max(cal.spread, 1e-12) +
               normal(rng);
    const double vp = normal(rng);
    v_part[i] = unif(rng) < 0.2 ? std::numeric_limits<double>::quiet_NaN() : vp;
    t.v_bin[i] = v_bin[i];

    cell_labels.push_back(padded('w', w, wd));
    exam_labels.push_back(cell_labels.back() + padded('e', k, kd));
  }
  d.examiner = Categorical::intern(exam_labels);
  d.fixed_effects.push_back(FixedEffect{"cell", Categorical::intern(cell_labels)});
  d.covariates = {Covariate{"v_indep", v_indep}, Covariate{"v_bin", v_bin}, Covariate{"v_imbalanced", v_imb},
                  Covariate{"v_partial", v_part}};
  d.source_rows.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) d.source_rows[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i);

  finalize_truth(t);
  t.beta_star_super = super_population_beta_star(cfg, cal);
  return pop;
}

namespace {

struct RepOutcome {
  std::vector<double> beta, se;
  double F = std::numeric_limits<double>::quiet_NaN(), R2 = std::numeric_limits<double>::quiet_NaN();
  double beta_star = 0.0;
  int attempts = 0;
  double weak_iv_p = std::numeric_limits<double>::quiet_NaN();
  int mono_flag = -1;
  std::string error;
};

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m), v.end());
  double med = v[m];
  if (v.size() % 2 == 0) med = 0.5 * (med + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(m)));
  return med;
}

}  // namespace

MonteCarloSummary monte_carlo(const SimConfig& cfg, const MonteCarloOptions& opts) {
  if (opts.reps < 2) throw ConfigError("monte carlo needs at least 2 replications");
  if (opts.kinds.empty()) throw ConfigError("monte carlo needs at least one estimator");
  MonteCarloSummary s;
  s.config = cfg;
  s.calibration = calibrate(cfg);
  s.reps = opts.reps;
  const double super = super_population_beta_star(cfg, s.calibration);
  const std::size_t nk = opts.kinds.size();

  std::vector<RepOutcome> out(static_cast<std::size_t>(opts.reps));
  auto run = [&](int r) {
    RepOutcome& o = out[static_cast<std::size_t>(r)];
    for (int attempt = 0; attempt < opts.max_attempts; ++attempt) {
      o.attempts = attempt + 1;
      try {
        const Population pop = generate(cfg, s.calibration, static_cast<std::uint64_t>(r),
                                        static_cast<std::uint64_t>(attempt));
        const PrunedDesign pd = prune(pop.data, Exec::serial);
        const Eigen::VectorXd& y = pd.data.outcome;
        const Eigen::VectorXd& x = pd.data.treatment;
        o.beta.assign(nk, std::numeric_limits<double>::quiet_NaN());
        o.se.assign(nk, std::numeric_limits<double>::quiet_NaN());
        for (std::size_t j = 0; j < nk; ++j) {
          const EstimatorResult er = estimate(GMatrix(pd.context, opts.kinds[j]), y, x);
          if (j == 0 && er.first_stage) {
            o.F = er.first_stage->F;
            o.R2 = er.first_stage->partial_R2;
          }
          if (er.defined) {
            o.beta[j] = er.beta_hat;
            o.se[j] = er.se_robust.value_or(std::numeric_limits<double>::quiet_NaN());
          }
        }
        o.beta_star = pop.truth.beta_star;
        const double target = std::isnan(super) ? pop.truth.beta_star : super;
        if (opts.weak_iv) o.weak_iv_p = WeakIVTest(GMatrix(pd.context, EstimatorKind::UJIVE), y, x).p_value(target);
        if (opts.monotonicity)
          o.mono_flag = monotonicity_test(pd.context, y, x, default_bins(y), opts.alpha).any_flagged ? 1 : 0;
        o.error.clear();
        return;
      } catch (const DegenerateDesignError& e) {
        o.error = e.what();
      }
    }
  };

  if (opts.exec == Exec::parallel) {
#pragma omp parallel for schedule(dynamic)
    for (int r = 0; r < opts.reps; ++r) {
      try {
        run(r);
      } catch (const std::exception& e) {
        out[static_cast<std::size_t>(r)].error = std::string("fatal: ") + e.what();
      }
    }
  } else {
    for (int r = 0; r < opts.reps; ++r) run(r);
  }
  for (const auto& o : out) {
    if (o.error.rfind("fatal: ", 0) == 0) throw std::runtime_error(o.error.substr(7));
    if (!o.error.empty())
      throw DegenerateDesignError("replication failed after " + std::to_string(opts.max_attempts) +
                                  " attempts: " + o.error);
    s.reruns += o.attempts - 1;
  }

  // Aggregate in replication order.
  double fsum = 0.0, r2sum = 0.0, bstar = 0.0;
  int fcount = 0;
  for (const auto& o : out) {
    if (std::isfinite(o.F)) {
      fsum += o.F;
      r2sum += o.R2;
      ++fcount;
    }
    bstar += o.beta_star;
  }
  s.mean_F = fcount ? fsum / fcount : std::numeric_limits<double>::quiet_NaN();
  s.mean_partial_R2 = fcount ? r2sum / fcount : std::numeric_limits<double>::quiet_NaN();
  s.target = std::isnan(super) ? bstar / opts.reps : super;

  for (std::size_t j = 0; j < nk; ++j) {
    KindSummary k;
    k.kind = opts.kinds[j];
    std::vector<double> vals;
    double sum = 0.0, se_sum = 0.0;
    int covered = 0;
    for (const auto& o : out) {
      if (std::isnan(o.beta[j])) continue;
      vals.push_back(o.beta[j]);
      sum += o.beta[j];
      se_sum += o.se[j];
      covered += std::fabs(o.beta[j] - s.target) <= 1.959963984540054 * o.se[j];
    }
    k.defined = static_cast<int>(vals.size());
    if (k.defined > 0) {
      k.mean = sum / k.defined;
      k.bias = k.mean - s.target;
      k.median = median_of(vals);
      double ss = 0.0;
      for (double v : vals) ss += (v - k.mean) * (v - k.mean);
      k.sd = k.defined > 1 ? std::sqrt(ss / (k.defined - 1)) : 0.0;
      k.mc_se = k.sd / std::sqrt(static_cast<double>(k.defined));
      k.coverage = static_cast<double>(covered) / k.defined;
      k.mean_se = se_sum / k.defined;
    }
    s.kinds.push_back(k);
  }

  s.bias_ratio_predicted = 1.0 / ((1.0 - s.calibration.partial_R2) * s.calibration.expected_F);
  const KindSummary* ols = nullptr;
  const KindSummary* tsls = nullptr;
  for (const auto& k : s.kinds) {
    if (k.kind == EstimatorKind::OLS) ols = &k;
    if (k.kind == EstimatorKind::TSLS) tsls = &k;
  }
  if (ols && tsls && ols->bias != 0.0) s.bias_ratio_empirical = tsls->bias / ols->bias;

  if (opts.weak_iv) {
    int rej = 0;
    for (const auto& o : out) rej += o.weak_iv_p <= opts.alpha;
    s.weak_iv_rejection = static_cast<double>(rej) / opts.reps;
  }
  if (opts.monotonicity) {
    int flagged = 0;
    for (const auto& o : out) flagged += o.mono_flag == 1;
    s.monotonicity_flag_rate = static_cast<double>(flagged) / opts.reps;
  }
  return s;
}

}  // namespace leniency
