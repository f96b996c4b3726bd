#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "leniency/dataset.hpp"
#include "leniency/gmatrix.hpp"

namespace leniency {

enum class EffectModel { constant, heterogeneous };
enum class Heteroskedasticity { none, leniency };
enum class OutcomeType { continuous, count };

// Threshold-crossing population. Cell w has threshold c_w; examiner k of the
// cell shifts it by d_k = spread * z_k with z standardized within the cell.
// Case i draws a_i ~ N(0,1) and a type s_i (-1 with probability
// defier_fraction) and is treated by k iff a_i <= c_w + s_i d_k.
struct SimConfig {
  int n = 2000;
  int n_cells = 20;
  int examiners_per_cell = 6;
  double leniency_spread = 0.5;
  // When set, leniency_spread is solved so the population E[F] hits it.
  std::optional<double> target_F;
  double endogeneity = 0.5;  // corr(eps, nu) under homoskedasticity
  EffectModel effect_model = EffectModel::constant;
  double beta = 1.0;
  double effect_heterogeneity = 0.0;  // gamma in beta_i = beta + gamma (-a_i)
  double defier_fraction = 0.0;
  double defier_effect_shift = 0.0;
  Heteroskedasticity heteroskedasticity = Heteroskedasticity::none;
  OutcomeType outcome = OutcomeType::continuous;
  double baseline_threshold = 0.0;
  double cell_threshold_spread = 0.5;
  std::uint64_t seed = 1;

  // Throws ConfigError on any violated invariant.
  void validate() const;
  // Keys match the field names; enums take their lower-case names.
  static SimConfig from_kv(const std::map<std::string, std::string>& kv);
  std::map<std::string, std::string> to_kv() const;
};

// Reads "key = value" lines; '#' starts a comment.
std::map<std::string, std::string> read_kv_file(const std::string& path);

// Population quantities implied by a config.
struct Calibration {
  double spread = 0.0;
  double expected_F = 0.0;
  double partial_R2 = 0.0;  // from K(E[F]-1) = n R^2 / (1 - R^2)
  double kappa = 0.0;
  double var_nu = 0.0;
  int K = 0, L = 0;
  std::vector<double> cell_threshold;     // c_w
  std::vector<double> examiner_shift;     // d_k, indexed w * J + k
  std::vector<double> examiner_leniency;  // population l(k, w)
};

Calibration calibrate(const SimConfig& cfg);

struct SyntheticTruth {
  std::vector<int> cell;      // per case
  std::vector<int> assigned;  // examiner index within the case's cell
  std::vector<int> examiners_in_cell;
  std::vector<std::vector<double>> assignment_prob;   // per cell, per examiner
  std::vector<std::vector<std::uint8_t>> potential;  // per case, x_i(k) for k in own cell
  Eigen::VectorXd y0, y1;     // potential outcomes
  Eigen::VectorXd beta_i;     // y1 - y0
  std::vector<std::uint8_t> defier;
  Eigen::VectorXd lambda;     // LATE weights (covariance form)
  double beta_star = 0.0;     // finite-population estimand
  double beta_star_super = 0.0;  // infinite-population estimand (continuous outcomes), else NaN
  Eigen::VectorXd v_bin;      // binary covariate, for complier-mean checks

  int n() const { return static_cast<int>(cell.size()); }
  // Finite-population leniency l(k, w): mean over the cell's cases of x_i(k).
  std::vector<std::vector<double>> leniency() const;
};

struct Population {
  Dataset data;
  SyntheticTruth truth;
};

// Deterministic in (cfg, replication). Covariates: v_indep, v_bin,
// v_imbalanced (shifted by the assigned examiner's leniency) and v_partial
// (20% missing).
Population generate(const SimConfig& cfg, std::uint64_t replication = 0);
Population generate(const SimConfig& cfg, const Calibration& cal, std::uint64_t replication,
                    std::uint64_t attempt = 0);

struct BetaStarForms {
  double direct = 0.0;    // E[l_dd y] / E[l_dd x]
  double pairwise = 0.0;  // sum omega beta(j,k,w) / sum omega
  double weighted = 0.0;  // E[lambda beta_i] / E[lambda]
  double omega_total = 0.0;
};

struct LambdaForms {
  Eigen::VectorXd pairwise;     // sum_{j<k} p_j p_k (l_k - l_j)(x_i(k) - x_i(j))
  Eigen::VectorXd closed_form;  // P(x=1) P(x=0) (lbar(1) - lbar(0))
  Eigen::VectorXd covariance;   // cov(x_i(k), l(k, w) | w)
};

BetaStarForms oracle_beta_star(const SyntheticTruth& truth);
LambdaForms oracle_lambda(const SyntheticTruth& truth);
// Fills lambda and beta_star from the oracles.
void finalize_truth(SyntheticTruth& truth);

double super_population_beta_star(const SimConfig& cfg, const Calibration& cal);

struct MonteCarloOptions {
  int reps = 500;
  std::vector<EstimatorKind> kinds{EstimatorKind::OLS, EstimatorKind::TSLS, EstimatorKind::UJIVE,
                                   EstimatorKind::B2SLS, EstimatorKind::JIVE, EstimatorKind::IJIVE};
  bool weak_iv = false;        // test beta0 = target each replication
  bool monotonicity = false;   // run the bin test each replication
  double alpha = 0.05;
  int max_attempts = 5;
  Exec exec = Exec::parallel;
};

struct KindSummary {
  EstimatorKind kind = EstimatorKind::UJIVE;
  int defined = 0;
  double mean = 0.0, median = 0.0, bias = 0.0, sd = 0.0, mc_se = 0.0;
  double coverage = 0.0;  // robust-SE 95% interval covers target
  double mean_se = 0.0;
};

struct MonteCarloSummary {
  SimConfig config;
  Calibration calibration;
  int reps = 0;
  int reruns = 0;
  double target = 0.0;
  double mean_F = 0.0, mean_partial_R2 = 0.0;
  std::vector<KindSummary> kinds;
  std::optional<double> bias_ratio_empirical;  // (2SLS bias) / (OLS bias)
  double bias_ratio_predicted = 0.0;           // 1 / ((1 - R^2) E[F])
  std::optional<double> weak_iv_rejection;
  std::optional<double> monotonicity_flag_rate;
};

MonteCarloSummary monte_carlo(const SimConfig& cfg, const MonteCarloOptions& opts);

std::string to_string(EffectModel m);
std::string to_string(Heteroskedasticity h);
std::string to_string(OutcomeType o);

}  // namespace leniency
