#pragma once

#include <optional>

#include <Eigen/Core>

#include "leniency/gmatrix.hpp"

namespace leniency {

// Homoskedastic first-stage diagnostics.
struct FirstStageStats {
  double F = 0.0;           // +inf when the residual variance is exactly 0
  double partial_R2 = 0.0;  // x'Hx / x'Mx
  double leniency_ss = 0.0; // x'Hx, the sample sum of squared fitted relative leniency
  double var_nu_hat = 0.0;  // x'(M-H)x / (n-K-L)
};

struct EstimatorResult {
  EstimatorKind kind = EstimatorKind::UJIVE;
  bool defined = false;  // false when x'Gx is zero up to round-off; beta_hat is NaN then
  double beta_hat = 0.0;
  double numerator = 0.0;    // y'Gx
  double denominator = 0.0;  // x'Gx
  int n = 0, K = 0, L = 0;
  std::optional<FirstStageStats> first_stage;  // absent when n-K-L <= 0 or K == 0
  std::optional<double> se_plain;
  std::optional<double> se_robust;
};

// Throws DegenerateDesignError when n - K - L <= 0 or K == 0.
FirstStageStats first_stage(const DesignContext& ctx, const Eigen::VectorXd& x);

// beta = y'Gx / x'Gx with both standard errors.
EstimatorResult estimate(const GMatrix& g, const Eigen::VectorXd& y, const Eigen::VectorXd& x);
EstimatorResult estimate(const DesignContext& ctx, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                         EstimatorKind kind);

// Same as estimate() when the leniency vector g = Gx is already known.
EstimatorResult estimate_with_leniency(const GMatrix& g, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& gx);

// Plug-in robust variance sum_i e_i^2 g_i^2 / (x'Gx)^2 with e = M(y - x beta).
double robust_variance(const DesignContext& ctx, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& gx, double beta, double denominator);

struct BiasRules {
  double tsls_rel_bias = 0.0;                 // 1 / ((1 - R^2) E[F])
  std::optional<double> jive_rel_bias_vs_tsls;  // -E[F] L / ((E[F]-1) K - L); absent when undefined
};

// Throws InputError for R2 outside [0, 1) or non-positive E[F].
BiasRules bias_rules(double expected_F, double R2, int K, int L);

}  // namespace leniency
