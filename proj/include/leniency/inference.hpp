#pragma once

#include <optional>
#include <vector>

#include <Eigen/Core>

#include "leniency/estimators.hpp"

namespace leniency {

inline constexpr int kDenseDiagnosticLimit = 5000;

// Descriptive split of the variance numerator; every term is already divided
// by (x'Gx)^2.
struct VarianceTerms {
  double main = 0.0;           // sum g_i^2 e_i^2
  double heterogeneity = 0.0;  // increment from the (r_Y - r beta) nu terms
  double bekker = 0.0;         // many-instrument term
};

struct VarianceComponents {
  double sigma_hat_sq = 0.0;  // plug-in, equals se_robust^2
  std::optional<VarianceTerms> terms;  // only for n <= kDenseDiagnosticLimit
  Eigen::VectorXd residuals;  // e = M(y - x beta)
  Eigen::VectorXd leniency;   // Gx
};

// Throws DegenerateDesignError when the estimate is undefined.
VarianceComponents robust_se(const EstimatorResult& result, const GMatrix& g, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& x, bool decompose = true);

struct Interval {
  double lo = 0.0, hi = 0.0;
};

struct WeakIVTestResult {
  double beta0 = 0.0;
  double statistic = 0.0;
  double p_value = 1.0;
  // Filled by invert_weak_iv_test; contiguous accepted runs of the grid with
  // endpoints refined by bisection.
  std::vector<Interval> confidence_set;
  bool empty = false;
  bool unbounded_below = false;
  bool unbounded_above = false;
};

struct Grid {
  double lo = 0.0, hi = 0.0;
  int points = 401;
};

// UJIVE test of beta = beta0 using null-imposed residuals.
class WeakIVTest {
 public:
  WeakIVTest(const GMatrix& ujive, const Eigen::VectorXd& y, const Eigen::VectorXd& x);

  double statistic(double beta0) const;
  double p_value(double beta0) const;
  WeakIVTestResult at(double beta0) const;
  // Accepts beta0 where p > alpha. Throws InputError for an empty grid.
  WeakIVTestResult invert(double beta0, const Grid& grid, double alpha = 0.05, Exec exec = Exec::parallel) const;
  // Default grid: beta_hat +/- 10 se_robust, 401 points.
  static Grid default_grid(const EstimatorResult& ujive);

 private:
  Eigen::VectorXd my_, mx_, g_;
  double yg_ = 0.0, xg_ = 0.0;
};

WeakIVTestResult weak_iv_test(const GMatrix& ujive, const Eigen::VectorXd& y, const Eigen::VectorXd& x, double beta0);

// Plug-in estimate of the covariance of (y'Gx, x'Gx).
struct SigmaHat {
  double s11 = 0.0, s12 = 0.0, s22 = 0.0;
  bool includes_bekker = false;
};

SigmaHat estimate_sigma(const GMatrix& g, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                        int dense_limit = kDenseDiagnosticLimit);

struct RhoDiagnostic {
  double lo = 0.0, hi = 0.0;  // equal for a point beta*
  bool flag_076 = false;      // some |rho| >= 0.76
  SigmaHat sigma;
};

inline constexpr double kRhoThreshold = 0.76;

// Throws DegenerateDesignError when sigma is degenerate.
double rho_at(const SigmaHat& s, double beta_star);
RhoDiagnostic rho_diagnostic(const GMatrix& g, const Eigen::VectorXd& y, const Eigen::VectorXd& x, double beta_lo,
                             double beta_hi);
RhoDiagnostic rho_diagnostic(const SigmaHat& sigma, double beta_lo, double beta_hi);

double normal_two_sided_p(double z);
double normal_quantile(double p);

}  // namespace leniency
