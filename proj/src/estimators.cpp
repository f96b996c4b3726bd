#include "leniency/estimators.hpp"

#include <cmath>
#include <limits>

#include "leniency/error.hpp"

namespace leniency {

namespace {

// Squared norms below this fraction of x'x are projection round-off.
constexpr double kRoundoff = 1e-24;
// |x'Gx| below this fraction of x'x is treated as a zero denominator.
constexpr double kZeroDenominator = 1e-12;

}  // namespace

FirstStageStats first_stage(const DesignContext& ctx, const Eigen::VectorXd& x) {
  const int dof = ctx.n() - ctx.K() - ctx.L();
  if (ctx.K() == 0) throw DegenerateDesignError("first stage: no instruments survive pruning");
  if (dof <= 0)
    throw DegenerateDesignError("first stage: n - K - L = " + std::to_string(dof) +
                                " leaves no degrees of freedom");
  Eigen::VectorXd full, ctrl;
  ctx.project(x, full, ctrl);
  const Eigen::VectorXd hx = full - ctrl;
  const Eigen::VectorXd mx = x - ctrl;
  const Eigen::VectorXd resid = x - full;

  const double floor = kRoundoff * x.squaredNorm();
  auto clean = [floor](double v) { return v <= floor ? 0.0 : v; };
  FirstStageStats fs;
  fs.leniency_ss = clean(hx.squaredNorm());
  fs.var_nu_hat = clean(resid.squaredNorm()) / dof;
  const double xmx = clean(mx.squaredNorm());
  fs.partial_R2 = xmx > 0.0 ? fs.leniency_ss / xmx : 0.0;
  if (fs.leniency_ss == 0.0)
    fs.F = 0.0;
  else if (fs.var_nu_hat == 0.0)
    fs.F = std::numeric_limits<double>::infinity();
  else
    fs.F = fs.leniency_ss / (ctx.K() * fs.var_nu_hat);
  return fs;
}

double robust_variance(const DesignContext& ctx, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& gx, double beta, double denominator) {
  const Eigen::VectorXd e = ctx.residualize_controls(y - beta * x);
  return (e.array() * gx.array()).square().sum() / (denominator * denominator);
}

EstimatorResult estimate_with_leniency(const GMatrix& g, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                                       const Eigen::VectorXd& gx) {
  const DesignContext& ctx = g.context();
  if (y.size() != ctx.n() || x.size() != ctx.n())
    throw InputError("outcome/treatment length does not match the design");
  EstimatorResult r;
  r.kind = g.kind();
  r.n = ctx.n();
  r.K = ctx.K();
  r.L = ctx.L();
  r.numerator = y.dot(gx);
  r.denominator = x.dot(gx);
  try {
    r.first_stage = first_stage(ctx, x);
  } catch (const DegenerateDesignError&) {
    r.first_stage.reset();
  }
  r.defined = std::isfinite(r.denominator) && std::abs(r.denominator) > kZeroDenominator * x.squaredNorm();
  if (!r.defined) {
    r.beta_hat = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.beta_hat = r.numerator / r.denominator;

  const Eigen::VectorXd e = ctx.residualize_controls(y - r.beta_hat * x);
  const double d2 = r.denominator * r.denominator;
  r.se_robust = std::sqrt((e.array() * gx.array()).square().sum() / d2);
  const int dof = r.n - r.L - 1;
  if (dof > 0) r.se_plain = std::sqrt(e.squaredNorm() / dof * gx.squaredNorm() / d2);
  return r;
}

EstimatorResult estimate(const GMatrix& g, const Eigen::VectorXd& y, const Eigen::VectorXd& x) {
  if (x.size() != g.context().n()) throw InputError("treatment length does not match the design");
  return estimate_with_leniency(g, y, x, g.apply(x));
}

EstimatorResult estimate(const DesignContext& ctx, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                         EstimatorKind kind) {
  const GMatrix g(ctx, kind);
  return estimate(g, y, x);
}

BiasRules bias_rules(double expected_F, double R2, int K, int L) {
  if (!(R2 >= 0.0 && R2 < 1.0)) throw InputError("bias rules need R^2 in [0, 1)");
  if (!(expected_F > 0.0)) throw InputError("bias rules need E[F] > 0");
  BiasRules b;
  b.tsls_rel_bias = 1.0 / ((1.0 - R2) * expected_F);
  const double denom = (expected_F - 1.0) * K - L;
  if (denom != 0.0) b.jive_rel_bias_vs_tsls = -expected_F * L / denom;
  return b;
}

}  // namespace leniency
