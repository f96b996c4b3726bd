#include "leniency/inference.hpp"

#include <algorithm>
#include <cmath>

#include "leniency/error.hpp"

namespace leniency {

double normal_two_sided_p(double z) { return std::erfc(std::fabs(z) / std::sqrt(2.0)); }

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InputError("normal quantile needs p in (0, 1)");
  // Bisection on the CDF; 200 halvings reach the double resolution.
  double lo = -40.0, hi = 40.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (0.5 * std::erfc(-mid / std::sqrt(2.0)) < p)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

namespace {

struct Noise {
  Eigen::VectorXd nu;    // (M-H)x / sqrt(1 - D_Q)
  Eigen::VectorXd full;  // H_Q x
};

Noise noise(const DesignContext& ctx, const Eigen::VectorXd& v) {
  Noise out;
  out.full = ctx.project_full(v);
  out.nu = ((v - out.full).array() / ctx.residual_leverage().array().sqrt()).matrix();
  return out;
}

// sum_ij G_ij^2 s_i t_j + G_ij G_ji c_i d_j, one column of G at a time.
double bekker_sum(const GMatrix& g, const Eigen::VectorXd& s, const Eigen::VectorXd& t, const Eigen::VectorXd& c,
                  const Eigen::VectorXd& d) {
  const int n = g.context().n();
  Eigen::VectorXd per_col(n);
#pragma omp parallel for schedule(static)
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    e[j] = 1.0;
    const Eigen::VectorXd u = g.apply(e);
    const double sq = (u.array().square() * s.array()).sum() * t[j];
    const double cross = g.apply(c.cwiseProduct(u))[j] * d[j];
    per_col[j] = sq + cross;
  }
  return per_col.sum();
}

}  // namespace

VarianceComponents robust_se(const EstimatorResult& result, const GMatrix& g, const Eigen::VectorXd& y,
                             const Eigen::VectorXd& x, bool decompose) {
  if (!result.defined) throw DegenerateDesignError("variance undefined: x'Gx is zero");
  const DesignContext& ctx = g.context();
  VarianceComponents vc;
  vc.leniency = g.apply(x);
  const Eigen::VectorXd u = y - result.beta_hat * x;
  vc.residuals = ctx.residualize_controls(u);
  const double d2 = result.denominator * result.denominator;
  const double main = (vc.residuals.array() * vc.leniency.array()).square().sum();
  vc.sigma_hat_sq = main / d2;

  if (decompose && ctx.n() <= kDenseDiagnosticLimit) {
    const Noise nx = noise(ctx, x), nu = noise(ctx, u);
    // Signal terms r = G' H_Q x and r_Y - r beta = G' H_Q (y - x beta).
    const Eigen::VectorXd r_u = g.apply_transpose(nu.full);
    const Eigen::ArrayXd contrib = vc.leniency.array() * vc.residuals.array() + r_u.array() * nx.nu.array();
    VarianceTerms t;
    t.main = main / d2;
    t.heterogeneity = contrib.square().sum() / d2 - t.main;
    const Eigen::VectorXd s_uu = nu.nu.cwiseAbs2(), s_xx = nx.nu.cwiseAbs2(), s_ux = nu.nu.cwiseProduct(nx.nu);
    t.bekker = bekker_sum(g, s_uu, s_xx, s_ux, s_ux) / d2;
    vc.terms = t;
  }
  return vc;
}

WeakIVTest::WeakIVTest(const GMatrix& ujive, const Eigen::VectorXd& y, const Eigen::VectorXd& x) {
  const DesignContext& ctx = ujive.context();
  if (y.size() != ctx.n() || x.size() != ctx.n()) throw InputError("outcome/treatment length does not match the design");
  g_ = ujive.apply(x);
  my_ = ctx.residualize_controls(y);
  mx_ = ctx.residualize_controls(x);
  yg_ = y.dot(g_);
  xg_ = x.dot(g_);
}

double WeakIVTest::statistic(double beta0) const {
  const double num = yg_ - beta0 * xg_;
  const double den2 = ((my_ - beta0 * mx_).array() * g_.array()).square().sum();
  if (den2 == 0.0) return num == 0.0 ? 0.0 : std::copysign(INFINITY, num);
  return num / std::sqrt(den2);
}

double WeakIVTest::p_value(double beta0) const { return normal_two_sided_p(statistic(beta0)); }

WeakIVTestResult WeakIVTest::at(double beta0) const {
  WeakIVTestResult r;
  r.beta0 = beta0;
  r.statistic = statistic(beta0);
  r.p_value = normal_two_sided_p(r.statistic);
  return r;
}

Grid WeakIVTest::default_grid(const EstimatorResult& ujive) {
  if (!ujive.defined || !ujive.se_robust) throw DegenerateDesignError("default grid needs a defined UJIVE estimate");
  const double half = 10.0 * *ujive.se_robust;
  return Grid{ujive.beta_hat - half, ujive.beta_hat + half, 401};
}

WeakIVTestResult WeakIVTest::invert(double beta0, const Grid& grid, double alpha, Exec exec) const {
  if (grid.points < 1 || !std::isfinite(grid.lo) || !std::isfinite(grid.hi) || grid.hi < grid.lo)
    throw InputError("weak-IV grid is empty or malformed");
  WeakIVTestResult r = at(beta0);
  const int m = grid.points;
  const double step = m > 1 ? (grid.hi - grid.lo) / (m - 1) : 0.0;
  auto point = [&](int i) { return i == m - 1 ? grid.hi : grid.lo + step * i; };
  std::vector<char> accept(static_cast<std::size_t>(m));
  if (exec == Exec::parallel) {
#pragma omp parallel for schedule(static)
    for (int i = 0; i < m; ++i) accept[static_cast<std::size_t>(i)] = p_value(point(i)) > alpha;
  } else {
    for (int i = 0; i < m; ++i) accept[static_cast<std::size_t>(i)] = p_value(point(i)) > alpha;
  }
  // Move an endpoint from the accepted grid point toward its rejected neighbour.
  auto refine = [&](double in, double out) {
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (in + out);
      if (p_value(mid) > alpha)
        in = mid;
      else
        out = mid;
    }
    return in;
  };
  for (int i = 0; i < m;) {
    if (!accept[static_cast<std::size_t>(i)]) {
      ++i;
      continue;
    }
    int j = i;
    while (j + 1 < m && accept[static_cast<std::size_t>(j + 1)]) ++j;
    Interval iv{point(i), point(j)};
    if (i == 0)
      r.unbounded_below = true;
    else
      iv.lo = refine(point(i), point(i - 1));
    if (j == m - 1)
      r.unbounded_above = true;
    else
      iv.hi = refine(point(j), point(j + 1));
    r.confidence_set.push_back(iv);
    i = j + 1;
  }
  r.empty = r.confidence_set.empty();
  return r;
}

WeakIVTestResult weak_iv_test(const GMatrix& ujive, const Eigen::VectorXd& y, const Eigen::VectorXd& x, double beta0) {
  return WeakIVTest(ujive, y, x).at(beta0);
}

SigmaHat estimate_sigma(const GMatrix& g, const Eigen::VectorXd& y, const Eigen::VectorXd& x, int dense_limit) {
  const DesignContext& ctx = g.context();
  const Eigen::VectorXd gx = g.apply(x);
  const Noise nx = noise(ctx, x), ny = noise(ctx, y);
  const Eigen::VectorXd r = g.apply_transpose(nx.full);
  const Eigen::VectorXd r_y = g.apply_transpose(ny.full);
  const Eigen::ArrayXd a = gx.array() * ny.nu.array() + r_y.array() * nx.nu.array();
  const Eigen::ArrayXd b = gx.array() * nx.nu.array() + r.array() * nx.nu.array();
  SigmaHat s;
  s.s11 = a.square().sum();
  s.s12 = (a * b).sum();
  s.s22 = b.square().sum();
  if (ctx.n() <= dense_limit) {
    const Eigen::VectorXd s_yy = ny.nu.cwiseAbs2(), s_xx = nx.nu.cwiseAbs2(), s_yx = ny.nu.cwiseProduct(nx.nu);
    s.s11 += bekker_sum(g, s_yy, s_xx, s_yx, s_yx);
    s.s12 += bekker_sum(g, s_yx, s_xx, s_yx, s_xx);
    s.s22 += bekker_sum(g, s_xx, s_xx, s_xx, s_xx);
    s.includes_bekker = true;
  }
  return s;
}

double rho_at(const SigmaHat& s, double beta_star) {
  if (!(s.s22 > 0.0)) throw DegenerateDesignError("rho diagnostic unavailable: non-positive denominator variance");
  if (std::isinf(beta_star)) return beta_star > 0 ? -1.0 : 1.0;
  const double v = s.s11 - 2.0 * beta_star * s.s12 + beta_star * beta_star * s.s22;
  if (!(v > 0.0)) throw DegenerateDesignError("rho diagnostic unavailable: non-positive numerator variance");
  return (s.s12 - s.s22 * beta_star) / std::sqrt(s.s22 * v);
}

RhoDiagnostic rho_diagnostic(const SigmaHat& sigma, double beta_lo, double beta_hi) {
  if (beta_hi < beta_lo) std::swap(beta_lo, beta_hi);
  RhoDiagnostic d;
  d.sigma = sigma;
  const double a = rho_at(sigma, beta_lo), b = rho_at(sigma, beta_hi);
  d.lo = std::min(a, b);
  d.hi = std::max(a, b);
  d.flag_076 = std::max(std::fabs(d.lo), std::fabs(d.hi)) >= kRhoThreshold;
  return d;
}

RhoDiagnostic rho_diagnostic(const GMatrix& g, const Eigen::VectorXd& y, const Eigen::VectorXd& x, double beta_lo,
                             double beta_hi) {
  return rho_diagnostic(estimate_sigma(g, y, x), beta_lo, beta_hi);
}

}  // namespace leniency
