#include <random>

#include "doctest.h"

#include "dense_oracle.hpp"
#include "leniency/error.hpp"
#include "leniency/inference.hpp"

using namespace leniency;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd normals(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = nd(rng);
  return v;
}

struct Design {
  oracle::Layout lay;
  VectorXd y, x;
  Design(int n, int cells, int per_cell, double strength, std::mt19937_64& rng) {
    lay = oracle::random_layout(n, cells, per_cell, rng);
    VectorXd pi(lay.Z.cols());
    for (int k = 0; k < pi.size(); ++k) pi[k] = strength * ((k % 4) - 1.5);
    const VectorXd u = normals(n, rng);
    x = lay.Z * pi + u;
    y = 0.5 * x + 0.6 * u + normals(n, rng).cwiseProduct((1.0 + x.array().abs()).matrix());
  }
};

}  // namespace

TEST_CASE("noise-free outcome gives zero standard error") {
  std::mt19937_64 rng(1);
  Design d(100, 3, 4, 0.5, rng);
  const auto ctx = DesignContext::from_matrices(d.lay.W, d.lay.Z, Exec::serial);
  const VectorXd y = 1.7 * d.x + d.lay.W.col(0);
  for (EstimatorKind k : {EstimatorKind::UJIVE, EstimatorKind::TSLS, EstimatorKind::OLS}) {
    const auto r = estimate(ctx, y, d.x, k);
    REQUIRE(r.se_robust.has_value());
    CHECK(*r.se_robust < 1e-10);
  }
}

TEST_CASE("robust and plain se match dense formulas") {
  std::mt19937_64 rng(2);
  Design d(90, 3, 5, 0.4, rng);
  const auto dn = oracle::build(d.lay.W, d.lay.Z);
  const auto ctx = DesignContext::from_matrices(d.lay.W, d.lay.Z, Exec::serial);
  for (EstimatorKind k : all_estimators()) {
    CAPTURE(to_string(k));
    const MatrixXd g = oracle::g_matrix(dn, k);
    const VectorXd gx = g * d.x;
    const double den = d.x.dot(gx), beta = d.y.dot(gx) / den;
    const VectorXd e = dn.M * (d.y - beta * d.x);
    const double se = std::sqrt((e.array() * gx.array()).square().sum()) / std::abs(den);
    const double plain = std::sqrt(e.squaredNorm() / (dn.n - dn.L - 1) * gx.squaredNorm()) / std::abs(den);
    const auto r = estimate(ctx, d.y, d.x, k);
    CHECK(*r.se_robust == doctest::Approx(se).epsilon(1e-8));
    REQUIRE(r.se_plain.has_value());
    CHECK(*r.se_plain == doctest::Approx(plain).epsilon(1e-8));
    const GMatrix gm(ctx, k);
    const auto vc = robust_se(r, gm, d.y, d.x);
    CHECK(std::sqrt(vc.sigma_hat_sq) == doctest::Approx(*r.se_robust).epsilon(1e-12));
    REQUIRE(vc.terms.has_value());
    CHECK(vc.terms->main == doctest::Approx(vc.sigma_hat_sq));
    CHECK(vc.terms->bekker >= -1e-12);
  }
}

TEST_CASE("robust se ignores shifts of y along W") {
  std::mt19937_64 rng(3);
  Design d(120, 4, 4, 0.5, rng);
  const auto ctx = DesignContext::from_matrices(d.lay.W, d.lay.Z, Exec::serial);
  const VectorXd y2 = d.y + d.lay.W * VectorXd::LinSpaced(4, -3, 5);
  const auto a = estimate(ctx, d.y, d.x, EstimatorKind::UJIVE);
  const auto b = estimate(ctx, y2, d.x, EstimatorKind::UJIVE);
  CHECK(std::abs(*a.se_robust - *b.se_robust) < 1e-8);
  CHECK(std::abs(a.beta_hat - b.beta_hat) < 1e-8);
}

TEST_CASE("weak-IV statistic") {
  std::mt19937_64 rng(4);
  Design d(100, 3, 4, 0.5, rng);
  const auto dn = oracle::build(d.lay.W, d.lay.Z);
  const auto ctx = DesignContext::from_matrices(d.lay.W, d.lay.Z, Exec::serial);
  const GMatrix g(ctx, EstimatorKind::UJIVE);
  SUBCASE("y = 0 at beta0 = 0") {
    const auto r = weak_iv_test(g, VectorXd::Zero(100), d.x, 0.0);
    CHECK(r.statistic == 0.0);
    CHECK(r.p_value == 1.0);
  }
  SUBCASE("dense formula") {
    const MatrixXd gd = oracle::g_matrix(dn, EstimatorKind::UJIVE);
    const VectorXd gx = gd * d.x;
    for (double b0 : {-1.0, 0.0, 0.3, 2.0}) {
      const VectorXd u = d.y - b0 * d.x;
      const VectorXd e0 = dn.M * u;
      const double stat = u.dot(gx) / std::sqrt((e0.array() * gx.array()).square().sum());
      const auto r = weak_iv_test(g, d.y, d.x, b0);
      CHECK(r.statistic == doctest::Approx(stat).epsilon(1e-9));
      CHECK(r.p_value == doctest::Approx(std::erfc(std::abs(stat) / std::sqrt(2.0))).epsilon(1e-9));
    }
  }
  SUBCASE("p at the UJIVE estimate is one") {
    const auto est = estimate(g, d.y, d.x);
    CHECK(WeakIVTest(g, d.y, d.x).p_value(est.beta_hat) == doctest::Approx(1.0));
  }
  SUBCASE("empty grid") { CHECK_THROWS_AS(WeakIVTest(g, d.y, d.x).invert(0.0, Grid{1.0, 0.0, 5}), InputError); }
}

TEST_CASE("strong instruments: confidence set close to the Wald interval") {
  std::mt19937_64 rng(5);
  Design d(2000, 10, 5, 0.8, rng);
  const auto ctx = DesignContext::from_matrices(d.lay.W, d.lay.Z, Exec::serial);
  const GMatrix g(ctx, EstimatorKind::UJIVE);
  const auto est = estimate(g, d.y, d.x);
  const WeakIVTest test(g, d.y, d.x);
  const auto serial = test.invert(0.0, WeakIVTest::default_grid(est), 0.05, Exec::serial);
  const auto par = test.invert(0.0, WeakIVTest::default_grid(est), 0.05, Exec::parallel);
  REQUIRE(serial.confidence_set.size() == 1);
  CHECK_FALSE(serial.unbounded_below);
  CHECK_FALSE(serial.unbounded_above);
  const double half = normal_quantile(0.975) * *est.se_robust;
  CHECK(std::abs(serial.confidence_set[0].lo - (est.beta_hat - half)) < 0.1 * half);
  CHECK(std::abs(serial.confidence_set[0].hi - (est.beta_hat + half)) < 0.1 * half);
  CHECK(serial.confidence_set[0].lo == par.confidence_set[0].lo);
  CHECK(serial.confidence_set[0].hi == par.confidence_set[0].hi);
}

TEST_CASE("grid inversion flags empty and unbounded sets") {
  std::mt19937_64 rng(6);
  Design d(200, 4, 4, 0.5, rng);
  const auto ctx = DesignContext::from_matrices(d.lay.W, d.lay.Z, Exec::serial);
  const GMatrix g(ctx, EstimatorKind::UJIVE);
  const WeakIVTest test(g, d.y, d.x);
  const auto far = test.invert(0.0, Grid{1e3, 1e3 + 1, 11});
  CHECK(far.empty);
  const double b = estimate(g, d.y, d.x).beta_hat;
  const auto near = test.invert(0.0, Grid{b - 1e-6, b + 1e-6, 11});
  CHECK(near.unbounded_below);
  CHECK(near.unbounded_above);
}

TEST_CASE("normal helpers") {
  CHECK(normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(normal_two_sided_p(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-10));
  CHECK(normal_two_sided_p(0.0) == 1.0);
  CHECK_THROWS_AS(normal_quantile(1.0), InputError);
}

TEST_CASE("sigma-hat matches a dense evaluation") {
  std::mt19937_64 rng(7);
  Design d(80, 3, 4, 0.5, rng);
  const auto dn = oracle::build(d.lay.W, d.lay.Z);
  const auto ctx = DesignContext::from_matrices(d.lay.W, d.lay.Z, Exec::serial);
  const GMatrix g(ctx, EstimatorKind::UJIVE);
  const MatrixXd G = oracle::g_matrix(dn, EstimatorKind::UJIVE);
  const VectorXd gap = VectorXd::Ones(80) - VectorXd(dn.HQ.diagonal());
  const VectorXd nx = ((d.x - dn.HQ * d.x).array() / gap.array().sqrt()).matrix();
  const VectorXd ny = ((d.y - dn.HQ * d.y).array() / gap.array().sqrt()).matrix();
  const VectorXd gx = G * d.x, r = G.transpose() * dn.HQ * d.x, ry = G.transpose() * dn.HQ * d.y;
  const Eigen::ArrayXd a = gx.array() * ny.array() + ry.array() * nx.array();
  const Eigen::ArrayXd b = gx.array() * nx.array() + r.array() * nx.array();
  auto bek = [&](const VectorXd& s, const VectorXd& t, const VectorXd& c, const VectorXd& e) {
    double sum = 0;
    for (int i = 0; i < 80; ++i)
      for (int j = 0; j < 80; ++j) sum += G(i, j) * G(i, j) * s[i] * t[j] + G(i, j) * G(j, i) * c[i] * e[j];
    return sum;
  };
  const VectorXd yy = ny.cwiseAbs2(), xx = nx.cwiseAbs2(), yx = ny.cwiseProduct(nx);
  const SigmaHat s = estimate_sigma(g, d.y, d.x);
  CHECK(s.includes_bekker);
  CHECK(s.s11 == doctest::Approx(a.square().sum() + bek(yy, xx, yx, yx)).epsilon(1e-9));
  CHECK(s.s12 == doctest::Approx((a * b).sum() + bek(yx, xx, yx, xx)).epsilon(1e-9));
  CHECK(s.s22 == doctest::Approx(b.square().sum() + bek(xx, xx, xx, xx)).epsilon(1e-9));
  const SigmaHat plain = estimate_sigma(g, d.y, d.x, 10);
  CHECK_FALSE(plain.includes_bekker);
  CHECK(plain.s22 == doctest::Approx(b.square().sum()).epsilon(1e-9));
}

TEST_CASE("rho diagnostic") {
  const SigmaHat s{2.0, 0.5, 1.0, false};
  CHECK(rho_at(s, INFINITY) == -1.0);
  CHECK(rho_at(s, -INFINITY) == 1.0);
  CHECK(rho_at(s, 1e12) == doctest::Approx(-1.0));
  CHECK(rho_at(s, -1e12) == doctest::Approx(1.0));
  CHECK(rho_at(s, 0.0) == doctest::Approx(0.5 / std::sqrt(2.0)));
  const auto range = rho_diagnostic(s, 2.0, -1.0);
  CHECK(range.lo == doctest::Approx(rho_at(s, 2.0)));
  CHECK(range.hi == doctest::Approx(rho_at(s, -1.0)));
  CHECK(range.flag_076 == (std::max(std::abs(range.lo), std::abs(range.hi)) >= 0.76));
  CHECK_FALSE(rho_diagnostic(s, 0.0, 0.0).flag_076);
  CHECK_THROWS_AS(rho_at(SigmaHat{1.0, 0.0, 0.0, false}, 0.0), DegenerateDesignError);
  CHECK_THROWS_AS(rho_at(SigmaHat{1.0, 1.0, 1.0, false}, 1.0), DegenerateDesignError);
}

TEST_CASE("rho tracks the error correlation with a single strong instrument") {
  std::mt19937_64 rng(8);
  const int n = 4000;
  MatrixXd w = MatrixXd::Ones(n, 1), z = MatrixXd::Zero(n, 1);
  for (int i = 0; i < n; i += 2) z(i, 0) = 1.0;
  const VectorXd nu = normals(n, rng), indep = normals(n, rng);
  const double corr = 0.6;
  const VectorXd eps = corr * nu + std::sqrt(1 - corr * corr) * indep;
  const VectorXd x = 0.3 * z.col(0) + nu;
  const VectorXd y = x + eps;
  const auto ctx = DesignContext::from_matrices(w, z, Exec::serial);
  const GMatrix g(ctx, EstimatorKind::UJIVE);
  const double rho = rho_diagnostic(g, y, x, 1.0, 1.0).lo;
  CHECK(std::abs(rho - corr) < 0.1);
}
