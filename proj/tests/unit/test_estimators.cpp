#include <random>

#include "doctest.h"

#include "dense_oracle.hpp"
#include "leniency/error.hpp"
#include "leniency/estimators.hpp"

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

// 2 cells x 2 examiners x 2 cases.
struct Hand {
  MatrixXd W = MatrixXd::Zero(8, 2), Z = MatrixXd::Zero(8, 2);
  VectorXd y{{1.0, 3.0, 2.0, 5.0, 0.5, 1.5, 4.0, 2.5}};
  VectorXd x{{0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 0.0}};
  Hand() {
    for (int i = 0; i < 8; ++i) {
      W(i, i / 4) = 1.0;
      if ((i / 2) % 2 == 1) Z(i, i / 4) = 1.0;
    }
  }
};

// Generic IV with strong first stage and W containing a constant and a cell split.
struct Strong {
  MatrixXd W, Z;
  VectorXd y, x;
  Strong(int n, std::mt19937_64& rng) {
    const auto lay = oracle::random_layout(n, 4, 5, rng);
    W = lay.W;
    Z = lay.Z;
    const VectorXd u = normals(n, rng), e = normals(n, rng);
    VectorXd pi(Z.cols());
    for (int k = 0; k < Z.cols(); ++k) pi[k] = 0.3 * (k % 3) - 0.2;
    x = Z * pi + u;
    y = 0.7 * x + 0.5 * u + e + W.col(0) * 2.0;
  }
};

}  // namespace

TEST_CASE("x equal to y gives beta one for every kind") {
  std::mt19937_64 rng(1);
  Strong s(120, rng);
  const auto ctx = DesignContext::from_matrices(s.W, s.Z, Exec::serial);
  for (EstimatorKind k : all_estimators()) {
    const auto r = estimate(ctx, s.x, s.x, k);
    CAPTURE(to_string(k));
    REQUIRE(r.defined);
    CHECK(r.beta_hat == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.beta_hat == r.numerator / r.denominator);
  }
}

TEST_CASE("hand dataset matches dense y'Gx / x'Gx") {
  Hand h;
  const auto d = oracle::build(h.W, h.Z);
  const auto ctx = DesignContext::from_matrices(h.W, h.Z, Exec::serial);
  for (EstimatorKind k : {EstimatorKind::OLS, EstimatorKind::TSLS, EstimatorKind::JIVE, EstimatorKind::IJIVE,
                          EstimatorKind::UJIVE, EstimatorKind::B2SLS}) {
    CAPTURE(to_string(k));
    const MatrixXd g = oracle::g_matrix(d, k);
    const double num = h.y.dot(g * h.x), den = h.x.dot(g * h.x);
    const auto r = estimate(ctx, h.y, h.x, k);
    CHECK(std::abs(r.numerator - num) < 1e-12);
    CHECK(std::abs(r.denominator - den) < 1e-12);
    if (std::abs(den) > 1e-12) CHECK(std::abs(r.beta_hat - num / den) < 1e-10);
  }
}

TEST_CASE("dense oracle agreement on random designs") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    Strong s(80 + 4 * trial, rng);
    const auto d = oracle::build(s.W, s.Z);
    const auto ctx = DesignContext::from_matrices(s.W, s.Z, Exec::serial);
    for (EstimatorKind k : all_estimators()) {
      CAPTURE(to_string(k));
      const MatrixXd g = oracle::g_matrix(d, k);
      const double ref = s.y.dot(g * s.x) / s.x.dot(g * s.x);
      CHECK(std::abs(estimate(ctx, s.y, s.x, k).beta_hat - ref) < 1e-8);
    }
  }
}

TEST_CASE("2SLS equals the two-step fitted-value IV") {
  std::mt19937_64 rng(2);
  Strong s(150, rng);
  const auto ctx = DesignContext::from_matrices(s.W, s.Z, Exec::serial);
  const double tsls = estimate(ctx, s.y, s.x, EstimatorKind::TSLS).beta_hat;
  const VectorXd fitted = ctx.project_full(s.x);
  const auto one = DesignContext::from_matrices(s.W, MatrixXd(fitted), Exec::serial);
  // Just-identified IV with W controls: (z~'y) / (z~'x).
  const VectorXd zt = one.residualize_controls(fitted);
  CHECK(std::abs(zt.dot(s.y) / zt.dot(s.x) - tsls) < 1e-8);
  CHECK(std::abs(estimate(one, s.y, s.x, EstimatorKind::TSLS).beta_hat - tsls) < 1e-8);
}

TEST_CASE("single instrument affine invariance") {
  std::mt19937_64 rng(3);
  const int n = 60;
  MatrixXd w = MatrixXd::Ones(n, 1);
  MatrixXd z(n, 1);
  std::bernoulli_distribution coin(0.5);
  for (int i = 0; i < n; ++i) z(i, 0) = coin(rng) ? 1.0 : 0.0;
  const VectorXd x = 0.8 * z.col(0) + normals(n, rng);
  const VectorXd y = 1.3 * x + normals(n, rng);
  const MatrixXd z2 = (z.array() * -2.5 + 4.0).matrix();
  for (EstimatorKind k : {EstimatorKind::TSLS, EstimatorKind::UJIVE, EstimatorKind::B2SLS}) {
    const double a = estimate(DesignContext::from_matrices(w, z, Exec::serial), y, x, k).beta_hat;
    const double b = estimate(DesignContext::from_matrices(w, z2, Exec::serial), y, x, k).beta_hat;
    CAPTURE(to_string(k));
    CHECK(std::abs(a - b) < 1e-10);
  }
}

TEST_CASE("two examiners: dummy IV equals the estimated-leniency IV") {
  std::mt19937_64 rng(4);
  const int n = 40;
  MatrixXd w = MatrixXd::Ones(n, 1), z = MatrixXd::Zero(n, 1);
  for (int i = 0; i < n; i += 2) z(i, 0) = 1.0;
  const VectorXd x = 0.5 * z.col(0) + normals(n, rng), y = 2.0 * x + normals(n, rng);
  const auto ctx = DesignContext::from_matrices(w, z, Exec::serial);
  const double dummy = estimate(ctx, y, x, EstimatorKind::TSLS).beta_hat;
  // Leniency: examiner means of x.
  double m1 = 0, m0 = 0;
  for (int i = 0; i < n; ++i) (i % 2 == 0 ? m1 : m0) += x[i] / (n / 2);
  VectorXd len(n);
  for (int i = 0; i < n; ++i) len[i] = i % 2 == 0 ? m1 : m0;
  const VectorXd lt = len.array() - len.mean();
  CHECK(std::abs(lt.dot(y) / lt.dot(x) - dummy) < 1e-10);
}

TEST_CASE("UJIVE equals JIVE without controls") {
  std::mt19937_64 rng(5);
  const int n = 90;
  MatrixXd z = MatrixXd::Zero(n, 6);
  for (int i = 0; i < n; ++i) z(i, i % 6) = 1.0;
  const VectorXd x = z * VectorXd::LinSpaced(6, -1, 1) + normals(n, rng);
  const VectorXd y = x + normals(n, rng);
  const auto ctx = DesignContext::from_matrices(MatrixXd(n, 0), z, Exec::serial);
  CHECK(ctx.L() == 0);
  const double u = estimate(ctx, y, x, EstimatorKind::UJIVE).beta_hat;
  const double j = estimate(ctx, y, x, EstimatorKind::JIVE).beta_hat;
  CHECK(std::abs(u - j) < 1e-10);
}

TEST_CASE("B2SLS matches its closed form") {
  std::mt19937_64 rng(6);
  Strong s(100, rng);
  const auto ctx = DesignContext::from_matrices(s.W, s.Z, Exec::serial);
  const auto r = estimate(ctx, s.y, s.x, EstimatorKind::B2SLS);
  const double c = static_cast<double>(ctx.K()) / (ctx.n() - ctx.K() - ctx.L());
  const VectorXd hx = ctx.project_instruments(s.x), mx = ctx.residualize_controls(s.x);
  const double num = s.y.dot(hx) - c * s.y.dot(mx - hx);
  const double den = s.x.dot(hx) - c * s.x.dot(mx - hx);
  CHECK(std::abs(r.numerator - num) < 1e-10 * std::abs(num));
  CHECK(std::abs(r.denominator - den) < 1e-10 * std::abs(den));
}

TEST_CASE("first-stage statistics") {
  std::mt19937_64 rng(7);
  Strong s(100, rng);
  const auto ctx = DesignContext::from_matrices(s.W, s.Z, Exec::serial);
  SUBCASE("x in the span of W gives F = 0") {
    const VectorXd x = s.W * VectorXd::LinSpaced(s.W.cols(), 1, 2);
    const auto fs = first_stage(ctx, x);
    CHECK(std::abs(fs.F) < 1e-12);
    CHECK(std::abs(fs.partial_R2) < 1e-12);
  }
  SUBCASE("dense formulas") {
    const auto d = oracle::build(s.W, s.Z);
    const auto fs = first_stage(ctx, s.x);
    const double xhx = s.x.dot(d.H * s.x), xmx = s.x.dot(d.M * s.x);
    const double var = (xmx - xhx) / (d.n - d.K - d.L);
    CHECK(fs.leniency_ss == doctest::Approx(xhx).epsilon(1e-10));
    CHECK(fs.var_nu_hat == doctest::Approx(var).epsilon(1e-10));
    CHECK(fs.F == doctest::Approx(xhx / (d.K * var)).epsilon(1e-10));
    CHECK(fs.partial_R2 == doctest::Approx(xhx / xmx).epsilon(1e-10));
  }
  SUBCASE("perfect first stage") {
    const VectorXd x = s.Z.col(0);
    const auto fs = first_stage(ctx, x);
    CHECK(fs.F > 1e8);
    CHECK(fs.partial_R2 == doctest::Approx(1.0));
  }
  SUBCASE("no degrees of freedom") {
    MatrixXd w = MatrixXd::Ones(3, 1), z(3, 2);
    z << 1, 0, 0, 1, 0, 0;
    const auto tiny = DesignContext::from_matrices(w, z, Exec::serial);
    CHECK_THROWS_AS(first_stage(tiny, VectorXd::Ones(3)), DegenerateDesignError);
  }
}

TEST_CASE("zero denominator gives an undefined estimate") {
  std::mt19937_64 rng(8);
  Strong s(60, rng);
  const auto ctx = DesignContext::from_matrices(s.W, s.Z, Exec::serial);
  const VectorXd x = s.W.col(1);
  const auto r = estimate(ctx, s.y, x, EstimatorKind::TSLS);
  CHECK_FALSE(r.defined);
  CHECK(std::isnan(r.beta_hat));
  CHECK(r.first_stage.has_value());
}

TEST_CASE("bias rules of thumb") {
  CHECK(bias_rules(10.0, 0.0, 10, 5).tsls_rel_bias == doctest::Approx(0.10));
  CHECK(bias_rules(1.0 + 1e-9, 0.0, 10, 5).tsls_rel_bias == doctest::Approx(1.0));
  const auto j = bias_rules(5.0, 0.0, 100, 50);
  REQUIRE(j.jive_rel_bias_vs_tsls.has_value());
  CHECK(*j.jive_rel_bias_vs_tsls == doctest::Approx(-250.0 / 350.0));
  CHECK(*j.jive_rel_bias_vs_tsls == doctest::Approx(-0.7143).epsilon(1e-4));
  CHECK_FALSE(bias_rules(2.0, 0.0, 50, 50).jive_rel_bias_vs_tsls.has_value());
  CHECK_THROWS_AS(bias_rules(5.0, 1.0, 10, 5), InputError);
  CHECK_THROWS_AS(bias_rules(0.0, 0.1, 10, 5), InputError);
}

TEST_CASE("estimator names parse") {
  CHECK(parse_estimator("2SLS") == EstimatorKind::TSLS);
  CHECK(parse_estimator("tsls") == EstimatorKind::TSLS);
  CHECK(parse_estimator("UJive") == EstimatorKind::UJIVE);
  CHECK_THROWS_AS(parse_estimator("liml"), InputError);
}
