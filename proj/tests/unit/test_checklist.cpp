#include <random>

#include "doctest.h"

#include "leniency/checklist.hpp"
#include "leniency/error.hpp"
#include "leniency/simulation.hpp"

using namespace leniency;
using Eigen::VectorXd;

namespace {

SimConfig small_config(std::uint64_t seed = 3) {
  SimConfig cfg;
  cfg.n = 600;
  cfg.n_cells = 5;
  cfg.examiners_per_cell = 4;
  cfg.leniency_spread = 0.8;
  cfg.seed = seed;
  return cfg;
}

PrunedDesign pruned_with_cell_dummy(const SimConfig& cfg) {
  Population pop = generate(cfg, 0);
  VectorXd dummy(static_cast<Eigen::Index>(pop.data.n()));
  const auto& cells = pop.data.fixed_effects[0].cells.codes;
  for (std::size_t i = 0; i < pop.data.n(); ++i) dummy[static_cast<Eigen::Index>(i)] = cells[i] == 1 ? 1.0 : 0.0;
  pop.data.covariates.push_back({"cell_one", dummy});
  pop.data.covariates.push_back({"constant", VectorXd::Ones(static_cast<Eigen::Index>(pop.data.n()))});
  return prune(pop.data, Exec::serial);
}

}  // namespace

TEST_CASE("balance on a fixed-effect column is zero") {
  const auto pd = pruned_with_cell_dummy(small_config());
  const auto rows = balance_check(pd, {"cell_one", "v_indep", "constant"});
  REQUIRE(rows.size() == 3);
  CHECK(std::abs(rows[0].coefficient) < 1e-12);
  CHECK(rows[0].se < 1e-12);
  CHECK_FALSE(rows[1].skipped);
  CHECK(rows[1].se > 0.0);
  CHECK(rows[2].skipped);
  CHECK_FALSE(rows[2].warning.empty());
  CHECK(rows[0].fingerprint == design_fingerprint(pd.context));
  CHECK(rows[1].fingerprint == rows[0].fingerprint);
}

TEST_CASE("missing covariates use a re-pruned subsample") {
  const auto pd = pruned_with_cell_dummy(small_config());
  const auto rows = balance_check(pd, {"v_partial"});
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].n_used < pd.data.n());
  CHECK(rows[0].n_used > pd.data.n() / 2);
  CHECK(rows[0].fingerprint != design_fingerprint(pd.context));
  CHECK_THROWS_AS(balance_check(pd, {"nope"}), InputError);
}

TEST_CASE("complier means") {
  const auto pd = pruned_with_cell_dummy(small_config());
  const auto& ctx = pd.context;
  const VectorXd& x = pd.data.treatment;
  SUBCASE("v = 1 gives exactly 1") {
    const auto r = complier_mean(ctx, x, VectorXd::Ones(x.size()), "one");
    CHECK(r.complier_mean == 1.0);
    CHECK(r.binary);
    CHECK(r.within_logical_bounds);
  }
  SUBCASE("treated and untreated variants pool to the estimate") {
    const auto r = complier_mean(ctx, x, pd.data.covariate("v_indep").values, "v_indep");
    const double pooled = r.treated_weight * r.treated_mean + (1.0 - r.treated_weight) * r.untreated_mean;
    CHECK(std::abs(pooled - r.complier_mean) < 1e-8);
    CHECK(r.se > 0.0);
  }
  SUBCASE("non-binary treatment is rejected") {
    VectorXd bad = x;
    bad[0] = 0.5;
    CHECK_THROWS_AS(complier_mean(ctx, bad, VectorXd::Ones(x.size())), InputError);
  }
  SUBCASE("table form") {
    const auto rows = complier_means(pd, {"constant", "v_bin", "v_partial"});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].complier_mean == 1.0);
    CHECK(rows[1].binary);
    CHECK(rows[2].n_used < pd.data.n());
  }
}

TEST_CASE("default bins") {
  SUBCASE("count outcomes get point bins") {
    const VectorXd y{{0, 1, 1, 2, 5, 0}};
    const auto bins = default_bins(y);
    REQUIRE(bins.size() == 4);
    CHECK(bins[0].contains(0.0));
    CHECK_FALSE(bins[0].contains(1.0));
    CHECK(bins[3].contains(5.0));
  }
  SUBCASE("continuous outcomes get quantile bins covering the data") {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    VectorXd y(500);
    for (auto& v : y) v = nd(rng);
    const auto bins = default_bins(y, 10);
    CHECK(bins.size() == 10);
    for (double v : y) {
      int hits = 0;
      for (const auto& b : bins) hits += b.contains(v);
      CHECK(hits == 1);
    }
  }
}

TEST_CASE("monotonicity masses partition to one") {
  SimConfig cfg = small_config();
  cfg.outcome = OutcomeType::count;
  const Population pop = generate(cfg, 0);
  const auto pd = prune(pop.data, Exec::serial);
  const auto bins = default_bins(pd.data.outcome);
  const auto res = monotonicity_test(pd.context, pd.data.outcome, pd.data.treatment, bins);
  double t = 0.0, u = 0.0;
  for (const auto& r : res.rows) {
    t += r.treated.estimate;
    u += r.untreated.estimate;
  }
  CHECK(std::abs(t - 1.0) < 1e-8);
  CHECK(std::abs(res.treated_total - 1.0) < 1e-8);
  CHECK(std::abs(u - res.untreated_total) < 1e-8);
  CHECK(res.critical_value == doctest::Approx(1.959963984540054).epsilon(1e-9));
  const auto bon = monotonicity_test(pd.context, pd.data.outcome, pd.data.treatment, bins, 0.05, true);
  CHECK(bon.critical_value > res.critical_value);
}

TEST_CASE("monotonicity input checks") {
  const auto pd = pruned_with_cell_dummy(small_config());
  const VectorXd& y = pd.data.outcome;
  std::vector<Bin> gap{{y.minCoeff(), 0.0, false}, {0.5, y.maxCoeff(), true}};
  CHECK_THROWS_AS(monotonicity_test(pd.context, y, pd.data.treatment, gap), InputError);
  std::vector<Bin> with_empty{{y.minCoeff() - 2, y.minCoeff() - 1, false},
                              {y.minCoeff() - 1, y.maxCoeff(), true}};
  const auto res = monotonicity_test(pd.context, y, pd.data.treatment, with_empty);
  CHECK(res.rows.size() == 1);
  CHECK(res.warnings.size() == 1);
}

TEST_CASE("fingerprint is stable and design-specific") {
  const auto a = pruned_with_cell_dummy(small_config(3));
  const auto b = pruned_with_cell_dummy(small_config(3));
  const auto c = pruned_with_cell_dummy(small_config(4));
  CHECK(design_fingerprint(a.context) == design_fingerprint(b.context));
  CHECK(design_fingerprint(a.context) != design_fingerprint(c.context));
  CHECK(fingerprint_hex(0xabcULL) == "0000000000000abc");
}
