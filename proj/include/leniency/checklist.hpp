#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "leniency/estimators.hpp"
#include "leniency/prune.hpp"

namespace leniency {

// FNV-1a hash of the bytes of G_UJIVE u for a fixed probe u. Two results with
// equal fingerprints were computed from the same design.
std::uint64_t design_fingerprint(const DesignContext& ctx);
std::string fingerprint_hex(std::uint64_t f);

struct BalanceRow {
  std::string covariate;
  double coefficient = 0.0;
  double se = 0.0;
  std::size_t n_used = 0;
  bool skipped = false;
  std::string warning;
  std::uint64_t fingerprint = 0;
};

// UJIVE of each covariate on the treatment. Covariates with missing values
// are estimated on their non-missing subsample after a full re-prune.
std::vector<BalanceRow> balance_check(const PrunedDesign& design, const std::vector<std::string>& covariates);

struct Bin {
  double lo = 0.0, hi = 0.0;
  bool closed_hi = false;  // [lo, hi] instead of [lo, hi)
  bool contains(double y) const { return y >= lo && (closed_hi ? y <= hi : y < hi); }
  std::string label() const;
};

// One point bin per value when y takes at most `max_values` distinct integer
// values; otherwise bins between the pooled quantiles at 0, 1/k, ..., 1.
std::vector<Bin> default_bins(const Eigen::VectorXd& y, int quantile_bins = 10, int max_values = 20);

struct MassEstimate {
  double estimate = 0.0;
  double se = 0.0;
  bool flagged = false;  // significantly below zero
};

struct MonotonicityRow {
  Bin bin;
  std::size_t n_in_bin = 0;
  MassEstimate treated;    // outcome 1{y in b} x
  MassEstimate untreated;  // outcome 1{y in b} (x - 1)
};

struct MonotonicityResult {
  std::vector<MonotonicityRow> rows;
  std::vector<std::string> warnings;
  double treated_total = 0.0;
  double untreated_total = 0.0;
  double critical_value = 0.0;
  bool any_flagged = false;
  std::uint64_t fingerprint = 0;
};

// Throws InputError when the bins do not cover every outcome exactly once.
// With `bonferroni` the level is divided by the number of tests.
MonotonicityResult monotonicity_test(const DesignContext& ctx, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                                     const std::vector<Bin>& bins, double alpha = 0.05, bool bonferroni = false);

struct ComplierRow {
  std::string covariate;
  double sample_mean = 0.0;
  double complier_mean = 0.0;
  double se = 0.0;
  double treated_mean = 0.0, treated_se = 0.0;
  double untreated_mean = 0.0, untreated_se = 0.0;
  double treated_weight = 0.0;  // pooled = w treated + (1 - w) untreated
  bool binary = false;
  bool within_logical_bounds = true;
  std::size_t n_used = 0;
  bool skipped = false;
  std::string warning;
  std::uint64_t fingerprint = 0;
};

// Complier mean of v from v (2x-1) on 2x-1. Throws InputError unless x is 0/1.
ComplierRow complier_mean(const DesignContext& ctx, const Eigen::VectorXd& x, const Eigen::VectorXd& v,
                          const std::string& name = "v");
std::vector<ComplierRow> complier_means(const PrunedDesign& design, const std::vector<std::string>& covariates);

}  // namespace leniency
