#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "leniency/design.hpp"

namespace leniency {

enum class EstimatorKind { OLS, TSLS, JIVE, IJIVE, UJIVE, B2SLS, FEJIV };

std::string_view to_string(EstimatorKind k);
// Accepts "ols", "2sls"/"tsls", "jive", "ijive", "ujive", "b2sls", "fejiv" (any case).
EstimatorKind parse_estimator(std::string_view name);
std::vector<EstimatorKind> all_estimators();

inline constexpr int kDefaultFejivCap = 5000;

// FEJIV weights: lambda solves ((M-H) . (M-H)) lambda = diag(H).
struct FejivWeights {
  Eigen::VectorXd lambda;
  // Reciprocal condition estimate of the Hadamard system.
  double rcond = 0.0;
  // diag(G_FEJIV) = diag(H) - ((M-H).(M-H)) lambda, as solved.
  Eigen::VectorXd g_diagonal;
};

// Throws CapacityError when n exceeds `cap`, DegenerateDesignError when the
// Hadamard system is singular (high-leverage observations) or its reciprocal
// condition number falls below `min_rcond`.
FejivWeights fejiv_lambda(const DesignContext& ctx, int cap = kDefaultFejivCap, double min_rcond = 1e-14);

// The n x n matrix G defining beta = y'Gx / x'Gx, held as an action on
// vectors. Never materializes G.
class GMatrix {
 public:
  GMatrix(const DesignContext& ctx, EstimatorKind kind);
  GMatrix(const DesignContext& ctx, FejivWeights weights);

  EstimatorKind kind() const { return kind_; }
  const DesignContext& context() const { return *ctx_; }

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  Eigen::VectorXd apply_transpose(const Eigen::VectorXd& v) const;
  double trace() const;
  // Materialized G by applying it to unit vectors; O(n^2) memory.
  Eigen::MatrixXd dense() const;

  const std::optional<FejivWeights>& fejiv() const { return fejiv_; }

 private:
  void validate();

  const DesignContext* ctx_;
  EstimatorKind kind_;
  std::optional<FejivWeights> fejiv_;
  Eigen::VectorXd ujive_scale_;  // H_ii / (M_ii - H_ii)
};

}  // namespace leniency
