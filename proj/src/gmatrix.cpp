#include "leniency/gmatrix.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include <Eigen/Cholesky>

#include "leniency/error.hpp"

namespace leniency {

std::string_view to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::OLS: return "OLS";
    case EstimatorKind::TSLS: return "2SLS";
    case EstimatorKind::JIVE: return "JIVE";
    case EstimatorKind::IJIVE: return "IJIVE";
    case EstimatorKind::UJIVE: return "UJIVE";
    case EstimatorKind::B2SLS: return "B2SLS";
    case EstimatorKind::FEJIV: return "FEJIV";
  }
  return "?";
}

EstimatorKind parse_estimator(std::string_view name) {
  std::string s(name);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "ols") return EstimatorKind::OLS;
  if (s == "2sls" || s == "tsls") return EstimatorKind::TSLS;
  if (s == "jive") return EstimatorKind::JIVE;
  if (s == "ijive") return EstimatorKind::IJIVE;
  if (s == "ujive") return EstimatorKind::UJIVE;
  if (s == "b2sls") return EstimatorKind::B2SLS;
  if (s == "fejiv") return EstimatorKind::FEJIV;
  throw InputError("unknown estimator '" + std::string(name) + "'");
}

std::vector<EstimatorKind> all_estimators() {
  return {EstimatorKind::OLS,   EstimatorKind::TSLS,  EstimatorKind::JIVE, EstimatorKind::IJIVE,
          EstimatorKind::UJIVE, EstimatorKind::B2SLS, EstimatorKind::FEJIV};
}

FejivWeights fejiv_lambda(const DesignContext& ctx, int cap, double min_rcond) {
  const int n = ctx.n();
  if (n > cap)
    throw CapacityError("FEJIV needs a dense " + std::to_string(n) + "x" + std::to_string(n) +
                        " Hadamard system; n exceeds the cap of " + std::to_string(cap));
  const Eigen::MatrixXd a = ctx.dense_basis();
  // (M - H) = I - H_Q; square it elementwise in place.
  Eigen::MatrixXd had = -a * a.transpose();
  had.diagonal().array() += 1.0;
  had = had.cwiseAbs2();

  Eigen::LLT<Eigen::MatrixXd> llt(had);
  FejivWeights w;
  w.rcond = llt.info() == Eigen::Success ? llt.rcond() : 0.0;
  if (llt.info() != Eigen::Success || !(w.rcond >= min_rcond))
    throw DegenerateDesignError("FEJIV unavailable: the Hadamard system ((M-H).(M-H)) is singular "
                                "(reciprocal condition " + std::to_string(w.rcond) +
                                "); high-leverage observations present");
  w.lambda = llt.solve(ctx.h_diag());
  w.g_diagonal = ctx.h_diag() - had * w.lambda;
  return w;
}

GMatrix::GMatrix(const DesignContext& ctx, EstimatorKind kind) : ctx_(&ctx), kind_(kind) {
  if (kind == EstimatorKind::FEJIV) fejiv_ = fejiv_lambda(ctx);
  validate();
}

GMatrix::GMatrix(const DesignContext& ctx, FejivWeights weights)
    : ctx_(&ctx), kind_(EstimatorKind::FEJIV), fejiv_(std::move(weights)) {
  if (fejiv_->lambda.size() != ctx.n()) throw InputError("FEJIV weights do not match the design");
  validate();
}

void GMatrix::validate() {
  const auto& gap = ctx_->residual_leverage();
  const int n = ctx_->n();
  auto require_gap = [&](const Eigen::VectorXd& d, const char* what) {
    for (int i = 0; i < n; ++i)
      if (!(d[i] > 0.0))
        throw DegenerateDesignError(std::string(to_string(kind_)) + ": " + what + " is zero at observation " +
                                    std::to_string(i) + " (leverage one); prune the design first");
  };
  switch (kind_) {
    case EstimatorKind::UJIVE:
    case EstimatorKind::JIVE:
      require_gap(gap, "1 - (H_Q)_ii");
      break;
    case EstimatorKind::IJIVE: {
      Eigen::VectorXd one_minus_h = (1.0 - ctx_->h_diag().array()).matrix();
      require_gap(one_minus_h, "1 - H_ii");
      break;
    }
    case EstimatorKind::B2SLS:
      if (n - ctx_->K() - ctx_->L() <= 0)
        throw DegenerateDesignError("B2SLS needs n - K - L > 0");
      break;
    default:
      break;
  }
  if (kind_ == EstimatorKind::UJIVE) ujive_scale_ = (ctx_->h_diag().array() / gap.array()).matrix();
}

Eigen::VectorXd GMatrix::apply(const Eigen::VectorXd& v) const {
  const DesignContext& c = *ctx_;
  Eigen::VectorXd full, ctrl;
  c.project(v, full, ctrl);
  switch (kind_) {
    case EstimatorKind::OLS:
      return v - ctrl;
    case EstimatorKind::TSLS:
      return full - ctrl;
    case EstimatorKind::UJIVE:
      return full - ctrl - ujive_scale_.cwiseProduct(v - full);
    case EstimatorKind::B2SLS: {
      const double k = static_cast<double>(c.K()) / static_cast<double>(c.n() - c.K() - c.L());
      return full - ctrl - k * (v - full);
    }
    case EstimatorKind::JIVE: {
      const Eigen::VectorXd s =
          ((full.array() - c.dq_diag().array() * v.array()) / c.residual_leverage().array()).matrix();
      return c.residualize_controls(s);
    }
    case EstimatorKind::IJIVE: {
      const Eigen::ArrayXd h = c.h_diag().array();
      const Eigen::VectorXd s = ((full - ctrl).array() - h * (v - ctrl).array()) / (1.0 - h);
      return c.residualize_controls(s);
    }
    case EstimatorKind::FEJIV: {
      const Eigen::VectorXd r = fejiv_->lambda.cwiseProduct(v - full);
      return full - ctrl - (r - c.project_full(r));
    }
  }
  return {};
}

Eigen::VectorXd GMatrix::apply_transpose(const Eigen::VectorXd& v) const {
  const DesignContext& c = *ctx_;
  switch (kind_) {
    case EstimatorKind::OLS:
    case EstimatorKind::TSLS:
    case EstimatorKind::B2SLS:
    case EstimatorKind::FEJIV:
      return apply(v);
    case EstimatorKind::UJIVE: {
      const Eigen::VectorXd r = ujive_scale_.cwiseProduct(v);
      return c.project_instruments(v) - (r - c.project_full(r));
    }
    case EstimatorKind::JIVE: {
      const Eigen::VectorXd s = (c.residualize_controls(v).array() / c.residual_leverage().array()).matrix();
      return c.project_full(s) - c.dq_diag().cwiseProduct(s);
    }
    case EstimatorKind::IJIVE: {
      const Eigen::ArrayXd h = c.h_diag().array();
      const Eigen::VectorXd s = (c.residualize_controls(v).array() / (1.0 - h)).matrix();
      const Eigen::VectorXd t = c.project_instruments(s) - (h * s.array()).matrix();
      return c.residualize_controls(t);
    }
  }
  return {};
}

double GMatrix::trace() const {
  const DesignContext& c = *ctx_;
  const Eigen::ArrayXd m = c.m_diag().array();
  const Eigen::ArrayXd h = c.h_diag().array();
  const Eigen::ArrayXd d = c.dq_diag().array();
  const Eigen::ArrayXd gap = c.residual_leverage().array();
  switch (kind_) {
    case EstimatorKind::OLS:
      return m.sum();
    case EstimatorKind::TSLS:
      return h.sum();
    case EstimatorKind::UJIVE:
      return (h - ujive_scale_.array() * gap).sum();
    case EstimatorKind::B2SLS:
      return h.sum() - static_cast<double>(c.K()) / static_cast<double>(c.n() - c.K() - c.L()) * gap.sum();
    // tr(G) = tr(G') after cycling the leading M to the right.
    case EstimatorKind::JIVE:
      return ((h - d * m) / gap).sum();
    case EstimatorKind::IJIVE:
      return (h * (1.0 - m) / (1.0 - h)).sum();
    case EstimatorKind::FEJIV:
      return fejiv_->g_diagonal.sum();
  }
  return 0.0;
}

Eigen::MatrixXd GMatrix::dense() const {
  const int n = ctx_->n();
  Eigen::MatrixXd g(n, n);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
  for (int j = 0; j < n; ++j) {
    e[j] = 1.0;
    g.col(j) = apply(e);
    e[j] = 0.0;
  }
  return g;
}

}  // namespace leniency
