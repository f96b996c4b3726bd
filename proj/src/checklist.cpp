#include "leniency/checklist.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <memory>

#include "leniency/error.hpp"
#include "leniency/inference.hpp"

namespace leniency {

std::uint64_t design_fingerprint(const DesignContext& ctx) {
  const int n = ctx.n();
  Eigen::VectorXd probe(n);
  for (int i = 0; i < n; ++i) probe[i] = std::sin(1.0 + 0.7 * i) + 0.25 * ((i % 7) - 3);
  const Eigen::VectorXd out = GMatrix(ctx, EstimatorKind::UJIVE).apply(probe);
  std::uint64_t h = 1469598103934665603ull;
  for (int i = 0; i < n; ++i) {
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &out[i], sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 1099511628211ull;
    }
  }
  return h;
}

std::string fingerprint_hex(std::uint64_t f) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(f));
  return buf;
}

namespace {

// The design on which a covariate is analysed: the main design, or a
// re-pruned subsample when the covariate has missing values.
struct Sample {
  std::unique_ptr<PrunedDesign> own;
  const PrunedDesign* design = nullptr;
  Eigen::VectorXd v;
};

Sample sample_for(const PrunedDesign& main, const std::string& name) {
  Sample s;
  const Covariate& cov = main.data.covariate(name);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < main.data.n(); ++i)
    if (!std::isnan(cov.values[static_cast<Eigen::Index>(i)])) keep.push_back(i);
  if (keep.size() == main.data.n()) {
    s.design = &main;
    s.v = cov.values;
    return s;
  }
  if (keep.empty()) throw DegenerateDesignError("covariate '" + name + "' is missing everywhere");
  s.own = std::make_unique<PrunedDesign>(prune(main.data.subset(keep), main.context.exec()));
  s.design = s.own.get();
  s.v = s.design->data.covariate(name).values;
  return s;
}

bool is_constant(const Eigen::VectorXd& v) { return v.size() == 0 || (v.array() == v[0]).all(); }

bool is_binary(const Eigen::VectorXd& v) { return ((v.array() == 0.0) || (v.array() == 1.0)).all(); }

}  // namespace

std::vector<BalanceRow> balance_check(const PrunedDesign& design, const std::vector<std::string>& covariates) {
  std::vector<BalanceRow> rows;
  for (const auto& name : covariates) {
    BalanceRow row;
    row.covariate = name;
    try {
      const Sample s = sample_for(design, name);
      const PrunedDesign& d = *s.design;
      row.n_used = d.data.n();
      row.fingerprint = design_fingerprint(d.context);
      if (is_constant(s.v)) {
        row.skipped = true;
        row.warning = "covariate is constant on its estimation sample";
      } else {
        const EstimatorResult r = estimate(GMatrix(d.context, EstimatorKind::UJIVE), s.v, d.data.treatment);
        if (!r.defined) {
          row.skipped = true;
          row.warning = "UJIVE denominator is zero on this sample";
        } else {
          row.coefficient = r.beta_hat;
          row.se = *r.se_robust;
        }
      }
    } catch (const DegenerateDesignError& e) {
      row.skipped = true;
      row.warning = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string Bin::label() const {
  if (closed_hi && lo == hi) return "{" + std::to_string(lo) + "}";
  return "[" + std::to_string(lo) + "," + std::to_string(hi) + (closed_hi ? "]" : ")");
}

std::vector<Bin> default_bins(const Eigen::VectorXd& y, int quantile_bins, int max_values) {
  if (y.size() == 0) throw InputError("cannot bin an empty outcome");
  if (quantile_bins < 1) throw InputError("need at least one quantile bin");
  std::vector<double> sorted(y.data(), y.data() + y.size());
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> distinct = sorted;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const bool integral = std::all_of(distinct.begin(), distinct.end(), [](double v) { return v == std::floor(v); });
  std::vector<Bin> bins;
  if (integral && static_cast<int>(distinct.size()) <= max_values) {
    for (double v : distinct) bins.push_back(Bin{v, v, true});
    return bins;
  }
  const std::size_t n = sorted.size();
  std::vector<double> edges;
  for (int k = 0; k <= quantile_bins; ++k) {
    const double pos = static_cast<double>(k) / quantile_bins * static_cast<double>(n - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double q = sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
    if (edges.empty() || q > edges.back()) edges.push_back(q);
  }
  if (edges.size() == 1) return {Bin{edges[0], edges[0], true}};
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) bins.push_back(Bin{edges[k], edges[k + 1], k + 2 == edges.size()});
  return bins;
}

MonotonicityResult monotonicity_test(const DesignContext& ctx, const Eigen::VectorXd& y, const Eigen::VectorXd& x,
                                     const std::vector<Bin>& bins, double alpha, bool bonferroni) {
  const int n = ctx.n();
  if (y.size() != n || x.size() != n) throw InputError("outcome/treatment length does not match the design");
  if (bins.empty()) throw InputError("monotonicity test needs at least one bin");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InputError("level must lie in (0, 1)");
  for (int i = 0; i < n; ++i) {
    int hits = 0;
    for (const auto& b : bins) hits += b.contains(y[i]);
    if (hits != 1)
      throw InputError("bins must partition the outcome support; observation " + std::to_string(i) + " falls in " +
                       std::to_string(hits) + " bins");
  }

  MonotonicityResult res;
  const GMatrix g(ctx, EstimatorKind::UJIVE);
  res.fingerprint = design_fingerprint(ctx);
  const Eigen::VectorXd gx = g.apply(x);
  const double den = x.dot(gx);
  if (den == 0.0) throw DegenerateDesignError("monotonicity test: UJIVE denominator is zero");
  const std::size_t tests = 2 * bins.size();
  const double level = bonferroni ? alpha / static_cast<double>(tests) : alpha;
  res.critical_value = normal_quantile(1.0 - level / 2.0);

  auto mass = [&](const Eigen::VectorXd& outcome) {
    MassEstimate m;
    m.estimate = outcome.dot(gx) / den;
    m.se = std::sqrt(robust_variance(ctx, outcome, x, gx, m.estimate, den));
    m.flagged = m.estimate < -res.critical_value * m.se;
    return m;
  };

  for (const auto& b : bins) {
    MonotonicityRow row;
    row.bin = b;
    Eigen::VectorXd ind(n);
    for (int i = 0; i < n; ++i) ind[i] = b.contains(y[i]) ? 1.0 : 0.0;
    row.n_in_bin = static_cast<std::size_t>(ind.sum());
    if (row.n_in_bin == 0) {
      res.warnings.push_back("bin " + b.label() + " is empty; skipped");
      continue;
    }
    row.treated = mass(ind.cwiseProduct(x));
    row.untreated = mass(ind.cwiseProduct((x.array() - 1.0).matrix()));
    res.treated_total += row.treated.estimate;
    res.untreated_total += row.untreated.estimate;
    res.any_flagged = res.any_flagged || row.treated.flagged || row.untreated.flagged;
    res.rows.push_back(row);
  }
  return res;
}

ComplierRow complier_mean(const DesignContext& ctx, const Eigen::VectorXd& x, const Eigen::VectorXd& v,
                          const std::string& name) {
  if (x.size() != ctx.n() || v.size() != ctx.n()) throw InputError("covariate length does not match the design");
  if (!is_binary(x)) throw InputError("complier means need a binary 0/1 treatment");
  ComplierRow row;
  row.covariate = name;
  row.n_used = static_cast<std::size_t>(ctx.n());
  row.sample_mean = v.mean();
  row.binary = is_binary(v);
  row.fingerprint = design_fingerprint(ctx);

  const Eigen::VectorXd xt = (2.0 * x.array() - 1.0).matrix();
  const Eigen::VectorXd x0 = (x.array() - 1.0).matrix();
  const Eigen::VectorXd g = GMatrix(ctx, EstimatorKind::UJIVE).apply(xt);
  const double d_pool = xt.dot(g), d_t = x.dot(g), d_u = x0.dot(g);
  if (d_pool == 0.0 || d_t == 0.0 || d_u == 0.0) throw DegenerateDesignError("complier means: zero UJIVE denominator");

  const Eigen::VectorXd y_pool = v.cwiseProduct(xt), y_t = v.cwiseProduct(x), y_u = v.cwiseProduct(x0);
  row.complier_mean = y_pool.dot(g) / d_pool;
  row.treated_mean = y_t.dot(g) / d_t;
  row.untreated_mean = y_u.dot(g) / d_u;
  row.treated_weight = d_t / (d_t + d_u);
  row.se = std::sqrt(robust_variance(ctx, y_pool, xt, g, row.complier_mean, d_pool));
  row.treated_se = std::sqrt(robust_variance(ctx, y_t, x, g, row.treated_mean, d_t));
  row.untreated_se = std::sqrt(robust_variance(ctx, y_u, x0, g, row.untreated_mean, d_u));
  if (row.binary)
    row.within_logical_bounds = row.complier_mean >= -2.0 * row.se && row.complier_mean <= 1.0 + 2.0 * row.se;
  return row;
}

std::vector<ComplierRow> complier_means(const PrunedDesign& design, const std::vector<std::string>& covariates) {
  std::vector<ComplierRow> rows;
  for (const auto& name : covariates) {
    try {
      const Sample s = sample_for(design, name);
      rows.push_back(complier_mean(s.design->context, s.design->data.treatment, s.v, name));
      rows.back().n_used = s.design->data.n();
    } catch (const DegenerateDesignError& e) {
      ComplierRow row;
      row.covariate = name;
      row.skipped = true;
      row.warning = e.what();
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace leniency
