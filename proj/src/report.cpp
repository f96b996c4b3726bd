#include "leniency/report.hpp"

#include <cmath>
#include <cstdlib>

#include "leniency/csv.hpp"

namespace leniency {

using nlohmann::json;

json number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

namespace {

json optional_number(const std::optional<double>& v) { return v ? number(*v) : json(nullptr); }

std::string opt_field(const std::optional<double>& v) { return v ? csv::format_double(*v) : "NA"; }

}  // namespace

json RunManifest::to_json() const {
  json j;
  j["command"] = command;
  j["inputs"] = inputs;
  j["schema"] = schema;
  j["estimators"] = estimators;
  j["seed"] = seed ? json(*seed) : json(nullptr);
  j["tool_version"] = kToolVersion;
  const char* epoch = std::getenv("SOURCE_DATE_EPOCH");
  j["timestamp"] = epoch ? json(std::strtoll(epoch, nullptr, 10)) : json(nullptr);
  j["prune"] = prune ? leniency::to_json(*prune) : json(nullptr);
  j["config"] = config;
  return j;
}

json to_json(const PruneReport& r) {
  return json{{"dropped_observations", r.dropped_observations()},
              {"dropped_singleton", r.dropped_singleton},
              {"dropped_leverage_one", r.dropped_leverage_one},
              {"dropped_instrument_columns", r.dropped_instrument_columns},
              {"dropped_control_columns", r.dropped_control_columns},
              {"omitted_reference_examiners", r.omitted_reference_examiners},
              {"iterations", r.iterations}};
}

json to_json(const EstimatorResult& r) {
  json j{{"estimator", std::string(to_string(r.kind))},
         {"defined", r.defined},
         {"beta", number(r.beta_hat)},
         {"numerator", number(r.numerator)},
         {"denominator", number(r.denominator)},
         {"se_robust", optional_number(r.se_robust)},
         {"se_plain", optional_number(r.se_plain)},
         {"n", r.n},
         {"K", r.K},
         {"L", r.L}};
  if (r.first_stage) {
    j["F"] = number(r.first_stage->F);
    j["partial_R2"] = number(r.first_stage->partial_R2);
    j["leniency_ss"] = number(r.first_stage->leniency_ss);
    j["var_nu_hat"] = number(r.first_stage->var_nu_hat);
  } else {
    j["F"] = nullptr;
    j["partial_R2"] = nullptr;
    j["leniency_ss"] = nullptr;
    j["var_nu_hat"] = nullptr;
  }
  j["F_form"] = "homoskedastic";
  return j;
}

json to_json(const WeakIVTestResult& r) {
  json set = json::array();
  for (const auto& iv : r.confidence_set) set.push_back({{"lo", number(iv.lo)}, {"hi", number(iv.hi)}});
  json j{{"beta0", number(r.beta0)},
         {"stat", number(r.statistic)},
         {"p", number(r.p_value)},
         {"set", set},
         {"empty", r.empty},
         {"unbounded_below", r.unbounded_below},
         {"unbounded_above", r.unbounded_above}};
  if (r.confidence_set.size() == 1) {
    j["ci_lo"] = r.unbounded_below ? json(nullptr) : number(r.confidence_set[0].lo);
    j["ci_hi"] = r.unbounded_above ? json(nullptr) : number(r.confidence_set[0].hi);
  }
  return j;
}

json to_json(const RhoDiagnostic& r) {
  json j{{"flag_076", r.flag_076},
         {"sigma", {{"s11", number(r.sigma.s11)}, {"s12", number(r.sigma.s12)}, {"s22", number(r.sigma.s22)}}},
         {"includes_bekker", r.sigma.includes_bekker}};
  if (r.lo == r.hi)
    j["value"] = number(r.lo);
  else
    j["range"] = {number(r.lo), number(r.hi)};
  return j;
}

json to_json(const BalanceRow& r) {
  return json{{"covariate", r.covariate},
              {"coefficient", r.skipped ? json(nullptr) : number(r.coefficient)},
              {"se", r.skipped ? json(nullptr) : number(r.se)},
              {"n_used", r.n_used},
              {"skipped", r.skipped},
              {"warning", r.warning},
              {"fingerprint", fingerprint_hex(r.fingerprint)}};
}

json to_json(const MonotonicityResult& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"bin", row.bin.label()},
                    {"lo", number(row.bin.lo)},
                    {"hi", number(row.bin.hi)},
                    {"closed_hi", row.bin.closed_hi},
                    {"n_in_bin", row.n_in_bin},
                    {"treated", number(row.treated.estimate)},
                    {"treated_se", number(row.treated.se)},
                    {"treated_flag", row.treated.flagged},
                    {"untreated", number(row.untreated.estimate)},
                    {"untreated_se", number(row.untreated.se)},
                    {"untreated_flag", row.untreated.flagged}});
  }
  return json{{"bins", rows},
              {"warnings", r.warnings},
              {"treated_total", number(r.treated_total)},
              {"untreated_total", number(r.untreated_total)},
              {"critical_value", number(r.critical_value)},
              {"any_flagged", r.any_flagged},
              {"fingerprint", fingerprint_hex(r.fingerprint)}};
}

json to_json(const ComplierRow& r) {
  if (r.skipped)
    return json{{"covariate", r.covariate}, {"skipped", true}, {"warning", r.warning}, {"n_used", r.n_used}};
  return json{{"covariate", r.covariate},
              {"skipped", false},
              {"sample_mean", number(r.sample_mean)},
              {"complier_mean", number(r.complier_mean)},
              {"se", number(r.se)},
              {"treated_mean", number(r.treated_mean)},
              {"treated_se", number(r.treated_se)},
              {"untreated_mean", number(r.untreated_mean)},
              {"untreated_se", number(r.untreated_se)},
              {"treated_weight", number(r.treated_weight)},
              {"binary", r.binary},
              {"within_logical_bounds", r.within_logical_bounds},
              {"n_used", r.n_used},
              {"fingerprint", fingerprint_hex(r.fingerprint)}};
}

json to_json(const MonteCarloSummary& s) {
  json kinds = json::array();
  for (const auto& k : s.kinds)
    kinds.push_back({{"estimator", std::string(to_string(k.kind))},
                     {"defined", k.defined},
                     {"mean", number(k.mean)},
                     {"median", number(k.median)},
                     {"bias", number(k.bias)},
                     {"sd", number(k.sd)},
                     {"mc_se", number(k.mc_se)},
                     {"coverage", number(k.coverage)},
                     {"mean_se", number(k.mean_se)}});
  json j{{"reps", s.reps},
         {"reruns", s.reruns},
         {"target", number(s.target)},
         {"mean_F", number(s.mean_F)},
         {"mean_partial_R2", number(s.mean_partial_R2)},
         {"calibration",
          {{"leniency_spread", number(s.calibration.spread)},
           {"expected_F", number(s.calibration.expected_F)},
           {"partial_R2", number(s.calibration.partial_R2)},
           {"kappa", number(s.calibration.kappa)},
           {"K", s.calibration.K},
           {"L", s.calibration.L}}},
         {"estimators", kinds},
         {"bias_ratio_empirical", optional_number(s.bias_ratio_empirical)},
         {"bias_ratio_predicted", number(s.bias_ratio_predicted)},
         {"weak_iv_rejection", optional_number(s.weak_iv_rejection)},
         {"monotonicity_flag_rate", optional_number(s.monotonicity_flag_rate)}};
  return j;
}

void write_estimates_csv(std::ostream& out, const std::vector<EstimatorResult>& rows) {
  using csv::format_double;
  csv::write_row(out, {"estimator", "beta", "se_robust", "se_plain", "F", "partial_R2", "n", "K", "L"});
  for (const auto& r : rows) {
    csv::write_row(out, {std::string(to_string(r.kind)), format_double(r.beta_hat), opt_field(r.se_robust),
                         opt_field(r.se_plain), r.first_stage ? format_double(r.first_stage->F) : "NA",
                         r.first_stage ? format_double(r.first_stage->partial_R2) : "NA", std::to_string(r.n),
                         std::to_string(r.K), std::to_string(r.L)});
  }
}

void write_balance_csv(std::ostream& out, const std::vector<BalanceRow>& rows) {
  using csv::format_double;
  csv::write_row(out, {"covariate", "coefficient", "se", "n_used", "warning"});
  for (const auto& r : rows)
    csv::write_row(out, {r.covariate, r.skipped ? "NA" : format_double(r.coefficient),
                         r.skipped ? "NA" : format_double(r.se), std::to_string(r.n_used), r.warning});
}

void write_monotonicity_csv(std::ostream& out, const MonotonicityResult& r) {
  using csv::format_double;
  csv::write_row(out, {"bin", "lo", "hi", "n_in_bin", "group", "mass", "se", "ci_lo", "ci_hi", "flagged"});
  for (const auto& row : r.rows) {
    for (int g = 0; g < 2; ++g) {
      const MassEstimate& m = g == 0 ? row.treated : row.untreated;
      csv::write_row(out, {row.bin.label(), format_double(row.bin.lo), format_double(row.bin.hi),
                           std::to_string(row.n_in_bin), g == 0 ? "treated" : "untreated", format_double(m.estimate),
                           format_double(m.se), format_double(m.estimate - 1.959963984540054 * m.se),
                           format_double(m.estimate + 1.959963984540054 * m.se), m.flagged ? "1" : "0"});
    }
  }
}

void write_compliers_csv(std::ostream& out, const std::vector<ComplierRow>& rows) {
  using csv::format_double;
  csv::write_row(out, {"covariate", "sample_mean", "complier_mean", "se", "treated_mean", "untreated_mean",
                       "within_logical_bounds", "n_used", "warning"});
  for (const auto& r : rows) {
    if (r.skipped) {
      csv::write_row(out, {r.covariate, "NA", "NA", "NA", "NA", "NA", "NA", std::to_string(r.n_used), r.warning});
      continue;
    }
    csv::write_row(out, {r.covariate, format_double(r.sample_mean), format_double(r.complier_mean),
                         format_double(r.se), format_double(r.treated_mean), format_double(r.untreated_mean),
                         r.within_logical_bounds ? "1" : "0", std::to_string(r.n_used), ""});
  }
}

void write_monte_carlo_csv(std::ostream& out, const MonteCarloSummary& s) {
  using csv::format_double;
  csv::write_row(out, {"estimator", "defined", "mean", "median", "bias", "sd", "mc_se", "coverage", "mean_se",
                       "target", "bias_ratio_empirical", "bias_ratio_predicted"});
  for (const auto& k : s.kinds)
    csv::write_row(out, {std::string(to_string(k.kind)), std::to_string(k.defined), format_double(k.mean),
                         format_double(k.median), format_double(k.bias), format_double(k.sd), format_double(k.mc_se),
                         format_double(k.coverage), format_double(k.mean_se), format_double(s.target),
                         opt_field(s.bias_ratio_empirical), format_double(s.bias_ratio_predicted)});
}

}  // namespace leniency
