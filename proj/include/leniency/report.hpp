#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "leniency/checklist.hpp"
#include "leniency/inference.hpp"
#include "leniency/prune.hpp"
#include "leniency/simulation.hpp"

namespace leniency {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunManifest {
  std::string command;
  std::vector<std::string> inputs;
  std::map<std::string, std::string> schema;
  std::vector<std::string> estimators;
  std::optional<std::uint64_t> seed;
  std::optional<PruneReport> prune;
  std::map<std::string, std::string> config;

  // Timestamp comes from SOURCE_DATE_EPOCH when set, otherwise null, so
  // repeated runs produce identical bytes.
  nlohmann::json to_json() const;
};

// Non-finite numbers become null.
nlohmann::json number(double v);

nlohmann::json to_json(const PruneReport& r);
nlohmann::json to_json(const EstimatorResult& r);
nlohmann::json to_json(const WeakIVTestResult& r);
nlohmann::json to_json(const RhoDiagnostic& r);
nlohmann::json to_json(const BalanceRow& r);
nlohmann::json to_json(const MonotonicityResult& r);
nlohmann::json to_json(const ComplierRow& r);
nlohmann::json to_json(const MonteCarloSummary& s);

void write_estimates_csv(std::ostream& out, const std::vector<EstimatorResult>& rows);
void write_balance_csv(std::ostream& out, const std::vector<BalanceRow>& rows);
// One row per bin; ready for plotting mass with 95% bars.
void write_monotonicity_csv(std::ostream& out, const MonotonicityResult& r);
void write_compliers_csv(std::ostream& out, const std::vector<ComplierRow>& rows);
void write_monte_carlo_csv(std::ostream& out, const MonteCarloSummary& s);

}  // namespace leniency
