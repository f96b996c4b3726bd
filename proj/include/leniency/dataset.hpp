#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace leniency {

// A categorical column interned to dense codes. Levels are sorted
// lexicographically, so code order is the lexicographic order of labels.
struct Categorical {
  std::vector<int> codes;
  std::vector<std::string> levels;

  std::size_t size() const { return codes.size(); }
  int n_levels() const { return static_cast<int>(levels.size()); }

  static Categorical intern(const std::vector<std::string>& labels);
};

// One fixed-effect dimension: the interaction of one or more input columns.
struct FixedEffect {
  std::string name;  // e.g. "unit:year"
  Categorical cells;
};

// Extra covariate; missing entries are NaN.
struct Covariate {
  std::string name;
  Eigen::VectorXd values;
};

struct Schema {
  std::string outcome;
  std::string treatment;
  std::string examiner;
  // Each inner list is interacted into one fixed-effect dimension.
  std::vector<std::vector<std::string>> fixed_effects;
  std::vector<std::string> covariates;

  // Parses "unit:year,state" into {{unit, year}, {state}}.
  static std::vector<std::vector<std::string>> parse_fe(const std::string& spec);
};

// Case-level observations. Immutable once built; share freely across threads.
struct Dataset {
  Eigen::VectorXd outcome;
  Eigen::VectorXd treatment;
  Categorical examiner;
  std::vector<FixedEffect> fixed_effects;
  std::vector<Covariate> covariates;
  // Zero-based index of each row in the originating file or generator.
  std::vector<std::size_t> source_rows;

  std::size_t n() const { return static_cast<std::size_t>(outcome.size()); }

  // Throws InputError for an unknown name.
  const Covariate& covariate(const std::string& name) const;

  // Rows in the given order; categorical levels are re-interned so that
  // only levels still present remain.
  Dataset subset(const std::vector<std::size_t>& rows) const;

  // Checks lengths and finiteness of required columns.
  void validate() const;
};

Dataset load_dataset(const std::string& path, const Schema& schema);
Dataset dataset_from_csv(std::istream& in, const Schema& schema);

// Writes y, x, examiner, one column per fixed effect, then covariates.
// Missing covariates are written as empty fields.
void write_dataset_csv(const Dataset& ds, std::ostream& out,
                       const std::string& outcome_name = "y",
                       const std::string& treatment_name = "x",
                       const std::string& examiner_name = "examiner");

}  // namespace leniency
