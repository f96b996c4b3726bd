#include "leniency/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "leniency/csv.hpp"
#include "leniency/error.hpp"

namespace leniency {

Categorical Categorical::intern(const std::vector<std::string>& labels) {
  Categorical c;
  c.levels = labels;
  std::sort(c.levels.begin(), c.levels.end());
  c.levels.erase(std::unique(c.levels.begin(), c.levels.end()), c.levels.end());
  c.codes.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = std::lower_bound(c.levels.begin(), c.levels.end(), labels[i]);
    c.codes[i] = static_cast<int>(it - c.levels.begin());
  }
  return c;
}

std::vector<std::vector<std::string>> Schema::parse_fe(const std::string& spec) {
  std::vector<std::vector<std::string>> out;
  std::stringstream outer(spec);
  std::string group;
  while (std::getline(outer, group, ',')) {
    std::vector<std::string> cols;
    std::stringstream inner(group);
    std::string col;
    while (std::getline(inner, col, ':'))
      if (!col.empty()) cols.push_back(col);
    if (cols.empty()) throw InputError("empty fixed-effect group in '" + spec + "'");
    out.push_back(std::move(cols));
  }
  return out;
}

const Covariate& Dataset::covariate(const std::string& name) const {
  for (const auto& c : covariates)
    if (c.name == name) return c;
  throw InputError("unknown covariate '" + name + "'");
}

namespace {

Categorical subset_categorical(const Categorical& c, const std::vector<std::size_t>& rows) {
  std::vector<int> used(c.levels.size(), -1);
  for (std::size_t r : rows) used[c.codes[r]] = 0;
  Categorical out;
  for (std::size_t l = 0; l < c.levels.size(); ++l) {
    if (used[l] < 0) continue;
    used[l] = static_cast<int>(out.levels.size());
    out.levels.push_back(c.levels[l]);
  }
  out.codes.reserve(rows.size());
  for (std::size_t r : rows) out.codes.push_back(used[c.codes[r]]);
  return out;
}

Eigen::VectorXd take(const Eigen::VectorXd& v, const std::vector<std::size_t>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t k = 0; k < rows.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[static_cast<Eigen::Index>(rows[k])];
  return out;
}

bool is_missing(const std::string& s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == ".";
}

bool parse_number(const std::string& s, double& out) {
  const char* b = s.data();
  const char* e = b + s.size();
  while (b < e && (*b == ' ' || *b == '\t')) ++b;
  while (e > b && (e[-1] == ' ' || e[-1] == '\t')) --e;
  if (b < e && *b == '+') ++b;
  auto res = std::from_chars(b, e, out);
  return res.ec == std::errc() && res.ptr == e && std::isfinite(out);
}

}  // namespace

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.outcome = take(outcome, rows);
  out.treatment = take(treatment, rows);
  out.examiner = subset_categorical(examiner, rows);
  for (const auto& fe : fixed_effects) out.fixed_effects.push_back({fe.name, subset_categorical(fe.cells, rows)});
  for (const auto& cov : covariates) out.covariates.push_back({cov.name, take(cov.values, rows)});
  out.source_rows.reserve(rows.size());
  for (std::size_t r : rows) out.source_rows.push_back(source_rows[r]);
  return out;
}

void Dataset::validate() const {
  const std::size_t n = this->n();
  if (n == 0) throw InputError("dataset has no observations");
  auto check_len = [&](std::size_t len, const std::string& what) {
    if (len != n) throw InputError(what + " has " + std::to_string(len) + " entries, expected " + std::to_string(n));
  };
  check_len(static_cast<std::size_t>(treatment.size()), "treatment");
  check_len(examiner.size(), "examiner");
  check_len(source_rows.size(), "source row index");
  if (fixed_effects.empty()) throw InputError("at least one fixed-effect column is required");
  for (const auto& fe : fixed_effects) check_len(fe.cells.size(), "fixed effect " + fe.name);
  for (const auto& c : covariates) check_len(static_cast<std::size_t>(c.values.size()), "covariate " + c.name);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    if (!std::isfinite(outcome[ii]) || !std::isfinite(treatment[ii]))
      throw InputError("non-finite outcome or treatment at row " + std::to_string(source_rows[i] + 1));
  }
}

Dataset dataset_from_csv(std::istream& in, const Schema& schema) {
  const csv::Table table = csv::read(in);
  if (table.rows.empty()) throw InputError("data file has a header but no observations");

  auto require = [&](const std::string& name, const std::string& role) {
    if (name.empty()) throw InputError("schema does not name the " + role + " column");
    int j = table.column(name);
    if (j < 0) throw InputError("missing " + role + " column '" + name + "'");
    return static_cast<std::size_t>(j);
  };
  const std::size_t jy = require(schema.outcome, "outcome");
  const std::size_t jx = require(schema.treatment, "treatment");
  const std::size_t jk = require(schema.examiner, "examiner");
  if (schema.fixed_effects.empty()) throw InputError("schema names no fixed-effect columns");

  const std::size_t n = table.rows.size();
  Dataset ds;
  ds.outcome.resize(static_cast<Eigen::Index>(n));
  ds.treatment.resize(static_cast<Eigen::Index>(n));
  ds.source_rows.resize(n);
  std::vector<std::string> exam(n);

  auto numeric = [&](std::size_t row, std::size_t col, const std::string& role) {
    const std::string& s = table.rows[row][col];
    double v;
    if (is_missing(s))
      throw InputError("row " + std::to_string(row + 1) + ": missing " + role + " ('" + table.header[col] + "')");
    if (!parse_number(s, v))
      throw InputError("row " + std::to_string(row + 1) + ": cannot parse " + role + " value '" + s + "' in column '" +
                       table.header[col] + "'");
    return v;
  };

  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    ds.outcome[ii] = numeric(i, jy, "outcome");
    ds.treatment[ii] = numeric(i, jx, "treatment");
    const std::string& e = table.rows[i][jk];
    if (is_missing(e)) throw InputError("row " + std::to_string(i + 1) + ": missing examiner ('" + schema.examiner + "')");
    exam[i] = e;
    ds.source_rows[i] = i;
  }
  ds.examiner = Categorical::intern(exam);

  for (const auto& group : schema.fixed_effects) {
    std::vector<std::size_t> cols;
    std::string name;
    for (const auto& c : group) {
      cols.push_back(require(c, "fixed-effect"));
      name += (name.empty() ? "" : ":") + c;
    }
    std::vector<std::string> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::string lab;
      for (std::size_t k = 0; k < cols.size(); ++k) {
        const std::string& s = table.rows[i][cols[k]];
        if (is_missing(s))
          throw InputError("row " + std::to_string(i + 1) + ": missing fixed-effect value ('" + table.header[cols[k]] + "')");
        if (k) lab.push_back(':');
        lab += s;
      }
      labels[i] = std::move(lab);
    }
    ds.fixed_effects.push_back({name, Categorical::intern(labels)});
  }

  for (const auto& name : schema.covariates) {
    const std::size_t j = require(name, "covariate");
    Covariate cov{name, Eigen::VectorXd(static_cast<Eigen::Index>(n))};
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& s = table.rows[i][j];
      double v = std::numeric_limits<double>::quiet_NaN();
      if (!is_missing(s) && !parse_number(s, v))
        throw InputError("row " + std::to_string(i + 1) + ": cannot parse covariate value '" + s + "' in column '" +
                         name + "'");
      cov.values[static_cast<Eigen::Index>(i)] = v;
    }
    ds.covariates.push_back(std::move(cov));
  }
  ds.validate();
  return ds;
}

Dataset load_dataset(const std::string& path, const Schema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open data file: " + path);
  return dataset_from_csv(in, schema);
}

void write_dataset_csv(const Dataset& ds, std::ostream& out, const std::string& outcome_name,
                       const std::string& treatment_name, const std::string& examiner_name) {
  std::vector<std::string> header{outcome_name, treatment_name, examiner_name};
  for (const auto& fe : ds.fixed_effects) header.push_back(fe.name);
  for (const auto& c : ds.covariates) header.push_back(c.name);
  csv::write_row(out, header);
  std::vector<std::string> row;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    row.clear();
    row.push_back(csv::format_double(ds.outcome[ii]));
    row.push_back(csv::format_double(ds.treatment[ii]));
    row.push_back(ds.examiner.levels[ds.examiner.codes[i]]);
    for (const auto& fe : ds.fixed_effects) row.push_back(fe.cells.levels[fe.cells.codes[i]]);
    for (const auto& c : ds.covariates) {
      double v = c.values[ii];
      row.push_back(std::isnan(v) ? std::string() : csv::format_double(v));
    }
    csv::write_row(out, row);
  }
}

}  // namespace leniency
