#include "leniency/design.hpp"

#include <algorithm>
#include <numeric>

#include "leniency/error.hpp"

namespace leniency {

namespace {

int find_root(std::vector<int>& parent, int a) {
  while (parent[a] != a) {
    parent[a] = parent[parent[a]];
    a = parent[a];
  }
  return a;
}

}  // namespace

Encoding encode(const Dataset& ds) {
  Encoding enc;
  SparseDesign& d = enc.design;
  const int n = static_cast<int>(ds.n());
  const int n_exam = ds.examiner.n_levels();

  std::vector<int> fe_offset;
  int n_controls = 0;
  for (const auto& fe : ds.fixed_effects) {
    fe_offset.push_back(n_controls);
    n_controls += fe.cells.n_levels();
    for (const auto& lev : fe.cells.levels) d.labels.push_back(fe.name + "=" + lev);
  }

  // Examiners and cells that share observations form one group; within a
  // group the examiner dummies sum to the same vector as each fixed effect's
  // cell dummies, so one examiner per group is redundant.
  std::vector<int> parent(static_cast<std::size_t>(n_exam + n_controls));
  std::iota(parent.begin(), parent.end(), 0);
  for (int i = 0; i < n; ++i) {
    const int e = ds.examiner.codes[static_cast<std::size_t>(i)];
    for (std::size_t f = 0; f < ds.fixed_effects.size(); ++f) {
      const int c = n_exam + fe_offset[f] + ds.fixed_effects[f].cells.codes[static_cast<std::size_t>(i)];
      int a = find_root(parent, e), b = find_root(parent, c);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  // Roots are the smallest member; examiner codes precede cell codes and are
  // lexicographic, so each group's root is its reference examiner.
  std::vector<int> instrument_col(static_cast<std::size_t>(n_exam), -1);
  int next = n_controls;
  for (int e = 0; e < n_exam; ++e) {
    if (find_root(parent, e) == e) {
      ++enc.omitted_reference_examiners;
      continue;
    }
    instrument_col[static_cast<std::size_t>(e)] = next++;
    d.labels.push_back("examiner=" + ds.examiner.levels[static_cast<std::size_t>(e)]);
  }
  d.n_controls = n_controls;
  d.n_cols = next;

  std::vector<std::pair<int, double>> row;
  for (int i = 0; i < n; ++i) {
    row.clear();
    for (std::size_t f = 0; f < ds.fixed_effects.size(); ++f)
      row.emplace_back(fe_offset[f] + ds.fixed_effects[f].cells.codes[static_cast<std::size_t>(i)], 1.0);
    const int zc = instrument_col[static_cast<std::size_t>(ds.examiner.codes[static_cast<std::size_t>(i)])];
    if (zc >= 0) row.emplace_back(zc, 1.0);
    d.add_row(row);
  }
  return enc;
}

DesignContext::DesignContext(const SparseDesign& design, Exec exec, double tolerance) : exec_(exec) {
  n_ = design.n_rows;
  compressed_ = kernels::compress(design);
  blocks_ = kernels::partition(compressed_);
  if (exec == Exec::parallel)
    kernels::parallel::factorize(compressed_, blocks_, tolerance);
  else
    kernels::serial::factorize(compressed_, blocks_, tolerance);

  std::vector<char> kept(static_cast<std::size_t>(design.n_cols), 0);
  for (const auto& b : blocks_) {
    L_ += b.control_rank;
    K_ += b.rank - b.control_rank;
    for (std::size_t j = 0; j < b.columns.size(); ++j) kept[static_cast<std::size_t>(b.columns[j])] = b.kept[j];
  }
  dropped_controls_ = design.n_controls - L_;
  dropped_instruments_ = (design.n_cols - design.n_controls) - K_;
  for (int j = 0; j < design.n_cols; ++j)
    if (kept[static_cast<std::size_t>(j)] && static_cast<std::size_t>(j) < design.labels.size())
      kept_labels_.push_back(design.labels[static_cast<std::size_t>(j)]);

  Eigen::VectorXd full_p, ctrl_p;
  if (exec == Exec::parallel)
    kernels::parallel::leverage(compressed_, blocks_, full_p, ctrl_p);
  else
    kernels::serial::leverage(compressed_, blocks_, full_p, ctrl_p);
  m_diag_.resize(n_);
  h_diag_.resize(n_);
  dq_diag_.resize(n_);
  gap_.resize(n_);
  for (int i = 0; i < n_; ++i) {
    const int p = compressed_.pattern_of_row[static_cast<std::size_t>(i)];
    dq_diag_[i] = full_p[p];
    m_diag_[i] = 1.0 - ctrl_p[p];
    h_diag_[i] = full_p[p] - ctrl_p[p];
    gap_[i] = 1.0 - full_p[p];
  }
}

DesignContext DesignContext::from_dataset(const Dataset& ds, Exec exec) {
  return DesignContext(encode(ds).design, exec);
}

DesignContext DesignContext::from_matrices(const Eigen::MatrixXd& controls, const Eigen::MatrixXd& instruments,
                                           Exec exec) {
  if (controls.cols() > 0 && instruments.cols() > 0 && controls.rows() != instruments.rows())
    throw InputError("controls and instruments have different row counts");
  return DesignContext(SparseDesign::from_dense(controls, instruments), exec);
}

void DesignContext::check_length(const Eigen::VectorXd& v) const {
  if (v.size() != n_)
    throw InputError("vector of length " + std::to_string(v.size()) + " does not match design with n=" +
                     std::to_string(n_));
}

void DesignContext::project(const Eigen::VectorXd& v, Eigen::VectorXd& full, Eigen::VectorXd& controls) const {
  check_length(v);
  const Eigen::VectorXd sums = kernels::pattern_sums(compressed_, v);
  Eigen::VectorXd full_p, ctrl_p;
  if (exec_ == Exec::parallel)
    kernels::parallel::project(compressed_, blocks_, sums, full_p, ctrl_p);
  else
    kernels::serial::project(compressed_, blocks_, sums, full_p, ctrl_p);
  full.resize(n_);
  controls.resize(n_);
  for (int i = 0; i < n_; ++i) {
    const int p = compressed_.pattern_of_row[static_cast<std::size_t>(i)];
    full[i] = full_p[p];
    controls[i] = ctrl_p[p];
  }
}

Eigen::VectorXd DesignContext::residualize_controls(const Eigen::VectorXd& v) const {
  Eigen::VectorXd full, ctrl;
  project(v, full, ctrl);
  return v - ctrl;
}

Eigen::VectorXd DesignContext::project_instruments(const Eigen::VectorXd& v) const {
  Eigen::VectorXd full, ctrl;
  project(v, full, ctrl);
  return full - ctrl;
}

Eigen::VectorXd DesignContext::project_full(const Eigen::VectorXd& v) const {
  Eigen::VectorXd full, ctrl;
  project(v, full, ctrl);
  return full;
}

Eigen::VectorXd DesignContext::project_controls(const Eigen::VectorXd& v) const {
  Eigen::VectorXd full, ctrl;
  project(v, full, ctrl);
  return ctrl;
}

Eigen::MatrixXd DesignContext::dense_basis() const {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n_, L_ + K_);
  // Control directions first, then instrument directions, block by block.
  std::vector<int> ctrl_off, inst_off;
  int c = 0, z = L_;
  for (const auto& b : blocks_) {
    ctrl_off.push_back(c);
    inst_off.push_back(z);
    c += b.control_rank;
    z += b.rank - b.control_rank;
  }
  std::vector<std::pair<int, int>> where(static_cast<std::size_t>(compressed_.n_patterns()));
  for (std::size_t k = 0; k < blocks_.size(); ++k)
    for (std::size_t r = 0; r < blocks_[k].patterns.size(); ++r)
      where[static_cast<std::size_t>(blocks_[k].patterns[r])] = {static_cast<int>(k), static_cast<int>(r)};
  for (int i = 0; i < n_; ++i) {
    const int p = compressed_.pattern_of_row[static_cast<std::size_t>(i)];
    const auto [k, r] = where[static_cast<std::size_t>(p)];
    const auto& b = blocks_[static_cast<std::size_t>(k)];
    const double s = 1.0 / std::sqrt(compressed_.count[static_cast<std::size_t>(p)]);
    for (int j = 0; j < b.control_rank; ++j) a(i, ctrl_off[static_cast<std::size_t>(k)] + j) = b.basis(r, j) * s;
    for (int j = b.control_rank; j < b.rank; ++j)
      a(i, inst_off[static_cast<std::size_t>(k)] + j - b.control_rank) = b.basis(r, j) * s;
  }
  return a;
}

}  // namespace leniency
