#include "leniency/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <unordered_map>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace leniency {

void SparseDesign::add_row(const std::vector<std::pair<int, double>>& entries) {
  for (const auto& [c, v] : entries) {
    if (v == 0.0) continue;
    col.push_back(c);
    val.push_back(v);
  }
  row_ptr.push_back(static_cast<int>(col.size()));
  ++n_rows;
}

Eigen::MatrixXd SparseDesign::dense() const {
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n_rows, n_cols);
  for (int i = 0; i < n_rows; ++i)
    for (int k = row_ptr[i]; k < row_ptr[i + 1]; ++k) q(i, col[k]) += val[k];
  return q;
}

SparseDesign SparseDesign::from_dense(const Eigen::MatrixXd& controls, const Eigen::MatrixXd& instruments) {
  SparseDesign d;
  const auto n = std::max(controls.rows(), instruments.rows());
  d.n_controls = static_cast<int>(controls.cols());
  d.n_cols = static_cast<int>(controls.cols() + instruments.cols());
  for (int j = 0; j < d.n_cols; ++j)
    d.labels.push_back((j < d.n_controls ? "w" : "z") + std::to_string(j < d.n_controls ? j : j - d.n_controls));
  std::vector<std::pair<int, double>> row;
  for (Eigen::Index i = 0; i < n; ++i) {
    row.clear();
    for (Eigen::Index j = 0; j < controls.cols(); ++j) row.emplace_back(static_cast<int>(j), controls(i, j));
    for (Eigen::Index j = 0; j < instruments.cols(); ++j)
      row.emplace_back(d.n_controls + static_cast<int>(j), instruments(i, j));
    d.add_row(row);
  }
  return d;
}

namespace kernels {

CompressedDesign compress(const SparseDesign& design) {
  CompressedDesign cd;
  cd.n_rows = design.n_rows;
  cd.n_cols = design.n_cols;
  cd.n_controls = design.n_controls;
  cd.pattern_of_row.resize(static_cast<std::size_t>(design.n_rows));

  std::unordered_map<std::string, int> index;
  std::vector<std::pair<int, double>> entries;
  std::string key;
  for (int i = 0; i < design.n_rows; ++i) {
    entries.clear();
    for (int k = design.row_ptr[i]; k < design.row_ptr[i + 1]; ++k) entries.emplace_back(design.col[k], design.val[k]);
    std::sort(entries.begin(), entries.end());
    // merge duplicate columns
    std::vector<std::pair<int, double>> merged;
    for (const auto& e : entries) {
      if (!merged.empty() && merged.back().first == e.first)
        merged.back().second += e.second;
      else
        merged.push_back(e);
    }
    key.clear();
    for (const auto& [c, v] : merged) {
      key.append(reinterpret_cast<const char*>(&c), sizeof(c));
      key.append(reinterpret_cast<const char*>(&v), sizeof(v));
    }
    auto [it, inserted] = index.try_emplace(key, cd.n_patterns());
    if (inserted) {
      cd.count.push_back(0.0);
      for (const auto& [c, v] : merged) {
        cd.col.push_back(c);
        cd.val.push_back(v);
      }
      cd.ptr.push_back(static_cast<int>(cd.col.size()));
    }
    cd.count[static_cast<std::size_t>(it->second)] += 1.0;
    cd.pattern_of_row[static_cast<std::size_t>(i)] = it->second;
  }
  return cd;
}

namespace {

int find_root(std::vector<int>& parent, int a) {
  while (parent[a] != a) {
    parent[a] = parent[parent[a]];
    a = parent[a];
  }
  return a;
}

void factorize_block(const CompressedDesign& cd, Block& b, double tolerance) {
  const auto u = static_cast<Eigen::Index>(b.patterns.size());
  const auto m = static_cast<Eigen::Index>(b.columns.size());
  b.kept.assign(b.columns.size(), 0);
  b.rank = 0;
  b.control_rank = 0;
  if (m == 0) {
    b.basis.resize(u, 0);
    return;
  }

  std::unordered_map<int, Eigen::Index> local_col;
  for (Eigen::Index j = 0; j < m; ++j) local_col[b.columns[static_cast<std::size_t>(j)]] = j;
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(u, m);
  for (Eigen::Index r = 0; r < u; ++r) {
    const int p = b.patterns[static_cast<std::size_t>(r)];
    const double w = std::sqrt(cd.count[static_cast<std::size_t>(p)]);
    for (int k = cd.ptr[p]; k < cd.ptr[p + 1]; ++k) a(r, local_col[cd.col[k]]) += w * cd.val[k];
  }

  Eigen::MatrixXd q(u, std::min(u, m));
  Eigen::VectorXd v(u);
  Eigen::VectorXd c;
  Eigen::Index rank = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    v = a.col(j);
    const double norm0 = v.norm();
    if (norm0 == 0.0 || rank == u) continue;
    for (int pass = 0; pass < 2; ++pass) {
      if (rank == 0) break;
      c.noalias() = q.leftCols(rank).transpose() * v;
      v.noalias() -= q.leftCols(rank) * c;
    }
    const double norm1 = v.norm();
    if (norm1 <= tolerance * norm0) continue;
    q.col(rank++) = v / norm1;
    b.kept[static_cast<std::size_t>(j)] = 1;
    if (b.columns[static_cast<std::size_t>(j)] < cd.n_controls) b.control_rank = static_cast<int>(rank);
  }
  b.rank = static_cast<int>(rank);
  b.basis = q.leftCols(rank);
}

void leverage_block(const CompressedDesign& cd, const Block& b, Eigen::VectorXd& full, Eigen::VectorXd& controls) {
  for (std::size_t r = 0; r < b.patterns.size(); ++r) {
    const int p = b.patterns[r];
    const double c = cd.count[static_cast<std::size_t>(p)];
    const auto row = b.basis.row(static_cast<Eigen::Index>(r));
    full[p] = row.squaredNorm() / c;
    controls[p] = row.head(b.control_rank).squaredNorm() / c;
  }
}

void project_block(const CompressedDesign& cd, const Block& b, const Eigen::VectorXd& sums, Eigen::VectorXd& full,
                   Eigen::VectorXd& controls) {
  const auto u = static_cast<Eigen::Index>(b.patterns.size());
  if (b.rank == 0) {
    for (int p : b.patterns) full[p] = controls[p] = 0.0;
    return;
  }
  Eigen::VectorXd t(u);
  for (Eigen::Index r = 0; r < u; ++r) {
    const int p = b.patterns[static_cast<std::size_t>(r)];
    t[r] = sums[p] / std::sqrt(cd.count[static_cast<std::size_t>(p)]);
  }
  const Eigen::VectorXd coef = b.basis.transpose() * t;
  const Eigen::VectorXd fit = b.basis * coef;
  Eigen::VectorXd fit_w;
  if (b.control_rank > 0)
    fit_w = b.basis.leftCols(b.control_rank) * coef.head(b.control_rank);
  else
    fit_w = Eigen::VectorXd::Zero(u);
  for (Eigen::Index r = 0; r < u; ++r) {
    const int p = b.patterns[static_cast<std::size_t>(r)];
    const double s = std::sqrt(cd.count[static_cast<std::size_t>(p)]);
    full[p] = fit[r] / s;
    controls[p] = fit_w[r] / s;
  }
}

}  // namespace

std::vector<Block> partition(const CompressedDesign& cd) {
  std::vector<int> parent(static_cast<std::size_t>(cd.n_cols));
  std::iota(parent.begin(), parent.end(), 0);
  for (int p = 0; p < cd.n_patterns(); ++p)
    for (int k = cd.ptr[p] + 1; k < cd.ptr[p + 1]; ++k) {
      int a = find_root(parent, cd.col[cd.ptr[p]]);
      int b = find_root(parent, cd.col[k]);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }

  // Blocks are ordered by their smallest column; patterns without any
  // nonzero entry go to a trailing block of rank zero.
  std::vector<int> block_of_root(static_cast<std::size_t>(cd.n_cols), -1);
  std::vector<Block> blocks;
  for (int j = 0; j < cd.n_cols; ++j) {
    const int r = find_root(parent, j);
    if (block_of_root[r] < 0) {
      block_of_root[r] = static_cast<int>(blocks.size());
      blocks.emplace_back();
    }
    blocks[static_cast<std::size_t>(block_of_root[r])].columns.push_back(j);
  }
  Block empty;
  for (int p = 0; p < cd.n_patterns(); ++p) {
    if (cd.ptr[p] == cd.ptr[p + 1]) {
      empty.patterns.push_back(p);
      continue;
    }
    const int r = find_root(parent, cd.col[cd.ptr[p]]);
    blocks[static_cast<std::size_t>(block_of_root[r])].patterns.push_back(p);
  }
  if (!empty.patterns.empty()) blocks.push_back(std::move(empty));
  return blocks;
}

Eigen::VectorXd pattern_sums(const CompressedDesign& cd, const Eigen::VectorXd& v) {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(cd.n_patterns());
  for (int i = 0; i < cd.n_rows; ++i) s[cd.pattern_of_row[static_cast<std::size_t>(i)]] += v[i];
  return s;
}

namespace serial {

void factorize(const CompressedDesign& cd, std::vector<Block>& blocks, double tolerance) {
  for (auto& b : blocks) factorize_block(cd, b, tolerance);
}

void leverage(const CompressedDesign& cd, const std::vector<Block>& blocks, Eigen::VectorXd& full,
              Eigen::VectorXd& controls) {
  full.setZero(cd.n_patterns());
  controls.setZero(cd.n_patterns());
  for (const auto& b : blocks) leverage_block(cd, b, full, controls);
}

void project(const CompressedDesign& cd, const std::vector<Block>& blocks, const Eigen::VectorXd& sums,
             Eigen::VectorXd& full, Eigen::VectorXd& controls) {
  full.setZero(cd.n_patterns());
  controls.setZero(cd.n_patterns());
  for (const auto& b : blocks) project_block(cd, b, sums, full, controls);
}

}  // namespace serial

namespace parallel {

void factorize(const CompressedDesign& cd, std::vector<Block>& blocks, double tolerance) {
  const auto nb = static_cast<long>(blocks.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long k = 0; k < nb; ++k) factorize_block(cd, blocks[static_cast<std::size_t>(k)], tolerance);
}

void leverage(const CompressedDesign& cd, const std::vector<Block>& blocks, Eigen::VectorXd& full,
              Eigen::VectorXd& controls) {
  full.setZero(cd.n_patterns());
  controls.setZero(cd.n_patterns());
  const auto nb = static_cast<long>(blocks.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (long k = 0; k < nb; ++k) leverage_block(cd, blocks[static_cast<std::size_t>(k)], full, controls);
}

void project(const CompressedDesign& cd, const std::vector<Block>& blocks, const Eigen::VectorXd& sums,
             Eigen::VectorXd& full, Eigen::VectorXd& controls) {
  full.setZero(cd.n_patterns());
  controls.setZero(cd.n_patterns());
  const auto nb = static_cast<long>(blocks.size());
  // Small blocks dominate in leniency designs; only fan out when there is
  // enough work to amortize the thread team.
#pragma omp parallel for schedule(dynamic, 16) if (cd.n_patterns() > 4096)
  for (long k = 0; k < nb; ++k) project_block(cd, blocks[static_cast<std::size_t>(k)], sums, full, controls);
}

}  // namespace parallel

int set_threads(int n) {
#ifdef _OPENMP
  const int prev = omp_get_max_threads();
  if (n > 0) omp_set_num_threads(n);
  return prev;
#else
  (void)n;
  return 1;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace kernels
}  // namespace leniency
