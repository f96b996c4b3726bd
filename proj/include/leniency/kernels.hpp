#pragma once

// Numerical kernels behind DesignContext. Each kernel has a serial reference
// version and an OpenMP version; both perform identical arithmetic per
// independent block, so results are bit-identical for any thread count.

#include <cstddef>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace leniency {

enum class Exec { serial, parallel };

// Row-compressed (CSR) design Q = (W, Z). Columns [0, n_controls) are
// controls, the rest instruments.
struct SparseDesign {
  int n_rows = 0;
  int n_cols = 0;
  int n_controls = 0;
  std::vector<int> row_ptr{0};
  std::vector<int> col;
  std::vector<double> val;
  std::vector<std::string> labels;

  void add_row(const std::vector<std::pair<int, double>>& entries);
  // Dense copy, for oracles and small problems.
  Eigen::MatrixXd dense() const;
  static SparseDesign from_dense(const Eigen::MatrixXd& controls, const Eigen::MatrixXd& instruments);
};

namespace kernels {

// Distinct rows ("patterns") of a design with their multiplicities. The
// design (c_p^{1/2} u_p) has the same Gram matrix as the full design, so its
// QR factor and hat diagonals determine every projection we need.
struct CompressedDesign {
  int n_rows = 0;
  int n_cols = 0;
  int n_controls = 0;
  std::vector<int> pattern_of_row;
  std::vector<double> count;
  std::vector<int> ptr{0};
  std::vector<int> col;
  std::vector<double> val;

  int n_patterns() const { return static_cast<int>(count.size()); }
};

CompressedDesign compress(const SparseDesign& design);

// A connected block of patterns and columns (columns linked when they share
// a pattern). Blocks are mutually orthogonal, so they factorize separately.
struct Block {
  std::vector<int> patterns;
  std::vector<int> columns;  // ascending; controls precede instruments
  std::vector<char> kept;    // per entry of `columns`
  int rank = 0;
  int control_rank = 0;
  // patterns x rank; orthonormal columns, the first control_rank span the
  // block's control columns.
  Eigen::MatrixXd basis;
};

std::vector<Block> partition(const CompressedDesign& cd);

// Ordered Gram-Schmidt with reorthogonalization. A column is dropped when its
// residual norm is at most `tolerance` times its own norm.
namespace serial {
void factorize(const CompressedDesign& cd, std::vector<Block>& blocks, double tolerance);
void leverage(const CompressedDesign& cd, const std::vector<Block>& blocks, Eigen::VectorXd& full,
              Eigen::VectorXd& controls);
void project(const CompressedDesign& cd, const std::vector<Block>& blocks, const Eigen::VectorXd& pattern_sums,
             Eigen::VectorXd& full, Eigen::VectorXd& controls);
}  // namespace serial

namespace parallel {
void factorize(const CompressedDesign& cd, std::vector<Block>& blocks, double tolerance);
void leverage(const CompressedDesign& cd, const std::vector<Block>& blocks, Eigen::VectorXd& full,
              Eigen::VectorXd& controls);
void project(const CompressedDesign& cd, const std::vector<Block>& blocks, const Eigen::VectorXd& pattern_sums,
             Eigen::VectorXd& full, Eigen::VectorXd& controls);
}  // namespace parallel

// Sum of v over the rows of each pattern.
Eigen::VectorXd pattern_sums(const CompressedDesign& cd, const Eigen::VectorXd& v);

// Sets the OpenMP thread count (no-op without OpenMP). Returns the previous value.
int set_threads(int n);
int max_threads();

}  // namespace kernels
}  // namespace leniency
