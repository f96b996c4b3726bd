#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "leniency/dataset.hpp"
#include "leniency/kernels.hpp"

namespace leniency {

inline constexpr double kCollinearityTolerance = 1e-9;
inline constexpr double kLeverageOneTolerance = 1e-10;

// Dummy encoding of a Dataset: W holds one column per level of every fixed
// effect, Z one column per examiner except one reference examiner in each
// connected group of examiners and cells (the lexicographically smallest
// examiner of the group). Remaining collinearity is resolved numerically by
// DesignContext.
struct Encoding {
  SparseDesign design;
  int omitted_reference_examiners = 0;
};

Encoding encode(const Dataset& ds);

// Encoded design with cached leverage diagonals. Immutable after
// construction; every method is const and safe to call concurrently.
//
// Notation: M annihilates the controls W, H projects onto the W-residualized
// instruments, H_Q projects onto (Z, W), so H = H_Q - (I - M).
class DesignContext {
 public:
  DesignContext(const SparseDesign& design, Exec exec = Exec::parallel,
                double tolerance = kCollinearityTolerance);

  static DesignContext from_dataset(const Dataset& ds, Exec exec = Exec::parallel);
  // Dense controls (n x L0) and instruments (n x K0); either may have zero columns.
  static DesignContext from_matrices(const Eigen::MatrixXd& controls, const Eigen::MatrixXd& instruments,
                                     Exec exec = Exec::parallel);

  int n() const { return n_; }
  int K() const { return K_; }
  int L() const { return L_; }
  int dropped_controls() const { return dropped_controls_; }
  int dropped_instruments() const { return dropped_instruments_; }
  const std::vector<std::string>& kept_labels() const { return kept_labels_; }
  Exec exec() const { return exec_; }

  // M v: residual from regressing v on the controls.
  Eigen::VectorXd residualize_controls(const Eigen::VectorXd& v) const;
  // H v: projection onto the residualized instruments.
  Eigen::VectorXd project_instruments(const Eigen::VectorXd& v) const;
  // H_Q v: fitted values from regressing v on (Z, W).
  Eigen::VectorXd project_full(const Eigen::VectorXd& v) const;
  // (I - M) v.
  Eigen::VectorXd project_controls(const Eigen::VectorXd& v) const;

  // Both projections from one pass: full = H_Q v, controls = (I - M) v.
  void project(const Eigen::VectorXd& v, Eigen::VectorXd& full, Eigen::VectorXd& controls) const;

  const Eigen::VectorXd& m_diag() const { return m_diag_; }
  const Eigen::VectorXd& h_diag() const { return h_diag_; }
  const Eigen::VectorXd& dq_diag() const { return dq_diag_; }
  // M_ii - H_ii = 1 - (H_Q)_ii, computed without cancellation.
  const Eigen::VectorXd& residual_leverage() const { return gap_; }

  // n x rank matrix A with H_Q = A A'; the first L columns span W.
  // Materializes O(n * rank) storage; meant for desk-scale dense work.
  Eigen::MatrixXd dense_basis() const;

 private:
  void check_length(const Eigen::VectorXd& v) const;

  int n_ = 0, K_ = 0, L_ = 0;
  int dropped_controls_ = 0, dropped_instruments_ = 0;
  Exec exec_;
  kernels::CompressedDesign compressed_;
  std::vector<kernels::Block> blocks_;
  std::vector<std::string> kept_labels_;
  Eigen::VectorXd m_diag_, h_diag_, dq_diag_, gap_;
};

}  // namespace leniency
