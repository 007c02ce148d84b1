#pragma once

// Dense two-phase simplex for equality-form programs
//   A x = b, x >= 0,
// with Bland's anti-cycling rule. Phase 1 runs in the constructor; phase 2
// can be repeated from the feasible basis with different objectives and
// with columns appended afterwards (warm start).

#include <Eigen/Dense>

#include <vector>

namespace mhdci {

enum class LpStatus { Optimal, Unbounded };

class Simplex {
 public:
  Simplex(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double tol = 1e-11);

  bool feasible() const { return feasible_; }
  /// Optimal phase-1 value: the sum of artificial variables. By duality this
  /// equals y.b for the separating functional y with y.A <= 0.
  double infeasibility() const { return infeas_; }

  int rows() const { return static_cast<int>(rhs_.size()); }
  int cols() const { return static_cast<int>(T_.cols()); }

  /// Appends a structural column and returns its index.
  int add_column(const Eigen::VectorXd& a);

  /// Maximizes c.x over the feasible set, starting from the current basis.
  /// Requires feasible().
  LpStatus maximize(const Eigen::VectorXd& c);

  /// Basic solution over the structural columns, re-solved against the
  /// original data for accuracy.
  Eigen::VectorXd solution() const;
  const std::vector<int>& basis() const { return basis_; }
  int pivots() const { return pivots_; }

 private:
  void pivot(int r, int c);
  int ratio_test(const Eigen::VectorXd& col, bool phase_two) const;
  bool is_artificial(int var) const { return var < 0; }

  Eigen::MatrixXd A_;      // sign-adjusted original columns
  Eigen::VectorXd b_;      // sign-adjusted rhs (nonnegative)
  Eigen::VectorXd sign_;   // +-1 per row
  Eigen::MatrixXd T_;      // B^{-1} A
  Eigen::MatrixXd Binv_;   // B^{-1} (the artificial block of the tableau)
  Eigen::VectorXd rhs_;    // B^{-1} b
  std::vector<int> basis_; // structural index, or -1-i for artificial i
  double tol_;
  double infeas_ = 0.0;
  bool feasible_ = false;
  int pivots_ = 0;
};

}  // namespace mhdci
