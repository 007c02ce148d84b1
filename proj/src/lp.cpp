#include "mhdci/lp.hpp"

#include <cmath>
#include <limits>

#include "mhdci/errors.hpp"

namespace mhdci {

namespace {
constexpr double kPivotTol = 1e-9;
constexpr double kCostTol = 1e-10;
constexpr int kPivotCap = 200000;

// Bland ordering: structural columns first, artificial i after all of them.
long bland_key(int var, int ncols) { return var >= 0 ? var : ncols + (-1 - var); }
}  // namespace

Simplex::Simplex(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, double tol)
    : A_(A), b_(b), sign_(Eigen::VectorXd::Ones(b.size())), tol_(tol) {
  const Eigen::Index m = A.rows();
  if (b.size() != m) throw InvalidArgument("simplex: rhs size does not match rows");
  for (Eigen::Index i = 0; i < m; ++i) {
    if (b_(i) < 0.0) {
      sign_(i) = -1.0;
      b_(i) = -b_(i);
      A_.row(i) *= -1.0;
    }
  }
  T_ = A_;
  Binv_ = Eigen::MatrixXd::Identity(m, m);
  rhs_ = b_;
  basis_.resize(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < m; ++i) basis_[static_cast<std::size_t>(i)] = -1 - static_cast<int>(i);

  // Phase 1: maximize -sum(artificials). Artificials never re-enter.
  const int n = cols();
  Eigen::VectorXd d(n);
  for (;;) {
    // Reduced cost of structural j: 0 - c_B^T T_j with c_B = -1 on artificials.
    d.setZero();
    for (Eigen::Index r = 0; r < m; ++r)
      if (is_artificial(basis_[static_cast<std::size_t>(r)])) d += T_.row(r).transpose();
    int enter = -1;
    for (int j = 0; j < n; ++j)
      if (d(j) > kCostTol) {
        enter = j;
        break;
      }
    if (enter < 0) break;
    const int leave = ratio_test(T_.col(enter), false);
    if (leave < 0) break;  // cannot happen: phase 1 is bounded
    pivot(leave, enter);
  }
  infeas_ = 0.0;
  for (Eigen::Index r = 0; r < m; ++r)
    if (is_artificial(basis_[static_cast<std::size_t>(r)])) infeas_ += rhs_(r);
  feasible_ = infeas_ <= tol_ * (1.0 + (b_.size() ? b_.maxCoeff() : 0.0));

  if (feasible_) {
    // Drive zero-level artificials out where a structural pivot exists.
    for (Eigen::Index r = 0; r < m; ++r) {
      if (!is_artificial(basis_[static_cast<std::size_t>(r)])) continue;
      Eigen::Index best = -1;
      double mag = kPivotTol;
      for (Eigen::Index j = 0; j < T_.cols(); ++j)
        if (std::abs(T_(r, j)) > mag) {
          mag = std::abs(T_(r, j));
          best = j;
        }
      if (best >= 0) pivot(static_cast<int>(r), static_cast<int>(best));
    }
  }
}

int Simplex::ratio_test(const Eigen::VectorXd& col, bool phase_two) const {
  const int m = rows();
  const int n = cols();
  int leave = -1;
  double best = std::numeric_limits<double>::infinity();
  long best_key = 0;
  for (int r = 0; r < m; ++r) {
    const int var = basis_[static_cast<std::size_t>(r)];
    double ratio;
    if (phase_two && is_artificial(var)) {
      // A redundant row: its artificial must stay at zero level.
      if (std::abs(col(r)) <= kPivotTol) continue;
      ratio = 0.0;
    } else {
      if (col(r) <= kPivotTol) continue;
      ratio = std::max(rhs_(r), 0.0) / col(r);
    }
    const long key = bland_key(var, n);
    if (ratio < best - 1e-14 || (ratio <= best + 1e-14 && key < best_key)) {
      best = ratio;
      best_key = key;
      leave = r;
    }
  }
  return leave;
}

void Simplex::pivot(int r, int c) {
  if (++pivots_ > kPivotCap) throw NumericalDegeneracy("simplex: pivot cap exceeded");
  const double p = T_(r, c);
  T_.row(r) /= p;
  Binv_.row(r) /= p;
  rhs_(r) /= p;
  for (Eigen::Index i = 0; i < T_.rows(); ++i) {
    if (i == r) continue;
    const double f = T_(i, c);
    if (f == 0.0) continue;
    T_.row(i) -= f * T_.row(r);
    Binv_.row(i) -= f * Binv_.row(r);
    rhs_(i) -= f * rhs_(r);
    T_(i, c) = 0.0;
  }
  basis_[static_cast<std::size_t>(r)] = c;
}

int Simplex::add_column(const Eigen::VectorXd& a) {
  if (a.size() != rows()) throw InvalidArgument("simplex: column size does not match rows");
  const Eigen::VectorXd sa = sign_.cwiseProduct(a);
  const Eigen::Index n = T_.cols();
  A_.conservativeResize(Eigen::NoChange, n + 1);
  A_.col(n) = sa;
  T_.conservativeResize(Eigen::NoChange, n + 1);
  T_.col(n) = Binv_ * sa;
  return static_cast<int>(n);
}

LpStatus Simplex::maximize(const Eigen::VectorXd& c) {
  if (!feasible_) throw InvalidArgument("simplex: phase 2 on an infeasible program");
  if (c.size() != cols()) throw InvalidArgument("simplex: objective size does not match columns");
  const int m = rows();
  const int n = cols();
  Eigen::VectorXd cb(m);
  for (;;) {
    for (int r = 0; r < m; ++r) {
      const int var = basis_[static_cast<std::size_t>(r)];
      cb(r) = is_artificial(var) ? 0.0 : c(var);
    }
    int enter = -1;
    for (int j = 0; j < n; ++j) {
      const double dj = c(j) - cb.dot(T_.col(j));
      if (dj > kCostTol) {
        enter = j;
        break;
      }
    }
    if (enter < 0) return LpStatus::Optimal;
    const int leave = ratio_test(T_.col(enter), true);
    if (leave < 0) return LpStatus::Unbounded;
    pivot(leave, enter);
  }
}

Eigen::VectorXd Simplex::solution() const {
  const int m = rows();
  Eigen::MatrixXd B(m, m);
  for (int r = 0; r < m; ++r) {
    const int var = basis_[static_cast<std::size_t>(r)];
    if (is_artificial(var)) {
      B.col(r).setZero();
      B(-1 - var, r) = 1.0;
    } else {
      B.col(r) = A_.col(var);
    }
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
  Eigen::VectorXd xb = lu.isInvertible() ? Eigen::VectorXd(lu.solve(b_)) : rhs_;
  Eigen::VectorXd x = Eigen::VectorXd::Zero(cols());
  for (int r = 0; r < m; ++r) {
    const int var = basis_[static_cast<std::size_t>(r)];
    if (!is_artificial(var)) x(var) = std::max(xb(r), 0.0);
  }
  return x;
}

}  // namespace mhdci
