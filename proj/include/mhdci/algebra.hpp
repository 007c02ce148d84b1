#pragma once

// Pointwise algebra of the relaxed ideal-MHD system: the state
// z = (u, b, M, Q, q), its (2n+2) x (n+1) matrix embedding W and the
// constraint-set atoms of K.

#include <Eigen/Dense>

#include <span>
#include <vector>

#include "mhdci/errors.hpp"

namespace mhdci {

inline constexpr int kMinDim = 4;
inline constexpr int kMaxDim = 8;

// Fixed-capacity storage: n <= 8 keeps every pointwise object on the stack.
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxDim + 1, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, kMaxDim + 1, kMaxDim + 1>;
using PackedMat =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 2 * kMaxDim + 2, kMaxDim + 1>;

/// Throws UnsupportedDimension unless kMinDim <= n <= kMaxDim.
void require_dimension(int n);

/// Dimension of R^n x R^n x S0^n x S-^n (no pressure): n(n+2) - 1.
constexpr int reduced_dim(int n) { return n * (n + 2) - 1; }
/// Dimension of the full state space, and of the matrix space M: n(n+2).
constexpr int state_dim(int n) { return n * (n + 2); }

struct ReducedState {
  Vec u;
  Vec b;
  Mat M;
  Mat Q;

  static ReducedState zero(int n);

  int dim() const { return static_cast<int>(u.size()); }

  /// Checks M = M^t, tr M = 0, Q = -Q^t within tol (absolute, scaled by
  /// the entry magnitude); throws StructuralError naming the violation.
  void validate(double tol = 1e-12) const;

  ReducedState& operator+=(const ReducedState& o);
  ReducedState& operator-=(const ReducedState& o);
  ReducedState& operator*=(double s);
  friend ReducedState operator+(ReducedState a, const ReducedState& b) { return a += b; }
  friend ReducedState operator-(ReducedState a, const ReducedState& b) { return a -= b; }
  friend ReducedState operator*(double s, ReducedState a) { return a *= s; }
  bool operator==(const ReducedState& o) const;
};

struct State {
  ReducedState reduced;
  double q = 0.0;

  static State zero(int n);
  int dim() const { return reduced.dim(); }

  State& operator+=(const State& o);
  State& operator-=(const State& o);
  State& operator*=(double s);
  friend State operator+(State a, const State& b) { return a += b; }
  friend State operator-(State a, const State& b) { return a -= b; }
  friend State operator*(double s, State a) { return a *= s; }
  bool operator==(const State& o) const;
};

/// Euclidean norm over all entries (u, b, M, Q as full matrices, q).
double state_norm(const State& z);
double reduced_norm(const ReducedState& z);

// Coordinates of the reduced space, used by the LP and the l1 margins:
// [u_1..u_n, b_1..b_n, M_11..M_(n-1)(n-1), M_ij (i<j), Q_ij (i<j)].
// The full state vector appends q, giving state_dim(n) entries.
std::vector<double> to_coords(const ReducedState& z);
void to_coords(const ReducedState& z, std::span<double> out);
ReducedState reduced_from_coords(int n, std::span<const double> c);
std::vector<double> to_vector(const State& z);
void to_vector(const State& z, std::span<double> out);
State state_from_vector(int n, std::span<const double> v);
/// Euclidean state norm evaluated directly on a state vector.
double vector_state_norm(int n, std::span<const double> v);

/// The stacked matrix [M + qI, u; u^t, 0; Q, b; b^t, 0].
class EmbeddedMatrix {
 public:
  EmbeddedMatrix() = default;
  explicit EmbeddedMatrix(PackedMat entries);
  static EmbeddedMatrix zero(int n);
  /// Assemble from the symmetric upper block U and the lower block V.
  static EmbeddedMatrix from_blocks(const Mat& U, const Mat& V);

  int dim() const { return static_cast<int>(entries_.cols()) - 1; }
  const PackedMat& entries() const { return entries_; }
  Mat upper() const;
  Mat lower() const;
  double norm() const { return entries_.norm(); }

  /// Throws StructuralError if U is not in K1 or V not in K2 beyond tol
  /// (relative to the largest entry, absolute below 1).
  void validate(double tol = 1e-12) const;

 private:
  PackedMat entries_;
};

EmbeddedMatrix pack_state(const State& z);
State unpack_state(const EmbeddedMatrix& W, double tol = 1e-12);

/// An element of K: unit u, b with M = u(x)u - b(x)b and Q = b(x)u - u(x)b.
class KAtom {
 public:
  KAtom(const Vec& u, const Vec& b);

  const Vec& u() const { return u_; }
  const Vec& b() const { return b_; }
  const Mat& M() const { return M_; }
  const Mat& Q() const { return Q_; }
  int dim() const { return static_cast<int>(u_.size()); }
  ReducedState reduced() const { return {u_, b_, M_, Q_}; }
  State state(double q = 0.0) const { return {reduced(), q}; }

 private:
  Vec u_, b_;
  Mat M_, Q_;
};

KAtom k_atom(const Vec& u, const Vec& b);

/// Relaxed variables of a genuine MHD state (u, b, p).
State relaxed_vars(const Vec& u, const Vec& b, double p);

struct PowerSumBound {
  double bound = 0.0;
  bool holds = false;
};

/// (a+c)^m <= (1+eps) a^m + 2^m (m-1)^(m-1) eps^(1-m) c^m.
PowerSumBound power_sum_bound(double a, double c, double eps, double m);
/// The constant 2^m (m-1)^(m-1).
double power_sum_constant(double m);

Vec unit_vector(int n, int i);

}  // namespace mhdci
