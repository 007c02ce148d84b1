#pragma once

// Wave-cone membership W xi = 0, the explicit direction solver for
// differences of two K-atoms, and Lambda-segments through hull points.

#include <optional>

#include "mhdci/algebra.hpp"
#include "mhdci/kgeometry.hpp"

namespace mhdci {

struct WaveDirection {
  Vec xi;                // (zeta_1..zeta_n, s), unit length
  double residual = 0.0; // |W xi| / (|W|_F |xi|)
};

/// |W xi| / (|W|_F |xi|) for W = pack_state(z).
double wave_residual(const State& z, const Vec& xi);

/// Normalized kernel vector of pack_state(z) when it is rank deficient.
/// Among several kernel directions the one with the most trailing-zero
/// structure in the order (s, zeta_n, ..., zeta_1) is returned (last row of
/// the reduced row-echelon form), sign fixed so its first nonzero entry is
/// positive. Throws DegenerateInput for z = 0.
std::optional<WaveDirection> wave_cone_kernel(const State& z);

/// xi = (zeta, s) annihilating pack_state(k_atom(u1,b1) - k_atom(u2,b2)).
/// zeta is taken orthogonal to u1, u2, b1, b2 when that complement is
/// nontrivial (then s = 0), else orthogonal to u1 - u2, b1, b2 with
/// s = -u1.zeta.
WaveDirection lambda_direction(const Vec& u1, const Vec& b1, const Vec& u2, const Vec& b2);

struct LambdaSegment {
  State base;
  State direction;  // q component exactly 0
  double half_length = 1.0;
  WaveDirection certificate;
  int anchor_atom = 0;   // position of atom "1" inside the decomposition
  int partner_atom = 0;  // position of atom "l"
  double margin_base = 0.0;
  double margin_plus = 0.0;
  double margin_minus = 0.0;

  State endpoint(double sign) const { return base + (sign * half_length) * direction; }
};

/// Builds the segment z +- zbar, zbar = theta_l (z'_l - z'_1) / 2.
/// Throws AtConstraintSet when every atom shares (u, b) and GeometryError
/// when an endpoint leaves the relaxed set of lib.
LambdaSegment segment_from_decomposition(const State& z, const CaratheodoryDecomp& decomp,
                                         const AtomLibrary& lib);

/// Same selection without the endpoint check (used where the caller
/// certifies interiority by other means).
LambdaSegment select_segment(const State& z, const CaratheodoryDecomp& decomp);

struct Ae03Check {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
  double c0 = 0.0;
};

/// C0 = 2^m n (n+2) 2^m (m-1)^(m-1).
double ae03_constant(int n, double m);
Ae03Check verify_ae03(const State& z, const LambdaSegment& seg, double eps, double m);

/// Dimension of { z : pack_state(z) xi = 0 } over the full state space,
/// counting singular values of the induced map below 'threshold'.
int wave_cone_nullity(int n, const Vec& xi, double threshold = 1e-8);

}  // namespace mhdci
