#pragma once

// Localized plane waves: the aligned potential construction, the operator L,
// the change of basis and the covering that turns one aligned wave into a
// building block supported in a ball.

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "mhdci/algebra.hpp"
#include "mhdci/wavecone.hpp"

namespace mhdci {

/// Radial cutoff: 1 on |y| <= 1/2, 0 on |y| >= 1, C^4 in between
/// (psi = 1 - S(2r - 1) with the degree-9 smoothstep S).
struct RadialProfile {
  double value = 0.0;
  double d1 = 0.0;  // d/dr
  double d2 = 0.0;  // d^2/dr^2
};
RadialProfile cutoff_profile(double r);
double cutoff(double r);

/// Value, gradient and Hessian of psi at y.
struct CutoffJet {
  double value = 0.0;
  Vec grad;
  Mat hess;
};
CutoffJet cutoff_jet(const Vec& y);

/// Aligned amplitude split into the symmetric upper block U (U e1 = 0) and
/// the skew lift F = D V of the lower block, D = diag(1, ..., 1, -1).
struct PotentialPair {
  EmbeddedMatrix amplitude;
  int frequency = 1;
  Mat U;
  Mat F;
};

/// Throws AlignmentError unless |W e1| <= 1e-12 |W|, InvalidArgument for N < 1.
PotentialPair aligned_potential(const EmbeddedMatrix& W, int N);

/// L applied to the cut-off potentials at y (aligned coordinates).
/// Equals W sin(N y1) for |y| <= 1/2 and 0 for |y| >= 1.
PackedMat apply_L(const PotentialPair& p, const Vec& y);

/// Coefficient of phi in the 4-tensor potential of the U block:
/// E^{ab}_{cd} = phi * coefficient (0-based indices, axis 0 is y1).
double u_potential_coefficient(const Mat& U, int a, int b, int c, int d);
/// Coefficient of phi1 in the totally antisymmetric 3-tensor potential of F.
double f_potential_coefficient(const Mat& F, int i, int j, int k);

/// Columns: A e1 = xi, A e_{n+1} = e_{n+1}; the rest are coordinate vectors
/// (the one carrying the largest spatial component of xi is replaced by e1),
/// orthonormalized against xi and e_{n+1}. Throws DegenerateInput when xi is
/// parallel to e_{n+1}.
Mat basis_change(const WaveDirection& xi);

/// Lifts V to the skew F = D V and back.
Mat skew_lift(const Mat& V);

struct CoverPiece {
  Vec center;  // in the coordinates x = A^t y
  double radius = 0.0;
  int level = 0;
};

struct LatticeKeyHash {
  std::size_t operator()(const std::array<int, kMaxDim + 1>& k) const;
};

/// Cell of side 2r -> ids of the pieces of radius r whose bounding box meets it.
using CellIndex = std::unordered_map<std::array<int, kMaxDim + 1>, std::vector<int>, LatticeKeyHash>;

struct BlockOptions;

class BuildingBlock {
 public:
  BuildingBlock() = default;

  const State& amplitude() const { return amplitude_; }
  const WaveDirection& certificate() const { return certificate_; }
  const Mat& basis() const { return A_; }
  int frequency() const { return N_; }
  double delta() const { return delta_; }
  double sup_distance() const { return sup_distance_; }
  const std::vector<CoverPiece>& cover() const { return cover_; }
  double covered_fraction() const { return fraction_; }
  const Vec& anchor_center() const { return anchor_center_; }
  double anchor_radius() const { return anchor_radius_; }
  int dim() const { return amplitude_.dim(); }

  /// Field at a global point; exactly zero outside the anchor ball.
  PackedMat evaluate(const Vec& Y) const;
  /// Field at a point of the anchor-normalized unit ball.
  PackedMat evaluate_local(const Vec& y) const;
  /// Transformed aligned wave at a point of the piece-local unit ball.
  PackedMat piece_field(const Vec& xt) const;

  /// Copy with amplitude multiplied by s (all distances scale by |s|).
  BuildingBlock scaled(double s) const;
  /// Copy with a different frequency; sup_distance is not re-certified.
  BuildingBlock with_frequency(int N) const;

  friend BuildingBlock assemble_block(const State& amplitude, const WaveDirection& certificate,
                                      int N, const Vec& anchor_center, double anchor_radius,
                                      const BlockOptions& opts);
  friend BuildingBlock build_block(const LambdaSegment& seg, double delta, double m,
                                   const Vec& anchor_center, double anchor_radius,
                                   const BlockOptions& opts);

 private:
  void prepare();

  State amplitude_;
  WaveDirection certificate_;
  Mat A_, Ainv_, AinvT_;
  Mat Uhat_, Fhat_;
  int N_ = 1;
  double delta_ = 0.0;
  double sup_distance_ = 0.0;
  std::vector<CoverPiece> cover_;
  double fraction_ = 0.0;
  Vec anchor_center_;
  double anchor_radius_ = 1.0;
  std::vector<double> level_radius_;
  std::vector<CellIndex> level_cells_;
};

struct BlockOptions {
  int max_pieces = 10000;
  double target_fraction = 0.5;  // packing stops here
  double min_fraction = 0.5;     // below this (after the piece cap) CoveringError
  std::size_t sup_samples = 100000;
  std::uint64_t seed = 1;
  int max_frequency = 1 << 20;
};

/// Block along seg.direction with frequency certified so that the sampled
/// sup-distance to the segment [-zbar, zbar] is below delta.
BuildingBlock build_block(const LambdaSegment& seg, double delta, double m, const Vec& anchor_center,
                          double anchor_radius, const BlockOptions& opts = {});

/// Same construction from an amplitude and its certificate, with an explicit
/// frequency (no certification).
BuildingBlock assemble_block(const State& amplitude, const WaveDirection& certificate, int N,
                             const Vec& anchor_center, double anchor_radius, const BlockOptions& opts = {});

/// Euclidean state-norm distance from W to the segment [-Wbar, Wbar].
double segment_distance(const State& w, const State& wbar);

/// Sampled sup over the block of the distance to [-zbar, zbar].
double block_sup_distance(const BuildingBlock& blk, std::size_t samples, std::uint64_t seed);

struct BlockMetrics {
  double mass_ratio = 0.0;      // mean over B1 of |W e_{n+1}|^m / |Wbar e_{n+1}|^m
  double mass_std_error = 0.0;
  double alpha_est = 0.0;       // exact-sine contribution of the piece cores
};

/// Randomized QMC quadrature over the block's unit ball.
BlockMetrics block_metrics(const BuildingBlock& blk, double m, std::size_t samples = 200000,
                           std::uint64_t seed = 1);

/// Mean of |sin(N t)|^m over the ball of radius rho in R^{dim}, t the first coordinate.
double ball_sine_mean(int dim, double rho, int N, double m);

struct DivergenceRefinement {
  std::vector<double> steps;
  std::vector<double> l2;   // RMS of the central-difference divergence
  std::vector<double> max;
  std::vector<double> ratios;  // l2[k] / l2[k+1]
};

/// Central-difference divergence at fixed sample points of the anchor ball
/// for steps h0, h0/2, ...; the exact divergence is zero.
DivergenceRefinement divergence_refinement(const BuildingBlock& blk, double h0, int levels,
                                           std::size_t samples, std::uint64_t seed);

}  // namespace mhdci
