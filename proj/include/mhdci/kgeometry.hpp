#pragma once

// The constraint set K through a finite atom library: LP membership with
// margins, Caratheodory decompositions and the sphere moments behind the
// interiority of 0 in the hull.

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "mhdci/algebra.hpp"

namespace mhdci {

class AtomLibrary {
 public:
  AtomLibrary(int n, std::vector<KAtom> atoms, std::uint64_t seed = 0);

  int dim() const { return n_; }
  int count() const { return static_cast<int>(atoms_.size()); }
  std::uint64_t seed() const { return seed_; }
  const std::vector<KAtom>& atoms() const { return atoms_; }
  const KAtom& atom(int k) const { return atoms_[static_cast<std::size_t>(k)]; }
  /// Reduced coordinates of all atoms, one column per atom.
  const Eigen::MatrixXd& coords() const { return coords_; }

 private:
  int n_;
  std::vector<KAtom> atoms_;
  std::uint64_t seed_;
  Eigen::MatrixXd coords_;
};

/// Deterministic library from Sobol points on S^{n-1} x S^{n-1}.
/// Requires count >= 4 n (n+2).
AtomLibrary build_atom_library(int n, int count, std::uint64_t seed);

struct CaratheodoryDecomp {
  std::vector<double> weights;
  std::vector<KAtom> atoms;
  std::vector<int> indices;  // library indices, ascending
  double reconstruction_error = 0.0;

  ReducedState reconstruct() const;
};

/// Throws OutsideHull when zr is not in the hull of the library atoms.
CaratheodoryDecomp decompose(const ReducedState& zr, const AtomLibrary& lib);

/// Feasibility of the hull LP only (no margin probes).
bool in_hull(const ReducedState& zr, const AtomLibrary& lib);

/// Smallest extent over the 2 dim signed coordinate probes; 0 if infeasible.
double hull_margin(const ReducedState& zr, const AtomLibrary& lib);

/// Margin threshold below which a point counts as boundary.
inline constexpr double kMarginFloor = 1e-9;

bool in_relaxed_set(const State& z, const AtomLibrary& lib);

struct MomentEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

struct SphereMoments {
  MomentEstimate gamma1, gamma2, gamma3;
  int samples = 0;
  int replicates = 0;
};

/// Randomized quasi-Monte Carlo moments over S^{n-1}. samples >= 1e4.
SphereMoments sphere_moments(int n, int samples, std::uint64_t seed);

struct TImageRank {
  int rank = 0;
  int images = 0;
  std::vector<double> singular_values;
};

/// Rank of the library-discretized images of the four test-function families.
TImageRank t_image_rank(const AtomLibrary& lib, double threshold = 1e-8);

void save_library(const std::string& path, const AtomLibrary& lib);
AtomLibrary load_library(const std::string& path);

}  // namespace mhdci
