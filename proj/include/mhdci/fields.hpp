#pragma once

// Lattice sampling of block sums over a space-time domain, L^m quadrature,
// mollification and finite-difference divergence.

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mhdci/algebra.hpp"
#include "mhdci/waves.hpp"

namespace mhdci {

enum class DomainKind { Ball, Box };

/// Ball of radius `size` or cube of half-width `size` in R^{n+1}.
struct Domain {
  DomainKind kind = DomainKind::Ball;
  Vec center;
  double size = 1.0;

  int dim() const { return static_cast<int>(center.size()); }
  bool contains(const Vec& y) const;
  double exact_volume() const;
};

Domain unit_ball(int n);
/// |Omega| from shifted Sobol points in the bounding cube.
double domain_volume(const Domain& omega, std::size_t samples = 1000000, std::uint64_t seed = 1);

using LatticeIndex = std::array<int, kMaxDim + 1>;

/// Cell-centred lattice lo + (i + 1/2) h, i in [0, points_per_axis)^{n+1}.
struct GridSpec {
  int n = 4;
  Vec lo;
  double h = 0.0;
  int points_per_axis = 0;

  int dim() const { return n + 1; }
  std::size_t count() const;
  Vec point(const LatticeIndex& i) const;
  std::int64_t linear(const LatticeIndex& i) const;
  LatticeIndex unravel(std::int64_t k) const;
  double cell_volume() const;
};

/// Cube around omega with one empty cell layer on each side:
/// half-width size * ppa / (ppa - 2). Throws ConfigError for ppa < 8.
GridSpec make_grid(const Domain& omega, int points_per_axis);

/// Grids above this many bytes are refused with ConfigError.
void set_grid_memory_limit(std::size_t bytes);
std::size_t grid_memory_limit();

enum class Component { U, B, All, State };

/// State values at the lattice points inside the domain; zero elsewhere.
class FieldGrid {
 public:
  FieldGrid() = default;
  FieldGrid(const GridSpec& spec, const Domain& omega);

  const GridSpec& spec() const { return spec_; }
  const Domain& domain() const { return omega_; }
  int components() const { return comps_; }
  std::size_t size() const { return points_.size(); }
  std::int64_t lattice_point(std::size_t slot) const { return points_[slot]; }
  /// -1 when the lattice point is outside the domain.
  int slot(std::int64_t linear) const { return slots_[static_cast<std::size_t>(linear)]; }
  Vec position(std::size_t slot) const { return spec_.point(spec_.unravel(points_[slot])); }

  const double* values(std::size_t slot) const { return values_.data() + slot * static_cast<std::size_t>(comps_); }
  double* values(std::size_t slot) { return values_.data() + slot * static_cast<std::size_t>(comps_); }
  State state(std::size_t slot) const;
  void set_state(std::size_t slot, const State& z);

  const std::vector<int>& provenance() const { return provenance_; }
  std::vector<int>& provenance() { return provenance_; }

  FieldGrid& operator+=(const FieldGrid& o);
  FieldGrid& operator-=(const FieldGrid& o);
  FieldGrid& operator*=(double s);
  friend FieldGrid operator+(FieldGrid a, const FieldGrid& b) { return a += b; }
  friend FieldGrid operator-(FieldGrid a, const FieldGrid& b) { return a -= b; }

 private:
  void require_compatible(const FieldGrid& o) const;

  GridSpec spec_;
  Domain omega_;
  int comps_ = 0;
  std::vector<std::int64_t> points_;
  std::vector<int> slots_;
  std::vector<double> values_;
  std::vector<int> provenance_;
};

/// Sum of the block fields at every domain point. Throws PlacementError when
/// an anchor ball leaves the box.
FieldGrid sample_field(const std::vector<BuildingBlock>& blocks, const GridSpec& spec, const Domain& omega);
FieldGrid sample_function(const GridSpec& spec, const Domain& omega,
                          const std::function<State(const Vec&)>& f);
/// Adds the block's field to g.
void add_block(FieldGrid& g, const BuildingBlock& blk, int id);

struct Quadrature {
  double value = 0.0;
  double error = 0.0;  // |I_h - I_2h| / 3
};

/// Midpoint rule for the integral of |.|^m (U: |u|^m, B: |b|^m, All: both,
/// State: Euclidean state norm).
Quadrature lm_integral(const FieldGrid& g, double m, Component c);
double lm_norm(const FieldGrid& g, double m, Component c);

/// Convolution with the normalized bump psi(|y| / r). Only domain points are
/// evaluated. Throws ConfigError when r < 2h.
FieldGrid mollify(const FieldGrid& g, double r);

struct DivResidual {
  double max = 0.0;
  double l2 = 0.0;  // (h^{n+1} sum |div W|^2)^{1/2}
};

/// Central-difference divergence of pack_state(z) at the domain points and
/// their outside neighbours. With interior_only, at the domain points whose
/// whole stencil lies in the domain (for fields not supported inside it).
DivResidual div_residual(const FieldGrid& g, bool interior_only = false);

double sup_norm(const FieldGrid& g, Component c);

/// Full-lattice dump, zeros outside the domain.
void write_field(const std::string& path, const FieldGrid& g);

}  // namespace mhdci
