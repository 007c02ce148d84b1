#pragma once

// Seeded substreams and randomized (shifted) Sobol point sets.

#include <boost/random/sobol.hpp>

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace mhdci {

/// Deterministic seed for the named substream of a master seed.
std::uint64_t substream_seed(std::uint64_t seed, std::string_view name);

/// Sobol sequence with a Cranley-Patterson rotation drawn from the seed.
class ShiftedSobol {
 public:
  ShiftedSobol(int dim, std::uint64_t seed);
  int dim() const { return dim_; }
  /// Next point of [0,1)^dim, clamped away from 0 and 1.
  void next(std::span<double> out);

 private:
  int dim_;
  boost::random::sobol engine_;
  std::vector<double> shift_;
};

/// Standard normal quantile.
double normal_quantile(double p);

/// Maps 'dim' uniforms to a uniformly distributed unit vector.
void sphere_from_uniform(std::span<const double> uniforms, std::span<double> out);

/// Maps dim+1 uniforms to a uniformly distributed point of the unit ball of R^dim.
void ball_from_uniform(std::span<const double> uniforms, std::span<double> out);

/// 'count' deterministic points of the closed unit ball of R^dim, row-major.
std::vector<double> ball_points(int dim, std::size_t count, std::uint64_t seed);

}  // namespace mhdci
