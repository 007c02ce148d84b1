#pragma once

// Property checks across the pipeline, shared by `mhdci verify` and the
// acceptance binary. Each check reports pass/fail plus the measured numbers.

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"

namespace mhdci {

struct CheckResult {
  std::string id;
  std::string summary;
  bool pass = false;
  nlohmann::json data;
  double seconds = 0.0;
};

/// 10^3 dyadic states round-trip bit for bit, 10^3 Gaussian states to 1e-15
/// relative, linearity of pack_state within 1e-13.
CheckResult check_embedding(int n, std::uint64_t seed);
/// |W xi| / |xi| <= 1e-10 for lambda_direction on random unit quadruples, and
/// the n = 3 guard.
CheckResult check_wave_solver(int n, int count, std::uint64_t seed);
/// Nullity of z -> pack_state(z) xi equals n^2 - offset for each n, at a
/// random xi with nonzero spatial and time parts.
CheckResult check_wave_dimension(const std::vector<int>& ns, int offset, std::uint64_t seed);
/// hull_margin(0) > 0 and Caratheodory reconstruction of random hull points.
CheckResult check_hull(int n, int atoms, int points, std::uint64_t seed);
/// gamma1 within 3 standard errors of 1/n and rank of the T images.
CheckResult check_moments(int n, int atoms, int samples, std::uint64_t seed);
/// Core slice, support, certified sup-distance, divergence refinement, alpha.
CheckResult check_block(std::uint64_t seed);
/// Field-level operations on small grids: quadrature, mollifier, stencil, dump.
CheckResult check_fields(std::uint64_t seed);
/// One perturbation step from 0 on the unit ball.
CheckResult check_step(int points_per_axis, std::uint64_t seed);
/// J-step scheme run, repeated for byte-identical reports.
CheckResult check_scheme(int J, int points_per_axis, std::uint64_t seed);
/// F = G = 0 for fields with values in K.
CheckResult check_defect_null(std::uint64_t seed);

nlohmann::json to_json(const CheckResult& r);

}  // namespace mhdci
