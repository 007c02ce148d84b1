#pragma once

// One perturbation step (Vitali cover of Omega, one building block per ball,
// amplitude certified pointwise on the lattice) and the iteration built on it,
// with the compatibility defects and saturation statistics of the iterates.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "mhdci/fields.hpp"
#include "mhdci/kgeometry.hpp"
#include "mhdci/waves.hpp"

namespace mhdci {

struct Ball {
  Vec center;
  double radius = 0.0;
};

struct VitaliCover {
  std::vector<Ball> balls;
  double covered_fraction = 0.0;  // exact ball volumes over |Omega|
};

/// Greedy disjoint balls of radius < kappa inside omega until the uncovered
/// fraction drops below sigma_budget. Radii shrink geometrically; candidate
/// centres at each radius come from a seeded shifted grid.
/// Throws CoveringError when max_balls is hit first.
VitaliCover vitali_cover(const Domain& omega, double kappa, double sigma_budget, std::uint64_t seed,
                         int max_balls = 4096);

/// Blocks over a background (zero unless a synthetic base is given), plus the
/// lattice field and the certified l1 hull margins from the last step.
struct RelaxedSolution {
  Domain omega;
  std::vector<BuildingBlock> blocks;
  int generation = 0;
  std::function<State(const Vec&)> base;

  FieldGrid field;
  std::vector<double> margin;  // per field slot, lower bound on the l1 inscribed radius

  static RelaxedSolution zero(const Domain& omega);
  static RelaxedSolution synthetic(const Domain& omega, std::function<State(const Vec&)> f);

  int dim() const { return omega.dim() - 1; }
  State evaluate(const Vec& y) const;
  FieldGrid sample(const GridSpec& spec) const;
  /// Samples the field and sets margins when missing or on another grid.
  void ensure_grid(const GridSpec& spec, const AtomLibrary& lib);
};

struct StepParams {
  GridSpec grid;
  double kappa = 0.5;
  double sigma_budget = 0.95;
  double delta = 0.1;             // block sup-distance relative to |zbar|
  double min_cover_fraction = 0.05;
  int max_pieces = 2000;
  std::size_t sup_samples = 20000;
  int lp_checks = 64;
  std::uint64_t seed = 1;
};

struct BallReport {
  Vec center;
  double radius = 0.0;
  std::string status;  // used | at-constraint-set | outside-hull | geometry | covering | no-amplitude
  int frequency = 0;
  double scale = 0.0;
  double cover_fraction = 0.0;
  double sup_distance = 0.0;
  double margin_center = 0.0;
  double min_cert = 0.0;
  int lattice_points = 0;
  Ae03Check ae03;
};

struct StepReport {
  int generation = 0;
  double m = 2.0;
  double omega_volume = 0.0;
  double energy_before = 0.0, energy_after = 0.0;
  double quadrature_error = 0.0;
  double gap_before = 0.0, gap_after = 0.0;
  double beta_measured = 0.0;
  double vitali_fraction = 0.0;
  int balls_used = 0;
  int balls_skipped = 0;
  double min_margin = 0.0;
  int lp_checked = 0;
  int lp_failures = 0;
  bool ae03_all_hold = true;
  bool saturated = false;
  int frequency_multiplier = 1;
  std::vector<double> moll_distances;
  std::vector<BallReport> balls;
};

struct StepResult {
  RelaxedSolution solution;
  StepReport report;
};

/// Per-ball segments and unscaled blocks of one step.
struct StepPlan {
  VitaliCover cover;
  std::vector<BallReport> balls;
  std::vector<std::optional<LambdaSegment>> segments;
  std::vector<std::optional<BuildingBlock>> blocks;
  double eps = 0.0;
  double omega_volume = 0.0;
};

StepPlan plan_step(RelaxedSolution& z, double m, const AtomLibrary& lib, const StepParams& p);
/// Certifies amplitudes for the planned blocks at frequency N * multiplier.
StepResult certify_step(const RelaxedSolution& z, const StepPlan& plan, double m, const AtomLibrary& lib,
                        const StepParams& p, int multiplier = 1);
StepResult perturb_step(const RelaxedSolution& z, double m, const AtomLibrary& lib, const StepParams& p);

struct DefectReport {
  double F_norm = 0.0;  // (int |F|^m)^{1/m}, Frobenius pointwise
  double G_norm = 0.0;
  double f_max = 0.0, f_l2 = 0.0;
  double g_max = 0.0, g_l2 = 0.0;
  std::vector<double> f, g;  // n values per field slot
};

/// F = u(x)u - b(x)b - M - (|u|^2 - |b|^2) I / n, G = b(x)u - u(x)b - Q, and
/// their central-difference spatial divergences (zero extension outside).
DefectReport compat_defect(const FieldGrid& g, double m);

struct SaturationStats {
  double mean_u_norm = 0.0;
  double mean_b_norm = 0.0;
  std::vector<double> eps{0.1, 0.05, 0.01};
  std::vector<double> frac_above;  // max(|u|, |b|) >= 1 - eps
};

SaturationStats saturation_stats(const FieldGrid& g);

struct IterationConfig {
  int n = 4;
  double m = 2.0;
  int J = 3;
  int points_per_axis = 16;
  std::optional<Domain> omega;  // default: ball sized so that 2h < 2^-J
  std::vector<double> r_schedule;  // default: min(0.99 2^-j, 2h (1 + (J - j) / 2))
  int atoms = 200;
  double kappa = 0.5;
  double sigma_budget = 0.95;
  double delta = 0.1;
  std::uint64_t seed = 1;
  int max_retries = 5;
};

/// Ball of radius min(1, 0.95 (ppa - 2) / 2^{J+2}) at the origin.
Domain default_omega(int n, int J, int points_per_axis);
std::vector<double> default_r_schedule(int J, double h);

struct IterationRecord {
  StepReport step;
  double r = 0.0;
  double cap = 0.0;
  double moll_self = 0.0;             // |z_j - z_j * rho_{r_j}|_{L^m}
  std::vector<double> moll_cross;     // |(z_j - z_{j-1}) * rho_{r_i}|, i < j
  bool caps_hold = false;
  int retries = 0;
  double div_max = 0.0, div_l2 = 0.0;
  DefectReport defect;
  SaturationStats saturation;
  double mean_gap_density = 0.0;      // mean over Omega of 2 - |u|^m - |b|^m
};

struct RunReport {
  IterationConfig config;
  double omega_volume = 0.0;
  double h = 0.0;
  std::size_t lattice_points = 0;
  std::vector<IterationRecord> iterations;
  double beta_min = 0.0;
  bool recursion_holds = false;
  bool gap_decreasing = false;
};

/// Throws ConfigError for r_j outside [2h, 2^-j) and SchemeError when the
/// mollification caps still fail after max_retries frequency doublings.
RunReport run_scheme(const IterationConfig& cfg, RelaxedSolution* final_state = nullptr,
                     const std::function<void(int, const RelaxedSolution&)>& on_iteration = {});

nlohmann::json to_json(const StepReport& r);
nlohmann::json to_json(const RunReport& r);
nlohmann::json to_json(const IterationConfig& c);

}  // namespace mhdci
