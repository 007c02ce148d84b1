#include <cmath>

#include "doctest.h"
#include "mhdci/sampling.hpp"
#include "mhdci/scheme.hpp"

using namespace mhdci;

namespace {

const AtomLibrary& library() {
  static const AtomLibrary lib = build_atom_library(4, 200, 1);
  return lib;
}

StepParams params(const Domain& omega, int ppa) {
  StepParams p;
  p.grid = make_grid(omega, ppa);
  p.sup_samples = 5000;
  p.lp_checks = 16;
  p.kappa = 0.3;
  p.sigma_budget = 0.97;
  return p;
}

// u, b unit fields with the matching K values of M and Q.
State k_field(const Vec& y) {
  Vec u = Vec::Zero(4), b = Vec::Zero(4);
  u(0) = std::cos(3.0 * y(0));
  u(1) = std::sin(3.0 * y(0));
  b(2) = std::cos(2.0 * y(4) + y(1));
  b(3) = std::sin(2.0 * y(4) + y(1));
  return k_atom(u, b).state();
}

}  // namespace

TEST_CASE("vitali cover") {
  const Domain box{DomainKind::Box, Vec::Zero(5), 0.5};
  // Half of a 5-dimensional box is out of reach for a modest number of
  // disjoint balls; the error reports what was achieved.
  try {
    vitali_cover(box, 0.3, 0.5, 1, 256);
    FAIL("expected a covering error");
  } catch (const CoveringError& e) {
    CHECK(e.achieved_fraction() > 0.05);
    CHECK(e.achieved_fraction() < 0.5);
  }

  const VitaliCover c = vitali_cover(box, 0.3, 0.92, 1);
  REQUIRE(c.balls.size() > 1);
  for (std::size_t i = 0; i < c.balls.size(); ++i) {
    CHECK(c.balls[i].radius < 0.3);
    CHECK(((c.balls[i].center.array().abs() + c.balls[i].radius) <= 0.5 + 1e-12).all());
    for (std::size_t j = i + 1; j < c.balls.size(); ++j)
      CHECK((c.balls[i].center - c.balls[j].center).norm() >= c.balls[i].radius + c.balls[j].radius - 1e-12);
  }
  // Monte Carlo volume of the union.
  ShiftedSobol sob(5, 7);
  std::vector<double> u(5);
  const int samples = 200000;
  int inside = 0;
  for (int k = 0; k < samples; ++k) {
    sob.next(u);
    Vec y(5);
    for (int a = 0; a < 5; ++a) y(a) = u[static_cast<std::size_t>(a)] - 0.5;
    for (const Ball& b : c.balls)
      if ((y - b.center).norm() < b.radius) {
        ++inside;
        break;
      }
  }
  const double mc = static_cast<double>(inside) / samples;
  CHECK(1.0 - mc < 0.92);
  CHECK(mc == doctest::Approx(c.covered_fraction).epsilon(0.05));

  const VitaliCover one = vitali_cover(unit_ball(4), 3.0, 0.5, 1);
  CHECK(one.balls.size() == 1);
  CHECK(one.covered_fraction == doctest::Approx(1.0));
  CHECK_THROWS_AS(vitali_cover(Domain{DomainKind::Ball, Vec::Zero(5), 0.0}, 0.3, 0.5, 1), InvalidArgument);
  CHECK(vitali_cover(box, 0.3, 0.92, 1).balls.size() == c.balls.size());
}

TEST_CASE("perturbation step from zero") {
  const Domain omega = unit_ball(4);
  const StepParams p = params(omega, 10);
  const RelaxedSolution z = RelaxedSolution::zero(omega);
  const StepResult r = perturb_step(z, 2.0, library(), p);
  const StepReport& s = r.report;
  CHECK(s.energy_before == 0.0);
  CHECK(s.energy_after > 0.0);
  CHECK(s.gap_after < s.gap_before);
  CHECK(s.gap_before == doctest::Approx(2.0 * omega.exact_volume()).epsilon(2e-3));
  CHECK(s.beta_measured > 0.0);
  CHECK(s.balls_used > 0);
  CHECK(s.min_margin > 0.0);
  CHECK(s.lp_checked > 0);
  CHECK(s.lp_failures == 0);
  CHECK(s.ae03_all_hold);
  CHECK_FALSE(s.saturated);
  CHECK(r.solution.generation == 1);
  CHECK(r.solution.blocks.size() == static_cast<std::size_t>(s.balls_used));

  // The certified field is the sum of the scaled blocks.
  const FieldGrid direct = r.solution.sample(p.grid);
  double worst = 0.0;
  for (std::size_t k = 0; k < direct.size(); ++k)
    worst = std::max(worst, state_norm(direct.state(k) - r.solution.field.state(k)));
  CHECK(worst <= 1e-12);

  const StepResult again = perturb_step(z, 2.0, library(), p);
  CHECK(to_json(again.report).dump() == to_json(s).dump());
}

TEST_CASE("saturated background") {
  const Domain omega = unit_ball(4);
  const RelaxedSolution z = RelaxedSolution::synthetic(omega, k_field);
  const StepResult r = perturb_step(z, 2.0, library(), params(omega, 8));
  CHECK(r.report.saturated);
  CHECK(r.report.balls_used == 0);
  CHECK(r.report.beta_measured == 0.0);
  CHECK(r.solution.blocks.empty());
  for (const BallReport& b : r.report.balls) CHECK(b.status != "used");
}

TEST_CASE("compatibility defect") {
  const Domain omega = unit_ball(4);
  const GridSpec g = make_grid(omega, 10);
  const DefectReport zero = compat_defect(FieldGrid(g, omega), 2.0);
  CHECK(zero.F_norm == 0.0);
  CHECK(zero.G_norm == 0.0);
  CHECK(zero.f_max == 0.0);

  const DefectReport k = compat_defect(sample_function(g, omega, k_field), 2.0);
  CHECK(k.F_norm <= 1e-14);
  CHECK(k.G_norm <= 1e-14);
  CHECK(k.f_max <= 1e-12);
  CHECK(k.g_max <= 1e-12);

  // Away from K the defect is the pointwise mismatch.
  const FieldGrid half = sample_function(g, omega, [](const Vec& y) { return 0.5 * k_field(y); });
  const DefectReport d = compat_defect(half, 2.0);
  CHECK(d.F_norm > 0.1);
  CHECK(std::isfinite(d.f_l2));
}

TEST_CASE("saturation statistics") {
  const Domain omega = unit_ball(4);
  const GridSpec g = make_grid(omega, 10);
  const SaturationStats z = saturation_stats(FieldGrid(g, omega));
  CHECK(z.mean_u_norm == 0.0);
  CHECK(z.mean_b_norm == 0.0);
  for (double f : z.frac_above) CHECK(f == 0.0);
  const SaturationStats s = saturation_stats(sample_function(g, omega, k_field));
  CHECK(s.mean_u_norm == doctest::Approx(1.0));
  CHECK(s.mean_b_norm == doctest::Approx(1.0));
  for (double f : s.frac_above) CHECK(f == 1.0);
}

TEST_CASE("scheme configuration") {
  IterationConfig c;
  c.points_per_axis = 10;
  c.J = 0;
  CHECK_THROWS_AS(run_scheme(c), ConfigError);
  c.J = 2;
  c.omega = unit_ball(4);
  CHECK_THROWS_AS(run_scheme(c), ConfigError);  // 2h > 2^-2
  c.omega.reset();
  c.r_schedule = {0.4, 0.3};
  CHECK_THROWS_AS(run_scheme(c), ConfigError);  // r_2 >= 2^-2
  CHECK(default_omega(4, 1, 16).size == 1.0);
  CHECK(default_omega(4, 3, 16).size == doctest::Approx(0.95 * 14.0 / 32.0));
}

TEST_CASE("one iteration is one perturbation step") {
  IterationConfig c;
  c.J = 1;
  c.points_per_axis = 10;
  c.kappa = 0.3;
  c.sigma_budget = 0.97;
  const RunReport rep = run_scheme(c);
  REQUIRE(rep.iterations.size() == 1);

  const Domain omega = default_omega(4, 1, 10);
  StepParams p;
  p.grid = make_grid(omega, 10);
  p.kappa = c.kappa;
  p.sigma_budget = c.sigma_budget;
  p.seed = substream_seed(c.seed, "scheme/step/1");
  const StepResult r = perturb_step(RelaxedSolution::zero(omega), c.m, build_atom_library(4, c.atoms, c.seed), p);
  CHECK(rep.iterations[0].step.energy_after == r.report.energy_after);
  CHECK(rep.iterations[0].step.balls_used == r.report.balls_used);
}

TEST_CASE("two iterations") {
  IterationConfig c;
  c.J = 2;
  c.points_per_axis = 10;
  const RunReport rep = run_scheme(c);
  REQUIRE(rep.iterations.size() == 2);
  CHECK(rep.gap_decreasing);
  CHECK(rep.recursion_holds);
  CHECK(rep.beta_min > 0.0);
  for (const IterationRecord& it : rep.iterations) {
    CHECK(it.caps_hold);
    CHECK(it.moll_self < it.cap);
    for (double d : it.moll_cross) CHECK(d < it.cap);
    CHECK(it.step.min_margin > 0.0);
    CHECK(std::isfinite(it.defect.F_norm));
  }
  CHECK(rep.iterations[1].moll_cross.size() == 1);
  CHECK(rep.iterations[1].mean_gap_density < rep.iterations[0].mean_gap_density);
  CHECK(to_json(run_scheme(c)).dump() == to_json(rep).dump());
}
