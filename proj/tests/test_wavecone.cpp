#include <random>

#include "doctest.h"
#include "mhdci/wavecone.hpp"
#include "support.hpp"

using namespace mhdci;

namespace {

// The block system of W xi = 0 written out componentwise for
// W = pack(z) with z = (u, b, M, Q, q).
double column_residual(const State& z, const Vec& xi) {
  const int n = z.dim();
  const Vec zeta = xi.head(n);
  const double s = xi(n);
  double r = 0.0;
  for (int i = 0; i < n; ++i) {
    double a = z.q * zeta(i) + s * z.reduced.u(i);
    double c = s * z.reduced.b(i);
    for (int j = 0; j < n; ++j) {
      a += z.reduced.M(i, j) * zeta(j);
      c += z.reduced.Q(i, j) * zeta(j);
    }
    r += a * a + c * c;
  }
  double d1 = 0.0, d2 = 0.0;
  for (int j = 0; j < n; ++j) {
    d1 += z.reduced.u(j) * zeta(j);
    d2 += z.reduced.b(j) * zeta(j);
  }
  return std::sqrt(r + d1 * d1 + d2 * d2) / xi.norm();
}

State atom_diff(const Vec& u1, const Vec& b1, const Vec& u2, const Vec& b2) {
  return State{k_atom(u1, b1).reduced() - k_atom(u2, b2).reduced(), 0.0};
}

Vec e(int n, int i) { return unit_vector(n, i); }

}  // namespace

TEST_CASE("wave_cone_kernel of a two-atom difference") {
  const State z = 0.5 * (k_atom(e(4, 0), e(4, 2)).state() - k_atom(e(4, 1), e(4, 2)).state());
  const auto w = wave_cone_kernel(z);
  REQUIRE(w.has_value());
  Vec expect = Vec::Zero(5);
  expect(3) = 1.0;
  CHECK((w->xi - expect).norm() <= 1e-12);
  CHECK(w->residual <= 1e-12);
  CHECK(column_residual(z, w->xi) <= 1e-12);
}

TEST_CASE("wave_cone_kernel of a full-rank embedding and of zero") {
  // With q = 0 every zeta orthogonal to u and b is a kernel direction, so
  // the K-valued state relaxed_vars(e1, e2, 0) is rank deficient.
  const State k = relaxed_vars(e(4, 0), e(4, 1), 0.0);
  const auto w = wave_cone_kernel(k);
  REQUIRE(w.has_value());
  CHECK(column_residual(k, w->xi) <= 1e-12);
  CHECK(column_residual(k, unit_vector(5, 2)) == 0.0);
  // A nonzero pressure makes M + qI invertible and the embedding full rank.
  CHECK_FALSE(wave_cone_kernel(relaxed_vars(e(4, 0), e(4, 1), 0.5)).has_value());
  CHECK_THROWS_AS(wave_cone_kernel(State::zero(4)), DegenerateInput);
}

TEST_CASE("wave_cone_kernel sign convention") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 50; ++t) {
    const Vec u1 = testing::random_unit(5, rng), b1 = testing::random_unit(5, rng);
    const Vec u2 = testing::random_unit(5, rng), b2 = testing::random_unit(5, rng);
    const auto w = wave_cone_kernel(atom_diff(u1, b1, u2, b2));
    REQUIRE(w.has_value());
    CHECK(w->residual <= 1e-10);
    CHECK(std::abs(w->xi.norm() - 1.0) <= 1e-14);
    for (int i = 0; i < 6; ++i)
      if (std::abs(w->xi(i)) > 1e-12) {
        CHECK(w->xi(i) > 0.0);
        break;
      }
  }
}

TEST_CASE("lambda_direction examples") {
  const WaveDirection a = lambda_direction(e(4, 0), e(4, 2), e(4, 1), e(4, 2));
  Vec expect = Vec::Zero(5);
  expect(3) = 1.0;
  CHECK((a.xi - expect).norm() <= 1e-15);
  CHECK(column_residual(atom_diff(e(4, 0), e(4, 2), e(4, 1), e(4, 2)), a.xi) <= 1e-14);

  const WaveDirection b = lambda_direction(e(4, 0), e(4, 1), e(4, 0), e(4, 2));
  const Vec zeta = b.xi.head(4) / b.xi.head(4).norm();
  CHECK(std::abs(zeta(1)) + std::abs(zeta(2)) <= 1e-14);
  CHECK(b.xi(4) == doctest::Approx(-zeta(0) * b.xi.head(4).norm()));
  CHECK(column_residual(atom_diff(e(4, 0), e(4, 1), e(4, 0), e(4, 2)), b.xi) <= 1e-12);

  CHECK_THROWS_AS(lambda_direction(e(3, 0), e(3, 1), e(3, 2), e(3, 0)), UnsupportedDimension);
  CHECK_THROWS_AS(lambda_direction(2.0 * e(4, 0), e(4, 1), e(4, 2), e(4, 0)), NonUnitInput);
}

TEST_CASE("lambda_direction on random quadruples") {
  std::mt19937_64 rng(9);
  for (int n : {4, 5, 6}) {
    for (int t = 0; t < 300; ++t) {
      const Vec u1 = testing::random_unit(n, rng), b1 = testing::random_unit(n, rng);
      const Vec u2 = testing::random_unit(n, rng), b2 = testing::random_unit(n, rng);
      const WaveDirection w = lambda_direction(u1, b1, u2, b2);
      CHECK(column_residual(atom_diff(u1, b1, u2, b2), w.xi) <= 1e-10);
      const Vec zeta = w.xi.head(n);
      CHECK(std::abs((u1 - u2).dot(zeta)) + std::abs((b1 - b2).dot(zeta)) <= 1e-12);
    }
  }
}

TEST_CASE("segment from the symmetric decomposition") {
  const Vec e1 = e(4, 0);
  CaratheodoryDecomp d;
  d.atoms = {k_atom(e1, e1), k_atom(e1, -e1), k_atom(-e1, e1), k_atom(-e1, -e1)};
  d.weights = {0.25, 0.25, 0.25, 0.25};
  d.indices = {0, 1, 2, 3};
  const LambdaSegment seg = select_segment(State::zero(4), d);
  // Oracle: theta_l (z'_l - z'_1) / 2 with atom 1 = (e1,e1), l = (-e1,-e1).
  const ReducedState oracle = 0.125 * (d.atoms[3].reduced() - d.atoms[0].reduced());
  CHECK(reduced_norm(seg.direction.reduced - oracle) == 0.0);
  CHECK((seg.direction.reduced.u + 0.25 * e1).norm() == 0.0);
  CHECK((seg.direction.reduced.b + 0.25 * e1).norm() == 0.0);
  CHECK(seg.direction.q == 0.0);
  CHECK(seg.anchor_atom == 0);
  CHECK(seg.partner_atom == 3);
  CHECK((seg.certificate.xi - Vec(unit_vector(5, 1))).norm() <= 1e-15);
  CHECK(column_residual(seg.direction, seg.certificate.xi) <= 1e-10);

  // Endpoints checked against a library that contains the four atoms.
  std::vector<KAtom> atoms = build_atom_library(4, 200, 7).atoms();
  atoms.insert(atoms.end(), d.atoms.begin(), d.atoms.end());
  const AtomLibrary lib(4, atoms);
  const LambdaSegment full = segment_from_decomposition(State::zero(4), d, lib);
  CHECK(full.margin_plus > 0.0);
  CHECK(full.margin_minus > 0.0);
}

TEST_CASE("segment selection is invariant under weight rescaling") {
  const AtomLibrary lib = build_atom_library(4, 200, 7);
  std::mt19937_64 rng(10);
  const State z{0.1 * lib.atom(1).reduced() + 0.2 * lib.atom(40).reduced(), 0.0};
  const CaratheodoryDecomp d = decompose(z.reduced, lib);
  CaratheodoryDecomp scaled = d;
  for (auto& w : scaled.weights) w = (w * 3.7) / 3.7;
  const LambdaSegment a = select_segment(z, d);
  const LambdaSegment b = select_segment(z, scaled);
  CHECK(a.anchor_atom == b.anchor_atom);
  CHECK(a.partner_atom == b.partner_atom);
}

TEST_CASE("single atom signals the constraint set") {
  CaratheodoryDecomp d;
  d.atoms = {k_atom(e(4, 0), e(4, 1))};
  d.weights = {1.0};
  d.indices = {0};
  CHECK_THROWS_AS(select_segment(d.atoms[0].state(), d), AtConstraintSet);
}

TEST_CASE("random interior segments stay in the relaxed set") {
  const AtomLibrary lib = build_atom_library(4, 200, 7);
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> pick(0, lib.count() - 1);
  int built = 0;
  for (int t = 0; t < 10; ++t) {
    const State z{0.15 * lib.atom(pick(rng)).reduced() - 0.1 * lib.atom(pick(rng)).reduced(), 0.0};
    const CaratheodoryDecomp d = decompose(z.reduced, lib);
    const LambdaSegment seg = segment_from_decomposition(z, d, lib);
    CHECK(in_relaxed_set(seg.endpoint(1.0), lib));
    CHECK(in_relaxed_set(seg.endpoint(-1.0), lib));
    CHECK(seg.certificate.residual <= 1e-10);
    ++built;
  }
  CHECK(built == 10);
}

TEST_CASE("AE03 checks") {
  const Vec e1 = e(4, 0);
  CaratheodoryDecomp d;
  d.atoms = {k_atom(e1, e1), k_atom(e1, -e1), k_atom(-e1, e1), k_atom(-e1, -e1)};
  d.weights = {0.25, 0.25, 0.25, 0.25};
  const LambdaSegment seg = select_segment(State::zero(4), d);
  const Ae03Check c = verify_ae03(State::zero(4), seg, 0.25, 2.0);
  // Independent arithmetic: C0 = 4 * 24 * 4 = 384, lhs = 0.25 * 2 / 384,
  // rhs = |(-e1/4, -e1/4)|^2 + 2 * 0.0625 / 384.
  CHECK(c.c0 == doctest::Approx(384.0));
  CHECK(c.lhs == doctest::Approx(0.5 / 384.0));
  CHECK(c.rhs == doctest::Approx(0.125 + 0.125 / 384.0));
  CHECK(c.holds);

  State sat = k_atom(e1, e(4, 1)).state();
  const Ae03Check s = verify_ae03(sat, seg, 0.5, 2.0);
  CHECK(s.lhs == doctest::Approx(0.0));
  CHECK(s.holds);

  const AtomLibrary lib = build_atom_library(4, 200, 7);
  std::mt19937_64 rng(14);
  std::uniform_int_distribution<int> pick(0, lib.count() - 1);
  int failures = 0;
  for (int t = 0; t < 100; ++t) {
    const State z{0.3 * lib.atom(pick(rng)).reduced() + 0.2 * lib.atom(pick(rng)).reduced(), 0.0};
    const LambdaSegment sg = select_segment(z, decompose(z.reduced, lib));
    for (int k = 1; k <= 9; ++k)
      if (!verify_ae03(z, sg, 0.1 * k, 2.0).holds) ++failures;
  }
  CHECK(failures == 0);
}

TEST_CASE("wave-cone nullity for fixed directions") {
  // The computed count is n^2 - 1 for spatial xi (see the README).
  for (int n : {4, 5}) {
    Vec xi = Vec::Zero(n + 1);
    xi(0) = 1.0;
    CHECK(wave_cone_nullity(n, xi) == n * n - 1);
    std::mt19937_64 rng(static_cast<unsigned>(n));
    const Vec r = testing::random_unit(n + 1, rng);
    CHECK(wave_cone_nullity(n, r) == n * n - 1);
    Vec t = Vec::Zero(n + 1);
    t(n) = 1.0;
    CHECK(wave_cone_nullity(n, t) == n * n);
  }
}
