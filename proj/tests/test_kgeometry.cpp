#include <random>

#include "doctest.h"
#include "mhdci/kgeometry.hpp"
#include "mhdci/lp.hpp"
#include "support.hpp"

using namespace mhdci;

namespace {
std::vector<KAtom> symmetric_atoms(int n) {
  const Vec e = unit_vector(n, 0);
  return {k_atom(e, e), k_atom(e, -e), k_atom(-e, e), k_atom(-e, -e)};
}
}  // namespace

TEST_CASE("simplex solves a small program") {
  // max x0 + x1 s.t. x0 + 2 x1 + s0 = 4, 3 x0 + x1 + s1 = 6.
  Eigen::MatrixXd A(2, 4);
  A << 1, 2, 1, 0, 3, 1, 0, 1;
  Eigen::VectorXd b(2);
  b << 4, 6;
  Simplex lp(A, b);
  REQUIRE(lp.feasible());
  Eigen::VectorXd c(4);
  c << 1, 1, 0, 0;
  CHECK(lp.maximize(c) == LpStatus::Optimal);
  const Eigen::VectorXd x = lp.solution();
  CHECK(x(0) == doctest::Approx(1.6));
  CHECK(x(1) == doctest::Approx(1.2));
}

TEST_CASE("simplex reports infeasibility and unboundedness") {
  Eigen::MatrixXd A(1, 2);
  A << 1, 1;
  Eigen::VectorXd b(1);
  b << -1;
  Simplex bad(A, b);
  CHECK_FALSE(bad.feasible());
  CHECK(bad.infeasibility() == doctest::Approx(1.0));
  Eigen::MatrixXd A2(1, 2);
  A2 << 1, -1;
  Eigen::VectorXd b2(1);
  b2 << 1;
  Simplex unb(A2, b2);
  Eigen::VectorXd c(2);
  c << 1, 0;
  CHECK(unb.maximize(c) == LpStatus::Unbounded);
}

TEST_CASE("atom library is deterministic and roughly centred") {
  const AtomLibrary a = build_atom_library(4, 200, 7);
  const AtomLibrary b = build_atom_library(4, 200, 7);
  CHECK(a.coords() == b.coords());
  Vec mean = Vec::Zero(4);
  for (const auto& atom : a.atoms()) {
    CHECK(std::abs(atom.u().norm() - 1.0) <= 1e-12);
    CHECK(std::abs(atom.b().norm() - 1.0) <= 1e-12);
    mean += atom.u();
  }
  mean /= a.count();
  CHECK(mean.norm() <= 0.1);
  CHECK_THROWS_AS(build_atom_library(4, 95, 7), InvalidArgument);
}

TEST_CASE("decompose zero over the symmetric atoms") {
  const AtomLibrary lib(4, symmetric_atoms(4));
  const CaratheodoryDecomp d = decompose(ReducedState::zero(4), lib);
  CHECK(d.reconstruction_error <= 1e-9);
  double s = 0.0;
  for (double w : d.weights) {
    CHECK(w >= 0.0);
    s += w;
  }
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(reduced_norm(d.reconstruct()) <= 1e-9);
}

TEST_CASE("decompose an extreme point and a midpoint") {
  const AtomLibrary lib = build_atom_library(4, 200, 11);
  const CaratheodoryDecomp one = decompose(lib.atom(17).reduced(), lib);
  CHECK(one.atoms.size() == 1);
  CHECK(one.indices.front() == 17);
  CHECK(one.weights.front() == doctest::Approx(1.0));

  const ReducedState mid = 0.5 * lib.atom(3).reduced() + 0.5 * lib.atom(120).reduced();
  const CaratheodoryDecomp two = decompose(mid, lib);
  CHECK(two.reconstruction_error <= 1e-9);
  CHECK(static_cast<int>(two.atoms.size()) <= state_dim(4));
}

TEST_CASE("decompose random convex combinations") {
  const AtomLibrary lib = build_atom_library(4, 200, 13);
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> pick(0, lib.count() - 1);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> w(40);
    double s = 0.0;
    for (auto& x : w) s += (x = U(rng));
    ReducedState z = ReducedState::zero(4);
    for (auto& x : w) z += (x / s) * lib.atom(pick(rng)).reduced();
    const CaratheodoryDecomp d = decompose(z, lib);
    CHECK(d.reconstruction_error <= 1e-9);
    CHECK(static_cast<int>(d.atoms.size()) <= state_dim(4));
  }
}

TEST_CASE("decompose rejects points outside the hull") {
  const AtomLibrary lib = build_atom_library(4, 200, 7);
  const ReducedState far = 2.0 * lib.atom(0).reduced();
  CHECK_THROWS_AS(decompose(far, lib), OutsideHull);
  try {
    decompose(far, lib);
  } catch (const OutsideHull& e) {
    CHECK(e.functional_value() > 0.0);
  }
}

TEST_CASE("hull margin") {
  const AtomLibrary lib = build_atom_library(4, 200, 7);
  const double m0 = hull_margin(ReducedState::zero(4), lib);
  CHECK(m0 > 0.0);
  CHECK(hull_margin(2.0 * lib.atom(5).reduced(), lib) == 0.0);
  CHECK(hull_margin(lib.atom(5).reduced(), lib) <= 1e-9);
  // Shrinking toward 0 does not lower the margin.
  const ReducedState z = 0.4 * lib.atom(9).reduced();
  CHECK(hull_margin(0.5 * z, lib) >= hull_margin(z, lib) - 1e-9);
}

TEST_CASE("in_relaxed_set") {
  const AtomLibrary lib = build_atom_library(4, 200, 7);
  CHECK(in_relaxed_set(State::zero(4), lib));
  State q1 = State::zero(4);
  q1.q = 1.0;
  CHECK_FALSE(in_relaxed_set(q1, lib));
  CHECK_FALSE(in_relaxed_set(lib.atom(0).state(), lib));
}

TEST_CASE("sphere moments") {
  for (int n : {4, 5}) {
    const SphereMoments m = sphere_moments(n, 200000, 3);
    CHECK(std::abs(m.gamma1.value - 1.0 / n) <= 3 * m.gamma1.std_error + 1e-12);
    const double g2 = 1.0 / (n * (n + 2.0));
    const double g3 = 3.0 / (n * (n + 2.0)) - 1.0 / (n * n);
    CHECK(m.gamma2.value > 0.0);
    CHECK(m.gamma3.value > 0.0);
    CHECK(std::abs(m.gamma2.value - g2) <= 5 * m.gamma2.std_error + 1e-4);
    CHECK(std::abs(m.gamma3.value - g3) <= 5 * m.gamma3.std_error + 1e-4);
  }
  CHECK_THROWS_AS(sphere_moments(4, 100, 1), InvalidArgument);
}

TEST_CASE("T image spans the reduced space") {
  const AtomLibrary lib = build_atom_library(4, 400, 7);
  const TImageRank r = t_image_rank(lib);
  CHECK(r.rank >= reduced_dim(4));
}

TEST_CASE("library dump round trip") {
  const AtomLibrary lib = build_atom_library(4, 96, 5);
  const std::string path = "test_atoms.mhdf";
  save_library(path, lib);
  const AtomLibrary back = load_library(path);
  CHECK(back.coords() == lib.coords());
  std::remove(path.c_str());
}
