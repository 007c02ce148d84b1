#include <cstdio>
#include <random>

#include "doctest.h"
#include "mhdci/fields.hpp"
#include "mhdci/mhdf.hpp"
#include "support.hpp"

using namespace mhdci;

namespace {

Vec e(int n, int i) { return unit_vector(n, i); }

State demo_amplitude() {
  return State{0.5 * (k_atom(e(4, 1), e(4, 2)).reduced() - k_atom(e(4, 2), e(4, 3)).reduced()), 0.0};
}

BuildingBlock demo_block(int N, const Vec& c, double r) {
  return assemble_block(demo_amplitude(), WaveDirection{e(5, 0), 0.0}, N, c, r);
}

Domain box(const Vec& c, double half) { return Domain{DomainKind::Box, c, half}; }

}  // namespace

TEST_CASE("grid construction") {
  const Domain omega = unit_ball(4);
  const GridSpec g = make_grid(omega, 16);
  CHECK(g.h == doctest::Approx(2.0 / 14.0));
  CHECK(g.lo(0) == doctest::Approx(-16.0 / 14.0));
  const FieldGrid f(g, omega);
  // Every stored point is in the domain; the outer cell layer is empty.
  for (std::size_t s = 0; s < f.size(); s += 97) {
    CHECK(omega.contains(f.position(s)));
    const LatticeIndex i = g.unravel(f.lattice_point(s));
    for (int a = 0; a < 5; ++a) {
      CHECK(i[static_cast<std::size_t>(a)] > 0);
      CHECK(i[static_cast<std::size_t>(a)] < 15);
    }
  }
  CHECK_THROWS_AS(make_grid(omega, 4), ConfigError);
  CHECK(g.linear(g.unravel(12345)) == 12345);
}

TEST_CASE("domain volume") {
  const Domain b = unit_ball(4);
  CHECK(domain_volume(b) == doctest::Approx(8.0 * 3.141592653589793 * 3.141592653589793 / 15.0).epsilon(2e-3));
  const Domain q = box(Vec::Zero(5), 0.5);
  CHECK(domain_volume(q) == doctest::Approx(1.0));
  CHECK_THROWS_AS(domain_volume(Domain{DomainKind::Ball, Vec::Zero(5), 0.0}), InvalidArgument);
}

TEST_CASE("sampling blocks") {
  const Domain omega = unit_ball(4);
  const GridSpec g = make_grid(omega, 12);
  const FieldGrid zero = sample_field({}, g, omega);
  CHECK(sup_norm(zero, Component::State) == 0.0);

  Vec c1 = Vec::Zero(5), c2 = Vec::Zero(5);
  c1(0) = 0.45;
  c2(0) = -0.45;
  const BuildingBlock b1 = demo_block(3, c1, 0.4), b2 = demo_block(5, c2, 0.4);
  const FieldGrid one = sample_field({b1}, g, omega);
  for (std::size_t s = 0; s < one.size(); ++s) {
    const State direct = unpack_state(EmbeddedMatrix(b1.evaluate(one.position(s))), 1e-8);
    CHECK(state_norm(one.state(s) - direct) <= 1e-14 * (1.0 + state_norm(direct)));
  }
  const FieldGrid two = sample_field({b1, b2}, g, omega);
  CHECK(two.provenance() == std::vector<int>{0, 1});
  for (std::size_t s = 0; s < two.size(); ++s) {
    const Vec y = two.position(s);
    const BuildingBlock& own = (y - c1).norm() < 0.4 ? b1 : b2;
    const State direct = unpack_state(EmbeddedMatrix(own.evaluate(y)), 1e-8);
    CHECK(state_norm(two.state(s) - direct) <= 1e-14 * (1.0 + state_norm(direct)));
  }
  Vec far = Vec::Zero(5);
  far(1) = 1.1;
  CHECK_THROWS_AS(sample_field({demo_block(1, far, 0.3)}, g, omega), PlacementError);
}

TEST_CASE("L^m quadrature") {
  const Domain omega = box(Vec::Zero(5), 0.5);
  const GridSpec g = make_grid(omega, 10);
  CHECK(lm_norm(FieldGrid(g, omega), 2.0, Component::All) == 0.0);
  const FieldGrid ones = sample_function(g, omega, [](const Vec&) {
    State z = State::zero(4);
    z.reduced.u = unit_vector(4, 0);
    return z;
  });
  const Quadrature q = lm_integral(ones, 2.0, Component::U);
  CHECK(std::abs(q.value - 1.0) <= 1e-12 + q.error);
  CHECK(lm_norm(ones, 3.0, Component::B) == 0.0);
  CHECK(lm_norm(ones, 2.0, Component::All) == doctest::Approx(1.0));
}

TEST_CASE("L^m integral of a block against the block mass") {
  const Domain omega = unit_ball(4);
  const GridSpec g = make_grid(omega, 20);
  const BuildingBlock blk = demo_block(2, Vec::Zero(5), 0.95);
  const FieldGrid f = sample_field({blk}, g, omega);
  const Quadrature q = lm_integral(f, 2.0, Component::All);
  const BlockMetrics bm = block_metrics(blk, 2.0, 400000, 2);
  const double ref = pack_state(blk.amplitude()).entries().col(4).squaredNorm();
  const double ball = Domain{DomainKind::Ball, Vec::Zero(5), 0.95}.exact_volume();
  const double expect = bm.mass_ratio * ball * ref;
  MESSAGE("grid " << q.value << " +- " << q.error << ", block " << expect << " +- " << bm.mass_std_error * ball * ref);
  CHECK(std::abs(q.value - expect) <= 2.0 * q.error + 3.0 * bm.mass_std_error * ball * ref);
}

TEST_CASE("mollification") {
  const Domain omega = unit_ball(4);
  const GridSpec g = make_grid(omega, 14);
  CHECK_THROWS_AS(mollify(FieldGrid(g, omega), 1.5 * g.h), ConfigError);

  // Constant field: unchanged where the kernel stays inside the domain.
  std::mt19937_64 rng(2);
  const State z = testing::random_state(4, rng);
  const FieldGrid cst = sample_function(g, omega, [&](const Vec&) { return z; });
  const double r = 2.0 * g.h;
  const FieldGrid mc = mollify(cst, r);
  int interior = 0;
  for (std::size_t s = 0; s < mc.size(); ++s)
    if (mc.position(s).norm() < 1.0 - r - 1e-9) {
      ++interior;
      CHECK(state_norm(mc.state(s) - z) <= 1e-13 * (1.0 + state_norm(z)));
    }
  CHECK(interior > 0);

  // Linearity.
  Vec c = Vec::Zero(5);
  const FieldGrid a = sample_field({demo_block(4, c, 0.9)}, g, omega);
  const FieldGrid b = sample_function(g, omega, [&](const Vec& y) { return std::cos(y(1)) * z; });
  const FieldGrid lhs = mollify(a + b, 2.5 * g.h);
  const FieldGrid rhs = mollify(a, 2.5 * g.h) + mollify(b, 2.5 * g.h);
  double worst = 0.0;
  for (std::size_t s = 0; s < lhs.size(); ++s) worst = std::max(worst, state_norm(lhs.state(s) - rhs.state(s)));
  CHECK(worst <= 1e-12);

  // Max-norm contraction.
  CHECK(sup_norm(mollify(a, 2.0 * g.h), Component::State) <= sup_norm(a, Component::State) + 1e-14);
}

TEST_CASE("mollifying a high-frequency block") {
  const Domain omega = unit_ball(4);
  const GridSpec g = make_grid(omega, 16);
  const FieldGrid f = sample_field({demo_block(16, Vec::Zero(5), 0.95)}, g, omega);
  double mean = 0.0;
  for (std::size_t s = 0; s < f.size(); ++s) mean += vector_state_norm(4, std::span<const double>(f.values(s), 24));
  mean /= static_cast<double>(f.size());
  const FieldGrid m = mollify(f, 3.0 * g.h);
  MESSAGE("sup before " << sup_norm(f, Component::State) << ", after " << sup_norm(m, Component::State) << ", mean " << mean);
  CHECK(sup_norm(m, Component::State) < 2.0 * mean);
}

TEST_CASE("divergence residual") {
  const Domain omega = box(Vec::Zero(5), 0.5);
  const GridSpec g = make_grid(omega, 10);
  std::mt19937_64 rng(3);
  const State z = testing::random_state(4, rng);
  const FieldGrid cst = sample_function(g, omega, [&](const Vec&) { return z; });
  const DivResidual rc = div_residual(cst, true);
  CHECK(rc.max == 0.0);
  CHECK(rc.l2 == 0.0);

  // Exact plane wave Wbar sin(N y1) with Wbar e1 = 0.
  const State w = demo_amplitude();
  const FieldGrid wave = sample_function(g, omega, [&](const Vec& y) { return std::sin(7.0 * y(0)) * w; });
  CHECK(div_residual(wave, true).max <= 1e-10);

  // A generic field is not divergence free.
  const FieldGrid bad = sample_function(g, omega, [&](const Vec& y) { return std::sin(3.0 * y(2)) * z; });
  CHECK(div_residual(bad, true).max > 1e-3);
}

TEST_CASE("divergence of a block refines at second order") {
  // Window inside the cutoff annulus of one block.
  const BuildingBlock blk = demo_block(2, Vec::Zero(5), 1.0);
  Vec c = Vec::Zero(5);
  c(1) = 0.7;
  const Domain window = box(c, 0.15);
  double prev = 0.0;
  std::vector<double> ratios;
  for (int ppa : {10, 20}) {
    const GridSpec g = make_grid(window, ppa);
    const FieldGrid f = sample_function(g, window, [&](const Vec& y) {
      return unpack_state(EmbeddedMatrix(blk.evaluate(y)), 1e-8);
    });
    const double mx = div_residual(f, true).max;
    if (prev > 0.0) ratios.push_back(prev / mx);
    prev = mx;
  }
  for (double q : ratios) {
    MESSAGE("ratio " << q);
    CHECK(q >= 3.0);
    CHECK(q <= 5.0);
  }
}

TEST_CASE("field dumps") {
  const Domain omega = unit_ball(4);
  const GridSpec g = make_grid(omega, 8);
  const FieldGrid f = sample_field({demo_block(2, Vec::Zero(5), 0.9)}, g, omega);
  const std::string path = "test_field_dump.mhdf";
  write_field(path, f);
  const MhdfData d = read_mhdf(path);
  std::remove(path.c_str());
  CHECK(d.n == 4);
  CHECK(d.points_per_axis == 8);
  CHECK(d.components == 24);
  REQUIRE(d.values.size() == g.count() * 24);
  for (std::size_t s = 0; s < f.size(); ++s)
    for (int q = 0; q < 24; ++q)
      CHECK(d.values[static_cast<std::size_t>(f.lattice_point(s)) * 24 + static_cast<std::size_t>(q)] == f.values(s)[q]);
}

TEST_CASE("memory guard") {
  const std::size_t old = grid_memory_limit();
  set_grid_memory_limit(1 << 20);
  const Domain omega = unit_ball(4);
  CHECK_THROWS_AS(FieldGrid(make_grid(omega, 16), omega), ConfigError);
  set_grid_memory_limit(old);
  CHECK_NOTHROW(FieldGrid(make_grid(omega, 8), omega));
}
