#include "mhdci/battery.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "mhdci/errors.hpp"
#include "mhdci/fields.hpp"
#include "mhdci/kgeometry.hpp"
#include "mhdci/mhdf.hpp"
#include "mhdci/sampling.hpp"
#include "mhdci/scheme.hpp"
#include "mhdci/wavecone.hpp"
#include "mhdci/waves.hpp"

namespace mhdci {

namespace {

using Clock = std::chrono::steady_clock;

Vec gaussian(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

Vec unit(int n, std::mt19937_64& rng) {
  const Vec v = gaussian(n, rng);
  return v / v.norm();
}

State gaussian_state(int n, std::mt19937_64& rng) {
  std::vector<double> c(static_cast<std::size_t>(state_dim(n)));
  std::normal_distribution<double> g(0.0, 1.0);
  for (double& x : c) x = g(rng);
  return state_from_vector(n, c);
}

// Entries k 2^-10, |k| <= 1024: pack and unpack are exact at n = 4.
State dyadic_state(int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> K(-1024, 1024);
  std::vector<double> c(static_cast<std::size_t>(state_dim(n)));
  for (double& x : c) x = std::ldexp(static_cast<double>(K(rng)), -10);
  return state_from_vector(n, c);
}

State demo_amplitude() {
  const Vec e1 = unit_vector(4, 1), e2 = unit_vector(4, 2), e3 = unit_vector(4, 3);
  return State{0.5 * (k_atom(e1, e2).reduced() - k_atom(e2, e3).reduced()), 0.0};
}

State k_field(const Vec& y) {
  Vec u = Vec::Zero(4), b = Vec::Zero(4);
  u(0) = std::cos(3.0 * y(0));
  u(1) = std::sin(3.0 * y(0));
  b(2) = std::cos(2.0 * y(4) + y(1));
  b(3) = std::sin(2.0 * y(4) + y(1));
  return k_atom(u, b).state();
}

template <class F>
CheckResult timed(const std::string& id, F&& body) {
  const auto t0 = Clock::now();
  CheckResult r;
  r.id = id;
  try {
    body(r);
  } catch (const std::exception& e) {
    r.pass = false;
    r.summary = std::string("exception: ") + e.what();
  }
  r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  return r;
}

std::string fmt(double x, int digits = 3) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.*g", digits, x);
  return buf;
}

}  // namespace

CheckResult check_embedding(int n, std::uint64_t seed) {
  return timed("embedding", [&](CheckResult& r) {
    std::mt19937_64 rng(substream_seed(seed, "battery/embedding"));
    int exact = 0;
    double rel = 0.0, lin = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const State d = dyadic_state(n, rng);
      if (unpack_state(pack_state(d)) == d) ++exact;
      const State z = gaussian_state(n, rng);
      rel = std::max(rel, state_norm(unpack_state(pack_state(z)) - z) / state_norm(z));
      const State w = gaussian_state(n, rng);
      const double a = std::normal_distribution<double>(0.0, 1.0)(rng);
      const double b = std::normal_distribution<double>(0.0, 1.0)(rng);
      const PackedMat P = pack_state(a * z + b * w).entries() - a * pack_state(z).entries() - b * pack_state(w).entries();
      lin = std::max(lin, P.norm());
    }
    r.pass = exact == 1000 && rel <= 1e-15 && lin <= 1e-13;
    r.data = {{"n", n}, {"dyadic_exact", exact}, {"gaussian_max_rel_error", rel}, {"linearity_error", lin}};
    r.summary = std::to_string(exact) + "/1000 exact, round-trip rel " + fmt(rel) + ", linearity " + fmt(lin);
  });
}

CheckResult check_wave_solver(int n, int count, std::uint64_t seed) {
  return timed("wave_solver", [&](CheckResult& r) {
    std::mt19937_64 rng(substream_seed(seed, "battery/wave_solver"));
    double worst = 0.0;
    for (int k = 0; k < count; ++k) {
      const Vec u1 = unit(n, rng), b1 = unit(n, rng), u2 = unit(n, rng), b2 = unit(n, rng);
      const WaveDirection w = lambda_direction(u1, b1, u2, b2);
      const State z{k_atom(u1, b1).reduced() - k_atom(u2, b2).reduced(), 0.0};
      worst = std::max(worst, (pack_state(z).entries() * w.xi).norm() / w.xi.norm());
    }
    bool guard = false;
    try {
      const Vec a = Vec::Zero(3);
      lambda_direction(a, a, a, a);
    } catch (const UnsupportedDimension&) {
      guard = true;
    }
    r.pass = worst <= 1e-10 && guard;
    r.data = {{"n", n}, {"count", count}, {"max_residual", worst}, {"n3_rejected", guard}};
    r.summary = "max |W xi|/|xi| " + fmt(worst) + " over " + std::to_string(count) + ", n=3 " +
                (guard ? "rejected" : "accepted");
  });
}

CheckResult check_wave_dimension(const std::vector<int>& ns, int offset, std::uint64_t seed) {
  return timed("wave_dimension", [&](CheckResult& r) {
    std::mt19937_64 rng(substream_seed(seed, "battery/wave_dimension"));
    r.pass = true;
    r.data = nlohmann::json::array();
    std::string s;
    for (int n : ns) {
      const Vec xi = unit(n + 1, rng);
      const int got = wave_cone_nullity(n, xi);
      const int want = n * n - offset;
      r.pass = r.pass && got == want;
      r.data.push_back({{"n", n}, {"nullity", got}, {"expected", want}});
      s += (s.empty() ? "" : ", ") + std::string("n=") + std::to_string(n) + ": " + std::to_string(got) +
           " (expected " + std::to_string(want) + ")";
    }
    r.summary = "nullity " + s;
  });
}

CheckResult check_hull(int n, int atoms, int points, std::uint64_t seed) {
  return timed("hull", [&](CheckResult& r) {
    const AtomLibrary lib = build_atom_library(n, atoms, seed);
    const double m0 = hull_margin(ReducedState::zero(n), lib);
    std::mt19937_64 rng(substream_seed(seed, "battery/hull"));
    std::uniform_int_distribution<int> pick(0, lib.count() - 1);
    std::exponential_distribution<double> ex(1.0);
    double worst = 0.0;
    int most = 0;
    for (int k = 0; k < points; ++k) {
      std::vector<double> w(40);
      double s = 0.0;
      for (double& x : w) s += (x = ex(rng));
      ReducedState z = ReducedState::zero(n);
      for (double x : w) z += (x / s) * lib.atom(pick(rng)).reduced();
      const CaratheodoryDecomp d = decompose(z, lib);
      worst = std::max(worst, reduced_norm(d.reconstruct() - z));
      most = std::max(most, static_cast<int>(d.atoms.size()));
    }
    r.pass = m0 > 0.0 && worst <= 1e-9 && most <= state_dim(n);
    r.data = {{"atoms", atoms}, {"margin_at_zero", m0}, {"points", points}, {"max_reconstruction_error", worst},
              {"max_atoms_used", most}};
    r.summary = "margin(0) " + fmt(m0) + ", reconstruction " + fmt(worst) + ", atoms used <= " + std::to_string(most);
  });
}

CheckResult check_moments(int n, int atoms, int samples, std::uint64_t seed) {
  return timed("moments", [&](CheckResult& r) {
    const SphereMoments m = sphere_moments(n, samples, seed);
    const double dev = std::abs(m.gamma1.value - 1.0 / n);
    const AtomLibrary lib = build_atom_library(n, atoms, seed);
    const TImageRank tr = t_image_rank(lib);
    r.pass = dev <= 3.0 * m.gamma1.std_error && tr.rank >= reduced_dim(n);
    r.data = {{"gamma1", m.gamma1.value},  {"gamma1_std_error", m.gamma1.std_error},
              {"gamma2", m.gamma2.value},  {"gamma3", m.gamma3.value},
              {"samples", m.samples},      {"t_image_rank", tr.rank},
              {"t_images", tr.images},     {"rank_required", reduced_dim(n)}};
    r.summary = "gamma1 " + fmt(m.gamma1.value) + " +- " + fmt(m.gamma1.std_error) + ", T-image rank " +
                std::to_string(tr.rank);
  });
}

CheckResult check_block(std::uint64_t seed) {
  return timed("block", [&](CheckResult& r) {
    LambdaSegment seg;
    seg.base = State::zero(4);
    seg.direction = demo_amplitude();
    seg.certificate = WaveDirection{unit_vector(5, 0), 0.0};
    const EmbeddedMatrix W = pack_state(seg.direction);

    // Core slice against the exact plane wave.
    const BuildingBlock core = assemble_block(seg.direction, seg.certificate, 7, Vec::Zero(5), 1.0);
    std::mt19937_64 rng(substream_seed(seed, "battery/block"));
    std::uniform_real_distribution<double> U(0.0, 1.0);
    double slice = 0.0;
    for (int k = 0; k < 1000; ++k) {
      const Vec x = 0.5 * U(rng) * unit(5, rng);
      slice = std::max(slice, (core.piece_field(x) - std::sin(7.0 * x(0)) * W.entries()).norm());
    }

    // Support outside the anchor ball.
    Vec c = Vec::Zero(5);
    c(4) = 0.2;
    const BuildingBlock anchored = assemble_block(seg.direction, seg.certificate, 5, c, 0.6);
    double outside = 0.0;
    for (int k = 0; k < 10000; ++k) {
      const Vec y = c + 0.6 * (1.0 + U(rng)) * unit(5, rng);
      outside = std::max(outside, anchored.evaluate(y).norm());
    }

    BlockOptions opts;
    opts.sup_samples = 20000;
    opts.seed = seed;
    const double delta = 0.05 * state_norm(seg.direction);
    const BuildingBlock blk = build_block(seg, delta, 2.0, Vec::Zero(5), 1.0, opts);
    const double sup_indep = block_sup_distance(blk, 20000, substream_seed(seed, "battery/sup"));

    const DivergenceRefinement dr =
        divergence_refinement(core.with_frequency(2), 0.02, 4, 2000, substream_seed(seed, "battery/div"));
    bool ratios_ok = dr.ratios.size() == 3;
    for (double q : dr.ratios) ratios_ok = ratios_ok && q >= 3.0 && q <= 5.0;

    const BlockMetrics bm = block_metrics(core.with_frequency(32), 2.0, 200000, seed);
    const bool alpha_ok = bm.alpha_est >= std::ldexp(1.0, -7);

    r.pass = slice <= 1e-12 && outside == 0.0 && blk.sup_distance() < delta && ratios_ok && alpha_ok;
    r.data = {{"core_slice_error", slice},
              {"outside_max", outside},
              {"frequency", blk.frequency()},
              {"delta", delta},
              {"sup_distance", blk.sup_distance()},
              {"sup_distance_independent", sup_indep},
              {"cover_fraction", blk.covered_fraction()},
              {"div_steps", dr.steps},
              {"div_l2", dr.l2},
              {"div_ratios", dr.ratios},
              {"alpha_est", bm.alpha_est},
              {"mass_ratio", bm.mass_ratio},
              {"alpha_asymptote", std::ldexp(1.0, -6)}};
    std::string rs;
    for (double q : dr.ratios) rs += (rs.empty() ? "" : "/") + fmt(q);
    r.summary = "slice " + fmt(slice) + ", outside " + fmt(outside) + ", sup " + fmt(blk.sup_distance()) + " < " +
                fmt(delta) + " (N=" + std::to_string(blk.frequency()) + "), div ratios " + rs + ", alpha " +
                fmt(bm.alpha_est);
  });
}

CheckResult check_fields(std::uint64_t seed) {
  return timed("fields", [&](CheckResult& r) {
    const Domain box{DomainKind::Box, Vec::Zero(5), 0.5};
    const GridSpec g = make_grid(box, 10);
    const FieldGrid ones = sample_function(g, box, [](const Vec&) {
      State z = State::zero(4);
      z.reduced.u = unit_vector(4, 0);
      return z;
    });
    const Quadrature q = lm_integral(ones, 2.0, Component::U);
    const bool quad_ok = std::abs(q.value - 1.0) <= 1e-12 + q.error;

    std::mt19937_64 rng(substream_seed(seed, "battery/fields"));
    const State z = gaussian_state(4, rng);
    const Domain ball = unit_ball(4);
    const GridSpec gb = make_grid(ball, 12);
    const FieldGrid cst = sample_function(gb, ball, [&](const Vec&) { return z; });
    const double rr = 2.0 * gb.h;
    const FieldGrid mc = mollify(cst, rr);
    double moll = 0.0;
    for (std::size_t s = 0; s < mc.size(); ++s)
      if (mc.position(s).norm() < 1.0 - rr - 1e-9) moll = std::max(moll, state_norm(mc.state(s) - z));

    const State w = demo_amplitude();
    const FieldGrid wave = sample_function(g, box, [&](const Vec& y) { return std::sin(7.0 * y(0)) * w; });
    const double plane = div_residual(wave, true).max;

    const std::string path =
        (std::filesystem::temp_directory_path() / ("mhdci_battery_" + std::to_string(seed) + ".mhdf")).string();
    write_field(path, wave);
    const MhdfData d = read_mhdf(path);
    std::filesystem::remove(path);
    bool dump_ok = d.n == 4 && d.points_per_axis == 10 && d.components == 24 && d.values.size() == g.count() * 24;
    for (std::size_t s = 0; dump_ok && s < wave.size(); ++s)
      for (std::size_t k = 0; k < 24; ++k)
        dump_ok = dump_ok && d.values[static_cast<std::size_t>(wave.lattice_point(s)) * 24 + k] == wave.values(s)[k];

    r.pass = quad_ok && moll <= 1e-12 * (1.0 + state_norm(z)) && plane <= 1e-10 && dump_ok;
    r.data = {{"constant_integral", q.value}, {"quadrature_error", q.error}, {"mollified_constant_error", moll},
              {"plane_wave_divergence", plane}, {"dump_round_trip", dump_ok}};
    r.summary = "integral " + fmt(q.value) + ", mollified constant " + fmt(moll) + ", plane-wave divergence " +
                fmt(plane) + ", dump " + (dump_ok ? "ok" : "mismatch");
  });
}

CheckResult check_step(int points_per_axis, std::uint64_t seed) {
  return timed("step", [&](CheckResult& r) {
    const Domain omega = unit_ball(4);
    const AtomLibrary lib = build_atom_library(4, 200, seed);
    StepParams p;
    p.grid = make_grid(omega, points_per_axis);
    p.seed = substream_seed(seed, "battery/step");
    const StepResult res = perturb_step(RelaxedSolution::zero(omega), 2.0, lib, p);
    const StepReport& s = res.report;
    r.pass = s.energy_after > s.energy_before && s.min_margin > 0.0 && s.lp_failures == 0 && s.lp_checked > 0 &&
             s.beta_measured > 0.0 && s.ae03_all_hold && !s.saturated;
    r.data = to_json(s);
    r.data.erase("balls");
    r.summary = "energy " + fmt(s.energy_before) + " -> " + fmt(s.energy_after) + ", beta " + fmt(s.beta_measured) +
                ", min certified margin " + fmt(s.min_margin) + ", LP " + std::to_string(s.lp_checked - s.lp_failures) +
                "/" + std::to_string(s.lp_checked) + ", segment bound " + (s.ae03_all_hold ? "holds" : "fails") + ", " +
                std::to_string(s.balls_used) + " balls";
  });
}

CheckResult check_scheme(int J, int points_per_axis, std::uint64_t seed) {
  return timed("scheme", [&](CheckResult& r) {
    IterationConfig c;
    c.J = J;
    c.points_per_axis = points_per_axis;
    c.seed = seed;
    const RunReport rep = run_scheme(c);
    const std::string first = to_json(rep).dump();
    const std::string second = to_json(run_scheme(c)).dump();
    bool caps = true, finite = true, sat = true;
    for (std::size_t j = 0; j < rep.iterations.size(); ++j) {
      const IterationRecord& it = rep.iterations[j];
      caps = caps && it.caps_hold && it.moll_self < it.cap;
      for (double d : it.moll_cross) caps = caps && d < it.cap;
      finite = finite && std::isfinite(it.defect.F_norm) && std::isfinite(it.defect.G_norm);
      if (j > 0)
        for (std::size_t k = 0; k < it.saturation.frac_above.size(); ++k)
          sat = sat && it.saturation.frac_above[k] >= rep.iterations[j - 1].saturation.frac_above[k];
    }
    const bool same = first == second;
    r.pass = rep.gap_decreasing && caps && sat && finite && same;
    nlohmann::json j = to_json(rep);
    for (auto& it : j["iterations"]) it["step"].erase("balls");
    r.data = {{"report", j}, {"byte_identical", same}, {"report_bytes", first.size()}};
    std::string gaps;
    for (const auto& v : j["gap_sequence"]) gaps += (gaps.empty() ? "" : " > ") + fmt(v.get<double>(), 8);
    r.summary = "gaps " + gaps + (rep.gap_decreasing ? " (strict)" : " (NOT strict)") + ", caps " +
                (caps ? "hold" : "fail") + ", saturation " + (sat ? "nondecreasing" : "decreasing") + ", defects " +
                (finite ? "finite" : "non-finite") + ", rerun " + (same ? "identical" : "differs");
  });
}

CheckResult check_defect_null(std::uint64_t seed) {
  return timed("defect_null", [&](CheckResult& r) {
    (void)seed;
    const Domain omega = unit_ball(4);
    const GridSpec g = make_grid(omega, 12);
    const DefectReport d = compat_defect(sample_function(g, omega, k_field), 2.0);
    const DefectReport z = compat_defect(FieldGrid(g, omega), 2.0);
    r.pass = d.F_norm <= 1e-14 && d.G_norm <= 1e-14 && d.f_max <= 1e-12 && d.g_max <= 1e-12 && z.F_norm == 0.0 &&
             z.G_norm == 0.0;
    r.data = {{"F_norm", d.F_norm}, {"G_norm", d.G_norm}, {"div_F_max", d.f_max}, {"div_G_max", d.g_max}};
    r.summary = "|F| " + fmt(d.F_norm) + ", |G| " + fmt(d.G_norm) + ", div " + fmt(std::max(d.f_max, d.g_max));
  });
}

nlohmann::json to_json(const CheckResult& r) {
  return {{"id", r.id}, {"pass", r.pass}, {"summary", r.summary}, {"data", r.data}};
}

}  // namespace mhdci
