#include "mhdci/scheme.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "mhdci/errors.hpp"
#include "mhdci/parallel.hpp"
#include "mhdci/sampling.hpp"
#include "mhdci/wavecone.hpp"

namespace mhdci {

namespace {

// Largest distance a ball centre may sit from the domain centre along each
// axis (box) or in norm (ball).
bool ball_fits(const Domain& omega, const Vec& c, double r) {
  const double room = omega.size - r;
  if (room < 0.0) return false;
  if (omega.kind == DomainKind::Ball) return (c - omega.center).norm() <= room;
  return ((c - omega.center).array().abs() <= room).all();
}

// Odometer over the integer box [lo, hi] (inclusive) in d dimensions.
template <class F>
void for_box(int d, const LatticeIndex& lo, const LatticeIndex& hi, F&& f) {
  for (int a = 0; a < d; ++a)
    if (lo[static_cast<std::size_t>(a)] > hi[static_cast<std::size_t>(a)]) return;
  LatticeIndex i = lo;
  for (;;) {
    f(i);
    int a = d - 1;
    while (a >= 0 && ++i[static_cast<std::size_t>(a)] > hi[static_cast<std::size_t>(a)]) {
      i[static_cast<std::size_t>(a)] = lo[static_cast<std::size_t>(a)];
      --a;
    }
    if (a < 0) return;
  }
}

}  // namespace

VitaliCover vitali_cover(const Domain& omega, double kappa, double sigma_budget, std::uint64_t seed,
                         int max_balls) {
  if (!(omega.size > 0.0)) throw InvalidArgument("vitali_cover: empty domain");
  if (!(kappa > 0.0)) throw InvalidArgument("vitali_cover: kappa must be positive");
  if (!(sigma_budget > 0.0 && sigma_budget < 1.0)) throw InvalidArgument("vitali_cover: budget must lie in (0, 1)");
  const int d = omega.dim();
  const double volume = omega.exact_volume();
  const double unit = Domain{DomainKind::Ball, Vec::Zero(d), 1.0}.exact_volume();
  std::mt19937_64 rng(substream_seed(seed, "scheme/vitali"));
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  VitaliCover out;
  double covered = 0.0;
  // Radii strictly below kappa; the first one fills the domain if kappa allows.
  double r = std::min(kappa * (1.0 - 1e-9), omega.size);
  constexpr double kShrink = 0.8;
  while (covered / volume <= 1.0 - sigma_budget) {
    if (static_cast<int>(out.balls.size()) >= max_balls) break;
    const double room = omega.size - r;
    Vec off(d);
    for (int a = 0; a < d; ++a) off(a) = uni(rng);
    // Candidate centres c = center - room + (i + off) a, a = r / 2, i in [0, G).
    const double a_step = 0.5 * r;
    const int G = static_cast<int>(std::floor(2.0 * room / a_step)) + 2;
    const double total = std::pow(static_cast<double>(G), d);
    if (total > 2e8) break;
    std::vector<std::uint8_t> blocked(static_cast<std::size_t>(total), 0);
    auto lin = [&](const LatticeIndex& i) {
      std::size_t k = 0;
      for (int a = 0; a < d; ++a) k = k * static_cast<std::size_t>(G) + static_cast<std::size_t>(i[static_cast<std::size_t>(a)]);
      return k;
    };
    auto pos = [&](const LatticeIndex& i) {
      Vec c(d);
      for (int a = 0; a < d; ++a) c(a) = omega.center(a) - room + (i[static_cast<std::size_t>(a)] + off(a)) * a_step;
      return c;
    };
    auto block = [&](const Ball& b) {
      const double reach = b.radius + r;
      LatticeIndex lo{}, hi{};
      for (int a = 0; a < d; ++a) {
        const double base = omega.center(a) - room + off(a) * a_step;
        lo[static_cast<std::size_t>(a)] = std::max(0, static_cast<int>(std::floor((b.center(a) - reach - base) / a_step)));
        hi[static_cast<std::size_t>(a)] = std::min(G - 1, static_cast<int>(std::ceil((b.center(a) + reach - base) / a_step)));
      }
      for_box(d, lo, hi, [&](const LatticeIndex& i) {
        if ((pos(i) - b.center).norm() < reach) blocked[lin(i)] = 1;
      });
    };
    // The domain centre goes first when it is free.
    if (std::all_of(out.balls.begin(), out.balls.end(), [&](const Ball& b) { return (b.center - omega.center).norm() >= b.radius + r; }) &&
        static_cast<int>(out.balls.size()) < max_balls) {
      out.balls.push_back({omega.center, r});
      covered += unit * std::pow(r, d);
    }
    for (const Ball& b : out.balls) block(b);
    LatticeIndex lo{}, hi{};
    for (int a = 0; a < d; ++a) hi[static_cast<std::size_t>(a)] = G - 1;
    bool done = covered / volume > 1.0 - sigma_budget;
    for_box(d, lo, hi, [&](const LatticeIndex& i) {
      if (done || blocked[lin(i)]) return;
      const Vec c = pos(i);
      if (!ball_fits(omega, c, r)) return;
      if (static_cast<int>(out.balls.size()) >= max_balls) {
        done = true;
        return;
      }
      out.balls.push_back({c, r});
      covered += unit * std::pow(r, d);
      block(out.balls.back());
      if (covered / volume > 1.0 - sigma_budget) done = true;
    });
    if (static_cast<int>(out.balls.size()) >= max_balls && covered / volume <= 1.0 - sigma_budget) break;
    r *= kShrink;
  }
  out.covered_fraction = covered / volume;
  if (out.covered_fraction <= 1.0 - sigma_budget)
    throw CoveringError("vitali_cover: uncovered budget not reached with " + std::to_string(out.balls.size()) + " balls",
                        out.covered_fraction);
  return out;
}

RelaxedSolution RelaxedSolution::zero(const Domain& omega) {
  RelaxedSolution z;
  z.omega = omega;
  return z;
}

RelaxedSolution RelaxedSolution::synthetic(const Domain& omega, std::function<State(const Vec&)> f) {
  RelaxedSolution z;
  z.omega = omega;
  z.base = std::move(f);
  return z;
}

State RelaxedSolution::evaluate(const Vec& y) const {
  State z = base ? base(y) : State::zero(dim());
  for (const BuildingBlock& b : blocks)
    if ((y - b.anchor_center()).norm() < b.anchor_radius()) z += unpack_state(EmbeddedMatrix(b.evaluate(y)), 1e-8);
  return z;
}

FieldGrid RelaxedSolution::sample(const GridSpec& spec) const {
  FieldGrid g = base ? sample_function(spec, omega, base) : FieldGrid(spec, omega);
  for (std::size_t k = 0; k < blocks.size(); ++k) add_block(g, blocks[k], static_cast<int>(k));
  return g;
}

void RelaxedSolution::ensure_grid(const GridSpec& spec, const AtomLibrary& lib) {
  const GridSpec& s = field.spec();
  const bool same = field.size() > 0 && s.n == spec.n && s.points_per_axis == spec.points_per_axis &&
                    s.h == spec.h && s.lo == spec.lo;
  if (same && margin.size() == field.size()) return;
  field = sample(spec);
  // The empty sum is 0 everywhere; otherwise 0 is the only bound known
  // without solving an LP per lattice point.
  const double m0 = (blocks.empty() && !base) ? hull_margin(ReducedState::zero(dim()), lib) : 0.0;
  margin.assign(field.size(), m0);
}

namespace {

// Field slots strictly inside the ball, in lattice order.
std::vector<std::size_t> ball_slots(const FieldGrid& g, const Vec& c, double r) {
  const GridSpec& spec = g.spec();
  const int d = spec.dim();
  LatticeIndex lo{}, hi{};
  for (int a = 0; a < d; ++a) {
    lo[static_cast<std::size_t>(a)] = std::max(0, static_cast<int>(std::floor((c(a) - r - spec.lo(a)) / spec.h - 0.5)));
    hi[static_cast<std::size_t>(a)] =
        std::min(spec.points_per_axis - 1, static_cast<int>(std::ceil((c(a) + r - spec.lo(a)) / spec.h - 0.5)));
  }
  std::vector<std::size_t> out;
  for_box(d, lo, hi, [&](const LatticeIndex& i) {
    const int s = g.slot(spec.linear(i));
    if (s >= 0 && (spec.point(i) - c).norm() < r) out.push_back(static_cast<std::size_t>(s));
  });
  return out;
}

double l1(const double* v, int len) {
  double a = 0.0;
  for (int k = 0; k < len; ++k) a += std::abs(v[k]);
  return a;
}

std::string step_name(const std::string& what, std::size_t k) { return "scheme/" + what + "/" + std::to_string(k); }

}  // namespace

StepPlan plan_step(RelaxedSolution& z, double m, const AtomLibrary& lib, const StepParams& p) {
  if (!(m >= 2.0)) throw InvalidArgument("perturb_step: exponent must be >= 2");
  if (lib.dim() != z.dim()) throw InvalidArgument("perturb_step: library dimension differs from the solution");
  z.ensure_grid(p.grid, lib);
  StepPlan plan;
  plan.omega_volume = domain_volume(z.omega);
  const double energy = lm_integral(z.field, m, Component::All).value;
  plan.eps = std::max(0.0, 2.0 * plan.omega_volume - energy) / (8.0 * plan.omega_volume);
  plan.cover = vitali_cover(z.omega, p.kappa, p.sigma_budget, p.seed);

  const std::size_t count = plan.cover.balls.size();
  plan.balls.resize(count);
  plan.segments.resize(count);
  plan.blocks.resize(count);
  for (std::size_t k = 0; k < count; ++k) {
    const Ball& ball = plan.cover.balls[k];
    BallReport& br = plan.balls[k];
    br.center = ball.center;
    br.radius = ball.radius;
    const State zc = z.evaluate(ball.center);
    try {
      if (std::abs(zc.q) >= 1.0) throw OutsideHull("perturb_step: |q| >= 1 at a ball centre", std::abs(zc.q));
      const CaratheodoryDecomp dec = decompose(zc.reduced, lib);
      const LambdaSegment seg = segment_from_decomposition(zc, dec, lib);
      br.margin_center = seg.margin_base;
      br.ae03 = verify_ae03(zc, seg, plan.eps, m);
      BlockOptions opts;
      opts.max_pieces = p.max_pieces;
      opts.min_fraction = p.min_cover_fraction;
      opts.sup_samples = p.sup_samples;
      opts.seed = substream_seed(p.seed, step_name("block", k));
      const double zbar = state_norm(seg.half_length * seg.direction);
      BuildingBlock blk = build_block(seg, p.delta * zbar, m, ball.center, ball.radius, opts);
      br.frequency = blk.frequency();
      br.cover_fraction = blk.covered_fraction();
      br.sup_distance = blk.sup_distance();
      br.status = "planned";
      plan.segments[k] = seg;
      plan.blocks[k] = std::move(blk);
    } catch (const AtConstraintSet&) {
      br.status = "at-constraint-set";
    } catch (const OutsideHull&) {
      br.status = "outside-hull";
    } catch (const GeometryError&) {
      br.status = "geometry";
    } catch (const CoveringError& e) {
      br.status = "covering";
      br.cover_fraction = e.achieved_fraction();
    }
  }
  return plan;
}

StepResult certify_step(const RelaxedSolution& z, const StepPlan& plan, double m, const AtomLibrary& lib,
                        const StepParams& p, int multiplier) {
  if (multiplier < 1) throw InvalidArgument("certify_step: multiplier must be >= 1");
  if (z.field.size() == 0 || z.margin.size() != z.field.size())
    throw InvalidArgument("certify_step: solution has no sampled field");
  const int n = z.dim();
  const int rd = reduced_dim(n);
  const int sd = state_dim(n);
  const double vol = plan.omega_volume;

  StepResult res;
  res.solution = z;
  RelaxedSolution& out = res.solution;
  StepReport& rep = res.report;
  rep.m = m;
  rep.omega_volume = vol;
  rep.frequency_multiplier = multiplier;
  rep.vitali_fraction = plan.cover.covered_fraction;
  const Quadrature before = lm_integral(z.field, m, Component::All);
  rep.energy_before = before.value;
  rep.gap_before = 2.0 * vol - before.value;
  rep.balls = plan.balls;

  std::vector<double> w(static_cast<std::size_t>(sd));
  for (std::size_t k = 0; k < plan.blocks.size(); ++k) {
    BallReport& br = rep.balls[k];
    if (!plan.blocks[k]) {
      ++rep.balls_skipped;
      continue;
    }
    const LambdaSegment& seg = *plan.segments[k];
    const BuildingBlock blk = plan.blocks[k]->with_frequency(plan.blocks[k]->frequency() * multiplier);
    br.frequency = blk.frequency();
    const std::vector<std::size_t> slots = ball_slots(out.field, br.center, br.radius);
    br.lattice_points = static_cast<int>(slots.size());

    const std::vector<double> zc = to_vector(seg.base);
    const std::vector<double> zb = to_vector(blk.amplitude());
    double zb2 = 0.0;
    for (int q = 0; q < rd; ++q) zb2 += zb[static_cast<std::size_t>(q)] * zb[static_cast<std::size_t>(q)];
    const double rho_c = seg.margin_base;
    const double rho_e = std::min(seg.margin_plus, seg.margin_minus);

    // Block values at the ball's lattice points.
    std::vector<double> W(slots.size() * static_cast<std::size_t>(sd));
    std::vector<double> T(slots.size());
    parallel_tiles(slots.size(), 64, [&](std::size_t b, std::size_t e) {
      for (std::size_t i = b; i < e; ++i) {
        std::span<double> wi(W.data() + i * static_cast<std::size_t>(sd), static_cast<std::size_t>(sd));
        to_vector(unpack_state(EmbeddedMatrix(blk.evaluate(out.field.position(slots[i]))), 1e-8), wi);
        double dot = 0.0;
        for (int q = 0; q < rd; ++q) dot += wi[static_cast<std::size_t>(q)] * zb[static_cast<std::size_t>(q)];
        T[i] = zb2 > 0.0 ? std::clamp(dot / zb2, -1.0, 1.0) : 0.0;
      }
    });

    // Lower bound on the l1 inscribed radius at z_old + s w: either the old
    // bound minus |s w|_1, or the concave interpolation along the scaled
    // segment minus the distance to it.
    std::vector<double> cert(slots.size());
    auto certify = [&](double s) {
      double worst = std::numeric_limits<double>::infinity();
      const double rho_seg = std::min(rho_c, (1.0 - s) * rho_c + s * rho_e);
      std::vector<double> dev(static_cast<std::size_t>(rd));
      for (std::size_t i = 0; i < slots.size(); ++i) {
        const double* wi = W.data() + i * static_cast<std::size_t>(sd);
        const double* zi = out.field.values(slots[i]);
        const double a = out.margin[slots[i]] - s * l1(wi, rd);
        for (int q = 0; q < rd; ++q) {
          const auto uq = static_cast<std::size_t>(q);
          dev[uq] = zi[q] - zc[uq] + s * (wi[q] - T[i] * zb[uq]);
        }
        const double b = rho_seg - l1(dev.data(), rd);
        cert[i] = std::max(a, b);
        if (std::abs(zi[rd] + s * wi[rd]) >= 1.0) cert[i] = -1.0;
        worst = std::min(worst, cert[i]);
      }
      return worst;
    };
    double scale = 0.0, worst = 0.0;
    for (int j = 0; j <= 20; ++j) {
      const double s = std::ldexp(1.0, -j);
      worst = certify(s);
      if (worst > kMarginFloor) {
        scale = s;
        break;
      }
    }
    if (scale == 0.0) {
      br.status = "no-amplitude";
      ++rep.balls_skipped;
      continue;
    }
    br.status = "used";
    br.scale = scale;
    br.min_cert = slots.empty() ? rho_c : worst;
    ++rep.balls_used;
    rep.ae03_all_hold = rep.ae03_all_hold && br.ae03.holds;
    for (std::size_t i = 0; i < slots.size(); ++i) {
      double* zi = out.field.values(slots[i]);
      const double* wi = W.data() + i * static_cast<std::size_t>(sd);
      for (int q = 0; q < sd; ++q) zi[q] += scale * wi[q];
      out.margin[slots[i]] = cert[i];
    }
    out.field.provenance().push_back(static_cast<int>(out.blocks.size()));
    out.blocks.push_back(blk.scaled(scale));
  }

  if (rep.balls_used == 0) {
    // Nothing could be inserted: the step is the identity.
    res.solution = z;
    rep.saturated = true;
    rep.energy_after = rep.energy_before;
    rep.gap_after = rep.gap_before;
    rep.beta_measured = 0.0;
  } else {
    out.generation = z.generation + 1;
    const Quadrature after = lm_integral(out.field, m, Component::All);
    rep.energy_after = after.value;
    rep.quadrature_error = std::max(before.error, after.error);
    rep.gap_after = 2.0 * vol - after.value;
    rep.beta_measured = rep.gap_before > 0.0 ? (rep.energy_after - rep.energy_before) / std::pow(rep.gap_before, m) : 0.0;
  }
  rep.generation = res.solution.generation;

  const std::vector<double>& mg = res.solution.margin;
  rep.min_margin = mg.empty() ? 0.0 : *std::min_element(mg.begin(), mg.end());
  // Independent LP feasibility at the lowest certified margins and a stride.
  std::vector<std::size_t> order(mg.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const std::size_t half = std::min(order.size(), static_cast<std::size_t>(std::max(0, p.lp_checks / 2)));
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half), order.end(),
                    [&](std::size_t a, std::size_t b) { return mg[a] < mg[b] || (mg[a] == mg[b] && a < b); });
  std::vector<std::size_t> picks(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(half));
  const std::size_t rest = static_cast<std::size_t>(std::max(0, p.lp_checks)) - half;
  if (rest > 0 && !mg.empty()) {
    const std::size_t stride = std::max<std::size_t>(1, mg.size() / rest);
    for (std::size_t i = stride / 2; i < mg.size() && picks.size() < half + rest; i += stride) picks.push_back(i);
  }
  for (std::size_t s : picks) {
    const State zs = res.solution.field.state(s);
    ++rep.lp_checked;
    if (!(std::abs(zs.q) < 1.0 && in_hull(zs.reduced, lib))) ++rep.lp_failures;
  }
  return res;
}

StepResult perturb_step(const RelaxedSolution& z, double m, const AtomLibrary& lib, const StepParams& p) {
  RelaxedSolution work = z;
  const StepPlan plan = plan_step(work, m, lib, p);
  return certify_step(work, plan, m, lib, p, 1);
}

DefectReport compat_defect(const FieldGrid& g, double m) {
  const GridSpec& spec = g.spec();
  const int n = spec.n;
  const auto nn = static_cast<std::size_t>(n * n);
  const std::size_t count = g.size();
  std::vector<double> F(count * nn), G(count * nn);
  for (std::size_t s = 0; s < count; ++s) {
    const ReducedState z = g.state(s).reduced;
    const double tr = (z.u.squaredNorm() - z.b.squaredNorm()) / n;
    Mat f = z.u * z.u.transpose() - z.b * z.b.transpose() - z.M;
    f.diagonal().array() -= tr;
    const Mat q = z.b * z.u.transpose() - z.u * z.b.transpose() - z.Q;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        F[s * nn + static_cast<std::size_t>(i * n + j)] = f(i, j);
        G[s * nn + static_cast<std::size_t>(i * n + j)] = q(i, j);
      }
  }
  DefectReport r;
  const double cell = spec.cell_volume();
  auto norm = [&](const std::vector<double>& A) {
    double acc = 0.0;
    for (std::size_t s = 0; s < count; ++s) {
      double f2 = 0.0;
      for (std::size_t k = 0; k < nn; ++k) f2 += A[s * nn + k] * A[s * nn + k];
      acc += std::pow(std::sqrt(f2), m);
    }
    return std::pow(acc * cell, 1.0 / m);
  };
  r.F_norm = norm(F);
  r.G_norm = norm(G);

  // Row-wise spatial divergence, zero outside the domain.
  auto divergence = [&](const std::vector<double>& A, std::vector<double>& out, double& mx, double& l2) {
    out.assign(count * static_cast<std::size_t>(n), 0.0);
    double sq = 0.0;
    mx = 0.0;
    for (std::size_t s = 0; s < count; ++s) {
      const LatticeIndex idx = spec.unravel(g.lattice_point(s));
      double norm2 = 0.0;
      for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int j = 0; j < n; ++j) {
          double v[2] = {0.0, 0.0};
          for (int side = 0; side < 2; ++side) {
            LatticeIndex nb = idx;
            nb[static_cast<std::size_t>(j)] += side == 0 ? 1 : -1;
            const int c = nb[static_cast<std::size_t>(j)];
            if (c < 0 || c >= spec.points_per_axis) continue;
            const int t = g.slot(spec.linear(nb));
            if (t >= 0) v[side] = A[static_cast<std::size_t>(t) * nn + static_cast<std::size_t>(i * n + j)];
          }
          acc += (v[0] - v[1]) / (2.0 * spec.h);
        }
        out[s * static_cast<std::size_t>(n) + static_cast<std::size_t>(i)] = acc;
        norm2 += acc * acc;
      }
      mx = std::max(mx, std::sqrt(norm2));
      sq += norm2;
    }
    l2 = std::sqrt(sq * cell);
  };
  divergence(F, r.f, r.f_max, r.f_l2);
  divergence(G, r.g, r.g_max, r.g_l2);
  return r;
}

SaturationStats saturation_stats(const FieldGrid& g) {
  SaturationStats st;
  st.frac_above.assign(st.eps.size(), 0.0);
  const std::size_t count = g.size();
  if (count == 0) return st;
  const int n = g.spec().n;
  std::vector<std::size_t> above(st.eps.size(), 0);
  double su = 0.0, sb = 0.0;
  for (std::size_t s = 0; s < count; ++s) {
    const double* v = g.values(s);
    double u2 = 0.0, b2 = 0.0;
    for (int i = 0; i < n; ++i) {
      u2 += v[i] * v[i];
      b2 += v[n + i] * v[n + i];
    }
    const double nu = std::sqrt(u2), nb = std::sqrt(b2);
    su += nu;
    sb += nb;
    for (std::size_t k = 0; k < st.eps.size(); ++k)
      if (std::max(nu, nb) >= 1.0 - st.eps[k]) ++above[k];
  }
  st.mean_u_norm = su / static_cast<double>(count);
  st.mean_b_norm = sb / static_cast<double>(count);
  for (std::size_t k = 0; k < st.eps.size(); ++k)
    st.frac_above[k] = static_cast<double>(above[k]) / static_cast<double>(count);
  return st;
}

Domain default_omega(int n, int J, int points_per_axis) {
  require_dimension(n);
  const double R = std::min(1.0, 0.95 * (points_per_axis - 2) / std::ldexp(1.0, J + 2));
  return Domain{DomainKind::Ball, Vec::Zero(n + 1), R};
}

std::vector<double> default_r_schedule(int J, double h) {
  std::vector<double> r;
  for (int j = 1; j <= J; ++j) r.push_back(std::min(0.99 * std::ldexp(1.0, -j), 2.0 * h * (1.0 + 0.5 * (J - j))));
  return r;
}

namespace {

double lm_root(const FieldGrid& g, double m) { return std::pow(lm_integral(g, m, Component::State).value, 1.0 / m); }

}  // namespace

RunReport run_scheme(const IterationConfig& cfg, RelaxedSolution* final_state,
                     const std::function<void(int, const RelaxedSolution&)>& on_iteration) {
  require_dimension(cfg.n);
  if (cfg.J < 1) throw ConfigError("run_scheme: J must be >= 1");
  if (!(cfg.m >= 2.0)) throw ConfigError("run_scheme: m must be >= 2");
  if (cfg.max_retries < 0) throw ConfigError("run_scheme: max_retries must be >= 0");
  const Domain omega = cfg.omega ? *cfg.omega : default_omega(cfg.n, cfg.J, cfg.points_per_axis);
  if (omega.dim() != cfg.n + 1) throw ConfigError("run_scheme: domain dimension differs from n + 1");
  const GridSpec grid = make_grid(omega, cfg.points_per_axis);
  const std::vector<double> r = cfg.r_schedule.empty() ? default_r_schedule(cfg.J, grid.h) : cfg.r_schedule;
  if (static_cast<int>(r.size()) != cfg.J) throw ConfigError("run_scheme: r_schedule needs J entries");
  for (int j = 1; j <= cfg.J; ++j) {
    const double rj = r[static_cast<std::size_t>(j - 1)];
    if (rj < 2.0 * grid.h)
      throw ConfigError("run_scheme: r_" + std::to_string(j) + " = " + std::to_string(rj) + " is below 2h = " +
                        std::to_string(2.0 * grid.h) + "; refine the grid or shrink the domain");
    if (!(rj < std::ldexp(1.0, -j)))
      throw ConfigError("run_scheme: r_" + std::to_string(j) + " must be below 2^-" + std::to_string(j));
  }

  const AtomLibrary lib = build_atom_library(cfg.n, cfg.atoms, cfg.seed);
  RunReport rep;
  rep.config = cfg;
  rep.config.omega = omega;
  rep.config.r_schedule = r;
  rep.h = grid.h;

  RelaxedSolution z = RelaxedSolution::zero(omega);
  z.ensure_grid(grid, lib);
  rep.lattice_points = z.field.size();

  for (int j = 1; j <= cfg.J; ++j) {
    StepParams p;
    p.grid = grid;
    p.kappa = cfg.kappa;
    p.sigma_budget = cfg.sigma_budget;
    p.delta = cfg.delta;
    p.seed = substream_seed(cfg.seed, step_name("step", static_cast<std::size_t>(j)));
    const StepPlan plan = plan_step(z, cfg.m, lib, p);
    rep.omega_volume = plan.omega_volume;

    IterationRecord rec;
    rec.r = r[static_cast<std::size_t>(j - 1)];
    rec.cap = std::ldexp(1.0, -j);
    std::optional<StepResult> accepted;
    std::string last;
    for (int k = 0; k <= cfg.max_retries; ++k) {
      StepResult res = certify_step(z, plan, cfg.m, lib, p, 1 << k);
      const FieldGrid& zj = res.solution.field;
      rec.moll_self = lm_root(zj - mollify(zj, rec.r), cfg.m);
      const FieldGrid incr = zj - z.field;
      rec.moll_cross.clear();
      for (int i = 1; i < j; ++i) rec.moll_cross.push_back(lm_root(mollify(incr, r[static_cast<std::size_t>(i - 1)]), cfg.m));
      rec.retries = k;
      rec.caps_hold = rec.moll_self < rec.cap &&
                      std::all_of(rec.moll_cross.begin(), rec.moll_cross.end(), [&](double d) { return d < rec.cap; });
      if (rec.caps_hold) {
        accepted = std::move(res);
        break;
      }
      last = "self " + std::to_string(rec.moll_self);
      for (double d : rec.moll_cross) last += ", cross " + std::to_string(d);
    }
    if (!accepted)
      throw SchemeError("run_scheme: mollification caps fail at j = " + std::to_string(j) + " after " +
                        std::to_string(cfg.max_retries) + " frequency doublings (cap " + std::to_string(rec.cap) +
                        "; " + last + ")");
    rec.step = accepted->report;
    rec.step.moll_distances = rec.moll_cross;
    z = std::move(accepted->solution);

    const DivResidual dv = div_residual(z.field);
    rec.div_max = dv.max;
    rec.div_l2 = dv.l2;
    rec.defect = compat_defect(z.field, cfg.m);
    rec.defect.f.clear();
    rec.defect.g.clear();
    rec.saturation = saturation_stats(z.field);
    rec.mean_gap_density = rec.step.gap_after / rep.omega_volume;
    rep.iterations.push_back(std::move(rec));
    if (on_iteration) on_iteration(j, z);
  }

  rep.beta_min = std::numeric_limits<double>::infinity();
  for (const IterationRecord& it : rep.iterations)
    if (it.step.beta_measured > 0.0) rep.beta_min = std::min(rep.beta_min, it.step.beta_measured);
  if (!std::isfinite(rep.beta_min)) rep.beta_min = 0.0;
  rep.recursion_holds = true;
  rep.gap_decreasing = true;
  for (const IterationRecord& it : rep.iterations) {
    const StepReport& s = it.step;
    if (s.energy_after < s.energy_before + rep.beta_min * std::pow(std::max(0.0, s.gap_before), cfg.m))
      rep.recursion_holds = false;
    if (!(s.gap_after < s.gap_before)) rep.gap_decreasing = false;
  }
  if (final_state) *final_state = std::move(z);
  return rep;
}

namespace {

nlohmann::json vec_json(const Vec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

}  // namespace

nlohmann::json to_json(const StepReport& r) {
  nlohmann::json balls = nlohmann::json::array();
  for (const BallReport& b : r.balls)
    balls.push_back({{"center", vec_json(b.center)},
                     {"radius", b.radius},
                     {"status", b.status},
                     {"frequency", b.frequency},
                     {"scale", b.scale},
                     {"cover_fraction", b.cover_fraction},
                     {"sup_distance", b.sup_distance},
                     {"margin_center", b.margin_center},
                     {"min_certified_margin", b.min_cert},
                     {"lattice_points", b.lattice_points},
                     {"ae03", {{"lhs", b.ae03.lhs}, {"rhs", b.ae03.rhs}, {"holds", b.ae03.holds}, {"c0", b.ae03.c0}}}});
  return {{"generation", r.generation},
          {"m", r.m},
          {"omega_volume", r.omega_volume},
          {"energy_before", r.energy_before},
          {"energy_after", r.energy_after},
          {"quadrature_error", r.quadrature_error},
          {"gap_before", r.gap_before},
          {"gap_after", r.gap_after},
          {"beta_measured", r.beta_measured},
          {"vitali_fraction", r.vitali_fraction},
          {"balls_used", r.balls_used},
          {"balls_skipped", r.balls_skipped},
          {"min_margin", r.min_margin},
          {"lp_checked", r.lp_checked},
          {"lp_failures", r.lp_failures},
          {"ae03_all_hold", r.ae03_all_hold},
          {"saturated", r.saturated},
          {"frequency_multiplier", r.frequency_multiplier},
          {"moll_distances", r.moll_distances},
          {"balls", balls}};
}

nlohmann::json to_json(const IterationConfig& c) {
  nlohmann::json j = {{"n", c.n},
                      {"m", c.m},
                      {"J", c.J},
                      {"points_per_axis", c.points_per_axis},
                      {"r_schedule", c.r_schedule},
                      {"atoms", c.atoms},
                      {"kappa", c.kappa},
                      {"sigma_budget", c.sigma_budget},
                      {"delta", c.delta},
                      {"seed", c.seed},
                      {"max_retries", c.max_retries}};
  if (c.omega)
    j["omega"] = {{"kind", c.omega->kind == DomainKind::Ball ? "ball" : "box"},
                  {"center", vec_json(c.omega->center)},
                  {"size", c.omega->size}};
  return j;
}

nlohmann::json to_json(const RunReport& r) {
  nlohmann::json its = nlohmann::json::array();
  for (const IterationRecord& it : r.iterations) {
    its.push_back({{"step", to_json(it.step)},
                   {"r", it.r},
                   {"cap", it.cap},
                   {"moll_self", it.moll_self},
                   {"moll_cross", it.moll_cross},
                   {"caps_hold", it.caps_hold},
                   {"retries", it.retries},
                   {"div_residual", {{"max", it.div_max}, {"l2", it.div_l2}}},
                   {"defect",
                    {{"F_norm", it.defect.F_norm},
                     {"G_norm", it.defect.G_norm},
                     {"div_F_max", it.defect.f_max},
                     {"div_F_l2", it.defect.f_l2},
                     {"div_G_max", it.defect.g_max},
                     {"div_G_l2", it.defect.g_l2}}},
                   {"saturation",
                    {{"mean_u_norm", it.saturation.mean_u_norm},
                     {"mean_b_norm", it.saturation.mean_b_norm},
                     {"eps", it.saturation.eps},
                     {"frac_above", it.saturation.frac_above}}},
                   {"mean_gap_density", it.mean_gap_density}});
  }
  nlohmann::json gaps = nlohmann::json::array();
  if (!r.iterations.empty()) gaps.push_back(r.iterations.front().step.gap_before);
  for (const IterationRecord& it : r.iterations) gaps.push_back(it.step.gap_after);
  return {{"config", to_json(r.config)},
          {"omega_volume", r.omega_volume},
          {"h", r.h},
          {"lattice_points", r.lattice_points},
          {"gap_sequence", gaps},
          {"beta_min", r.beta_min},
          {"recursion_holds", r.recursion_holds},
          {"gap_decreasing", r.gap_decreasing},
          {"iterations", its}};
}

}  // namespace mhdci
