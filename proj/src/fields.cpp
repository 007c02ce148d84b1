#include "mhdci/fields.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mhdci/mhdf.hpp"
#include "mhdci/parallel.hpp"
#include "mhdci/sampling.hpp"

namespace mhdci {

namespace {

std::size_t g_memory_limit = std::size_t{3} << 30;

double unit_ball_volume(int d) {
  return std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d + 1.0);
}

double component_norm(const double* v, int n, Component c) {
  const Eigen::Map<const Eigen::VectorXd> u(v, n), b(v + n, n);
  switch (c) {
    case Component::U:
      return u.norm();
    case Component::B:
      return b.norm();
    default:
      return vector_state_norm(n, std::span<const double>(v, static_cast<std::size_t>(state_dim(n))));
  }
}

double integrand(const double* v, int n, double m, Component c) {
  if (c == Component::All) return std::pow(component_norm(v, n, Component::U), m) + std::pow(component_norm(v, n, Component::B), m);
  return std::pow(component_norm(v, n, c), m);
}

}  // namespace

bool Domain::contains(const Vec& y) const {
  if (kind == DomainKind::Ball) return (y - center).norm() < size;
  return (y - center).cwiseAbs().maxCoeff() < size;
}

double Domain::exact_volume() const {
  const int d = dim();
  if (kind == DomainKind::Ball) return unit_ball_volume(d) * std::pow(size, d);
  return std::pow(2.0 * size, d);
}

Domain unit_ball(int n) {
  require_dimension(n);
  return Domain{DomainKind::Ball, Vec::Zero(n + 1), 1.0};
}

double domain_volume(const Domain& omega, std::size_t samples, std::uint64_t seed) {
  const int d = omega.dim();
  if (!(omega.size > 0.0)) throw InvalidArgument("domain_volume: empty domain");
  ShiftedSobol sob(d, substream_seed(seed, "fields/volume"));
  std::vector<double> u(static_cast<std::size_t>(d));
  std::size_t inside = 0;
  Vec y(d);
  for (std::size_t k = 0; k < samples; ++k) {
    sob.next(u);
    for (int i = 0; i < d; ++i) y(i) = omega.center(i) + omega.size * (2.0 * u[static_cast<std::size_t>(i)] - 1.0);
    if (omega.contains(y)) ++inside;
  }
  return std::pow(2.0 * omega.size, d) * static_cast<double>(inside) / static_cast<double>(samples);
}

std::size_t GridSpec::count() const {
  std::size_t c = 1;
  for (int i = 0; i < dim(); ++i) c *= static_cast<std::size_t>(points_per_axis);
  return c;
}

Vec GridSpec::point(const LatticeIndex& i) const {
  Vec y(dim());
  for (int a = 0; a < dim(); ++a) y(a) = lo(a) + (i[static_cast<std::size_t>(a)] + 0.5) * h;
  return y;
}

// Axis 0 varies slowest.
std::int64_t GridSpec::linear(const LatticeIndex& i) const {
  std::int64_t k = 0;
  for (int a = 0; a < dim(); ++a) k = k * points_per_axis + i[static_cast<std::size_t>(a)];
  return k;
}

LatticeIndex GridSpec::unravel(std::int64_t k) const {
  LatticeIndex i{};
  for (int a = dim() - 1; a >= 0; --a) {
    i[static_cast<std::size_t>(a)] = static_cast<int>(k % points_per_axis);
    k /= points_per_axis;
  }
  return i;
}

double GridSpec::cell_volume() const { return std::pow(h, dim()); }

GridSpec make_grid(const Domain& omega, int points_per_axis) {
  if (points_per_axis < 8)
    throw ConfigError("grid: points_per_axis must be >= 8, got " + std::to_string(points_per_axis));
  if (!(omega.size > 0.0)) throw ConfigError("grid: empty domain");
  require_dimension(omega.dim() - 1);
  GridSpec g;
  g.n = omega.dim() - 1;
  g.points_per_axis = points_per_axis;
  const double half = omega.size * points_per_axis / (points_per_axis - 2.0);
  g.h = 2.0 * half / points_per_axis;
  g.lo = omega.center.array() - half;
  return g;
}

void set_grid_memory_limit(std::size_t bytes) { g_memory_limit = bytes; }
std::size_t grid_memory_limit() { return g_memory_limit; }

FieldGrid::FieldGrid(const GridSpec& spec, const Domain& omega)
    : spec_(spec), omega_(omega), comps_(state_dim(spec.n)) {
  if (omega.dim() != spec.dim()) throw InvalidArgument("FieldGrid: domain and grid dimensions differ");
  const std::size_t total = spec.count();
  if (total * sizeof(int) > g_memory_limit)
    throw ConfigError("grid: lattice index of " + std::to_string(total) + " points exceeds the memory limit");
  slots_.assign(total, -1);
  for (std::size_t k = 0; k < total; ++k) {
    if (omega.contains(spec.point(spec.unravel(static_cast<std::int64_t>(k))))) {
      slots_[k] = static_cast<int>(points_.size());
      points_.push_back(static_cast<std::int64_t>(k));
    }
  }
  const std::size_t bytes = total * sizeof(int) + points_.size() * (sizeof(std::int64_t) + comps_ * sizeof(double));
  if (bytes > g_memory_limit)
    throw ConfigError("grid: " + std::to_string(bytes) + " bytes exceed the memory limit of " +
                      std::to_string(g_memory_limit));
  values_.assign(points_.size() * static_cast<std::size_t>(comps_), 0.0);
}

State FieldGrid::state(std::size_t slot) const {
  return state_from_vector(spec_.n, std::span<const double>(values(slot), static_cast<std::size_t>(comps_)));
}

void FieldGrid::set_state(std::size_t slot, const State& z) {
  to_vector(z, std::span<double>(values(slot), static_cast<std::size_t>(comps_)));
}

void FieldGrid::require_compatible(const FieldGrid& o) const {
  if (o.points_ != points_ || o.spec_.h != spec_.h || o.spec_.lo != spec_.lo)
    throw InvalidArgument("FieldGrid: grids differ");
}

FieldGrid& FieldGrid::operator+=(const FieldGrid& o) {
  require_compatible(o);
  for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += o.values_[k];
  provenance_.insert(provenance_.end(), o.provenance_.begin(), o.provenance_.end());
  return *this;
}

FieldGrid& FieldGrid::operator-=(const FieldGrid& o) {
  require_compatible(o);
  for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= o.values_[k];
  return *this;
}

FieldGrid& FieldGrid::operator*=(double s) {
  for (double& v : values_) v *= s;
  return *this;
}

void add_block(FieldGrid& g, const BuildingBlock& blk, int id) {
  const GridSpec& spec = g.spec();
  const int d = spec.dim();
  const Vec& c = blk.anchor_center();
  const double r = blk.anchor_radius();
  if (c.size() != d) throw PlacementError("sample_field: block dimension differs from the grid");
  LatticeIndex lo{}, hi{};
  for (int a = 0; a < d; ++a) {
    const double top = spec.lo(a) + spec.points_per_axis * spec.h;
    if (c(a) - r < spec.lo(a) - 1e-12 || c(a) + r > top + 1e-12)
      throw PlacementError("sample_field: anchor ball of block " + std::to_string(id) + " leaves the grid box");
    lo[static_cast<std::size_t>(a)] = std::max(0, static_cast<int>(std::floor((c(a) - r - spec.lo(a)) / spec.h - 0.5)));
    hi[static_cast<std::size_t>(a)] =
        std::min(spec.points_per_axis - 1, static_cast<int>(std::ceil((c(a) + r - spec.lo(a)) / spec.h - 0.5)));
  }
  // Candidate slots inside the anchor's bounding box, in lattice order.
  std::vector<std::size_t> slots;
  LatticeIndex i = lo;
  for (;;) {
    const int s = g.slot(spec.linear(i));
    if (s >= 0 && (spec.point(i) - c).norm() < r) slots.push_back(static_cast<std::size_t>(s));
    int a = d - 1;
    while (a >= 0 && ++i[static_cast<std::size_t>(a)] > hi[static_cast<std::size_t>(a)]) {
      i[static_cast<std::size_t>(a)] = lo[static_cast<std::size_t>(a)];
      --a;
    }
    if (a < 0) break;
  }
  const auto comps = static_cast<std::size_t>(g.components());
  parallel_tiles(slots.size(), 64, [&](std::size_t b, std::size_t e) {
    std::vector<double> v(comps);
    for (std::size_t k = b; k < e; ++k) {
      const std::size_t s = slots[k];
      const PackedMat W = blk.evaluate(g.position(s));
      to_vector(unpack_state(EmbeddedMatrix(W), 1e-8), v);
      double* out = g.values(s);
      for (std::size_t q = 0; q < comps; ++q) out[q] += v[q];
    }
  });
  g.provenance().push_back(id);
}

FieldGrid sample_field(const std::vector<BuildingBlock>& blocks, const GridSpec& spec, const Domain& omega) {
  FieldGrid g(spec, omega);
  for (std::size_t k = 0; k < blocks.size(); ++k) add_block(g, blocks[k], static_cast<int>(k));
  return g;
}

FieldGrid sample_function(const GridSpec& spec, const Domain& omega, const std::function<State(const Vec&)>& f) {
  FieldGrid g(spec, omega);
  for (std::size_t s = 0; s < g.size(); ++s) g.set_state(s, f(g.position(s)));
  return g;
}

Quadrature lm_integral(const FieldGrid& g, double m, Component c) {
  const int n = g.spec().n;
  const GridSpec& spec = g.spec();
  const double fine = parallel_sum(g.size(), 4096, [&](std::size_t b, std::size_t e) {
    double acc = 0.0;
    for (std::size_t s = b; s < e; ++s) acc += integrand(g.values(s), n, m, c);
    return acc;
  });
  // Coarse rule on the sublattice of even indices, cell (2h)^{n+1}.
  const double coarse = parallel_sum(g.size(), 4096, [&](std::size_t b, std::size_t e) {
    double acc = 0.0;
    for (std::size_t s = b; s < e; ++s) {
      const LatticeIndex i = spec.unravel(g.lattice_point(s));
      bool even = true;
      for (int a = 0; a < spec.dim(); ++a) even = even && (i[static_cast<std::size_t>(a)] % 2 == 0);
      if (even) acc += integrand(g.values(s), n, m, c);
    }
    return acc;
  });
  Quadrature q;
  q.value = fine * spec.cell_volume();
  q.error = std::abs(q.value - coarse * std::pow(2.0 * spec.h, spec.dim())) / 3.0;
  return q;
}

double lm_norm(const FieldGrid& g, double m, Component c) { return lm_integral(g, m, c).value; }

FieldGrid mollify(const FieldGrid& g, double r) {
  const GridSpec& spec = g.spec();
  const int d = spec.dim();
  if (!(r >= 2.0 * spec.h * (1.0 - 1e-12)))
    throw ConfigError("mollify: kernel radius " + std::to_string(r) + " is below 2h = " + std::to_string(2.0 * spec.h));
  const int reach = static_cast<int>(std::ceil(r / spec.h));
  std::vector<std::array<int, kMaxDim + 1>> offsets;
  std::vector<double> weights;
  LatticeIndex o{};
  for (int a = 0; a < d; ++a) o[static_cast<std::size_t>(a)] = -reach;
  double total = 0.0;
  for (;;) {
    double rr = 0.0;
    for (int a = 0; a < d; ++a) rr += double(o[static_cast<std::size_t>(a)]) * o[static_cast<std::size_t>(a)];
    const double w = cutoff(std::sqrt(rr) * spec.h / r);
    if (w > 0.0) {
      offsets.push_back(o);
      weights.push_back(w);
      total += w;
    }
    int a = d - 1;
    while (a >= 0 && ++o[static_cast<std::size_t>(a)] > reach) {
      o[static_cast<std::size_t>(a)] = -reach;
      --a;
    }
    if (a < 0) break;
  }
  for (double& w : weights) w /= total;

  FieldGrid out = g;
  out *= 0.0;
  const auto comps = static_cast<std::size_t>(g.components());
  const int ppa = spec.points_per_axis;
  parallel_tiles(g.size(), 256, [&](std::size_t b, std::size_t e) {
    for (std::size_t s = b; s < e; ++s) {
      const LatticeIndex i = spec.unravel(g.lattice_point(s));
      double* acc = out.values(s);
      for (std::size_t k = 0; k < offsets.size(); ++k) {
        LatticeIndex j{};
        bool inside = true;
        for (int a = 0; a < d && inside; ++a) {
          const int v = i[static_cast<std::size_t>(a)] + offsets[k][static_cast<std::size_t>(a)];
          inside = v >= 0 && v < ppa;
          j[static_cast<std::size_t>(a)] = v;
        }
        if (!inside) continue;
        const int t = g.slot(spec.linear(j));
        if (t < 0) continue;
        const double* src = g.values(static_cast<std::size_t>(t));
        const double w = weights[k];
        for (std::size_t q = 0; q < comps; ++q) acc[q] += w * src[q];
      }
    }
  });
  return out;
}

DivResidual div_residual(const FieldGrid& g, bool interior_only) {
  const GridSpec& spec = g.spec();
  const int d = spec.dim();
  const int ppa = spec.points_per_axis;
  std::vector<PackedMat> packed(g.size());
  for (std::size_t s = 0; s < g.size(); ++s) packed[s] = pack_state(g.state(s)).entries();

  // Evaluation points: the domain points and their outside neighbours.
  std::vector<std::int64_t> where;
  where.reserve(g.size());
  auto interior = [&](std::int64_t k) {
    const LatticeIndex i = spec.unravel(k);
    for (int a = 0; a < d; ++a)
      for (int sg : {-1, 1}) {
        LatticeIndex j = i;
        j[static_cast<std::size_t>(a)] += sg;
        const int v = j[static_cast<std::size_t>(a)];
        if (v < 0 || v >= ppa || g.slot(spec.linear(j)) < 0) return false;
      }
    return true;
  };
  for (std::size_t s = 0; s < g.size(); ++s)
    if (!interior_only || interior(g.lattice_point(s))) where.push_back(g.lattice_point(s));
  const std::size_t own = where.size();
  for (std::size_t s = 0; s < g.size() && !interior_only; ++s) {
    const LatticeIndex i = spec.unravel(g.lattice_point(s));
    for (int a = 0; a < d; ++a)
      for (int sg : {-1, 1}) {
        LatticeIndex j = i;
        j[static_cast<std::size_t>(a)] += sg;
        const int v = j[static_cast<std::size_t>(a)];
        if (v < 0 || v >= ppa) continue;
        const std::int64_t k = spec.linear(j);
        if (g.slot(k) < 0) where.push_back(k);
      }
  }
  std::sort(where.begin() + static_cast<std::ptrdiff_t>(own), where.end());
  where.erase(std::unique(where.begin() + static_cast<std::ptrdiff_t>(own), where.end()), where.end());

  auto residual = [&](std::int64_t k) {
    const LatticeIndex i = spec.unravel(k);
    Eigen::VectorXd div = Eigen::VectorXd::Zero(2 * d);
    for (int a = 0; a < d; ++a)
      for (int sg : {-1, 1}) {
        LatticeIndex j = i;
        j[static_cast<std::size_t>(a)] += sg;
        const int v = j[static_cast<std::size_t>(a)];
        if (v < 0 || v >= ppa) continue;
        const int t = g.slot(spec.linear(j));
        if (t < 0) continue;
        div += (sg / (2.0 * spec.h)) * packed[static_cast<std::size_t>(t)].col(a);
      }
    return div.norm();
  };
  DivResidual r;
  r.max = parallel_max(where.size(), 1024, [&](std::size_t b, std::size_t e) {
    double mx = 0.0;
    for (std::size_t k = b; k < e; ++k) mx = std::max(mx, residual(where[k]));
    return mx;
  });
  const double s2 = parallel_sum(where.size(), 1024, [&](std::size_t b, std::size_t e) {
    double acc = 0.0;
    for (std::size_t k = b; k < e; ++k) {
      const double v = residual(where[k]);
      acc += v * v;
    }
    return acc;
  });
  r.l2 = std::sqrt(s2 * spec.cell_volume());
  return r;
}

double sup_norm(const FieldGrid& g, Component c) {
  const int n = g.spec().n;
  return parallel_max(g.size(), 4096, [&](std::size_t b, std::size_t e) {
    double mx = 0.0;
    for (std::size_t s = b; s < e; ++s) {
      if (c == Component::All)
        mx = std::max({mx, component_norm(g.values(s), n, Component::U), component_norm(g.values(s), n, Component::B)});
      else
        mx = std::max(mx, component_norm(g.values(s), n, c));
    }
    return mx;
  });
}

void write_field(const std::string& path, const FieldGrid& g) {
  MhdfData data;
  data.n = static_cast<std::uint32_t>(g.spec().n);
  data.points_per_axis = static_cast<std::uint32_t>(g.spec().points_per_axis);
  data.components = static_cast<std::uint32_t>(g.components());
  const std::size_t comps = static_cast<std::size_t>(g.components());
  data.values.assign(g.spec().count() * comps, 0.0);
  for (std::size_t s = 0; s < g.size(); ++s)
    std::copy(g.values(s), g.values(s) + comps,
              data.values.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(g.lattice_point(s)) * comps));
  write_mhdf(path, data);
}

}  // namespace mhdci
