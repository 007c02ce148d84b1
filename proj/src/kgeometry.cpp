#include "mhdci/kgeometry.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "mhdci/lp.hpp"
#include "mhdci/mhdf.hpp"
#include "mhdci/sampling.hpp"

namespace mhdci {

namespace {

Eigen::VectorXd coords_of(const ReducedState& z) {
  const auto c = to_coords(z);
  return Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
}

double max_abs_diff(const ReducedState& a, const ReducedState& b) {
  double e = (a.u - b.u).cwiseAbs().maxCoeff();
  e = std::max(e, (a.b - b.b).cwiseAbs().maxCoeff());
  e = std::max(e, (a.M - b.M).cwiseAbs().maxCoeff());
  e = std::max(e, (a.Q - b.Q).cwiseAbs().maxCoeff());
  return e;
}

// Rows: reduced coordinates, then the weight-sum row.
void hull_system(const ReducedState& zr, const AtomLibrary& lib, Eigen::MatrixXd& A,
                 Eigen::VectorXd& b) {
  const Eigen::Index d = lib.coords().rows();
  A.resize(d + 1, lib.count());
  A.topRows(d) = lib.coords();
  A.row(d).setOnes();
  b.resize(d + 1);
  b.head(d) = coords_of(zr);
  b(d) = 1.0;
}

}  // namespace

AtomLibrary::AtomLibrary(int n, std::vector<KAtom> atoms, std::uint64_t seed)
    : n_(n), atoms_(std::move(atoms)), seed_(seed) {
  require_dimension(n);
  if (atoms_.empty()) throw InvalidArgument("atom library is empty");
  const int d = reduced_dim(n);
  coords_.resize(d, count());
  for (int k = 0; k < count(); ++k) {
    if (atoms_[static_cast<std::size_t>(k)].dim() != n)
      throw InvalidArgument("atom library mixes dimensions");
    to_coords(atoms_[static_cast<std::size_t>(k)].reduced(),
              std::span<double>(coords_.col(k).data(), static_cast<std::size_t>(d)));
  }
}

AtomLibrary build_atom_library(int n, int count, std::uint64_t seed) {
  require_dimension(n);
  if (count < 4 * state_dim(n))
    throw InvalidArgument("atom library needs at least 4 n(n+2) = " +
                          std::to_string(4 * state_dim(n)) + " atoms, got " + std::to_string(count));
  ShiftedSobol sob(2 * n, substream_seed(seed, "kgeometry/atoms"));
  std::vector<double> uni(static_cast<std::size_t>(2 * n));
  std::vector<double> u(static_cast<std::size_t>(n)), b(static_cast<std::size_t>(n));
  std::vector<KAtom> atoms;
  atoms.reserve(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    sob.next(uni);
    const std::span<const double> all(uni);
    sphere_from_uniform(all.first(static_cast<std::size_t>(n)), u);
    sphere_from_uniform(all.subspan(static_cast<std::size_t>(n)), b);
    atoms.emplace_back(Eigen::Map<const Eigen::VectorXd>(u.data(), n), Eigen::Map<const Eigen::VectorXd>(b.data(), n));
  }
  return AtomLibrary(n, std::move(atoms), seed);
}

ReducedState CaratheodoryDecomp::reconstruct() const {
  ReducedState z = ReducedState::zero(atoms.front().dim());
  for (std::size_t k = 0; k < atoms.size(); ++k) z += weights[k] * atoms[k].reduced();
  return z;
}

CaratheodoryDecomp decompose(const ReducedState& zr, const AtomLibrary& lib) {
  if (zr.dim() != lib.dim()) throw InvalidArgument("decompose: dimension mismatch");
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  hull_system(zr, lib, A, b);
  Simplex lp(A, b);
  if (!lp.feasible()) throw OutsideHull("decompose: point outside the library hull", lp.infeasibility());
  const Eigen::VectorXd x = lp.solution();

  std::vector<int> support;
  std::vector<double> theta;
  for (int k = 0; k < lib.count(); ++k)
    if (x(k) > 0.0) {
      support.push_back(k);
      theta.push_back(x(k));
    }

  // Caratheodory reduction along affine dependences.
  const auto budget = static_cast<std::size_t>(state_dim(lib.dim()));
  while (support.size() > budget) {
    Eigen::MatrixXd P(A.rows(), static_cast<Eigen::Index>(support.size()));
    for (std::size_t j = 0; j < support.size(); ++j) P.col(static_cast<Eigen::Index>(j)) = A.col(support[j]);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(P, Eigen::ComputeFullV);
    Eigen::VectorXd v = svd.matrixV().col(P.cols() - 1);
    if (v.maxCoeff() <= 0.0) v = -v;
    if (v.maxCoeff() <= 1e-14) throw NumericalDegeneracy("decompose: no affine dependence to eliminate");
    double step = std::numeric_limits<double>::infinity();
    std::size_t drop = 0;
    for (std::size_t j = 0; j < support.size(); ++j)
      if (v(static_cast<Eigen::Index>(j)) > 1e-14) {
        const double s = theta[j] / v(static_cast<Eigen::Index>(j));
        if (s < step) {
          step = s;
          drop = j;
        }
      }
    for (std::size_t j = 0; j < support.size(); ++j)
      theta[j] = std::max(0.0, theta[j] - step * v(static_cast<Eigen::Index>(j)));
    support.erase(support.begin() + static_cast<std::ptrdiff_t>(drop));
    theta.erase(theta.begin() + static_cast<std::ptrdiff_t>(drop));
    for (std::size_t j = support.size(); j-- > 0;)
      if (theta[j] <= 0.0) {
        support.erase(support.begin() + static_cast<std::ptrdiff_t>(j));
        theta.erase(theta.begin() + static_cast<std::ptrdiff_t>(j));
      }
  }
  if (support.empty()) throw NumericalDegeneracy("decompose: empty support");

  // Least-squares polish on the support; kept only if it stays nonnegative.
  {
    Eigen::MatrixXd P(A.rows(), static_cast<Eigen::Index>(support.size()));
    for (std::size_t j = 0; j < support.size(); ++j) P.col(static_cast<Eigen::Index>(j)) = A.col(support[j]);
    const Eigen::VectorXd t = P.colPivHouseholderQr().solve(b);
    if (t.minCoeff() >= 0.0 && (P * t - b).cwiseAbs().maxCoeff() <=
                                   (P * Eigen::Map<Eigen::VectorXd>(theta.data(), P.cols()) - b)
                                       .cwiseAbs()
                                       .maxCoeff())
      for (std::size_t j = 0; j < support.size(); ++j) theta[j] = t(static_cast<Eigen::Index>(j));
  }

  CaratheodoryDecomp dec;
  dec.indices = support;
  dec.weights = theta;
  for (int k : support) dec.atoms.push_back(lib.atom(k));
  dec.reconstruction_error = max_abs_diff(dec.reconstruct(), zr);
  dec.reconstruction_error =
      std::max(dec.reconstruction_error,
               std::abs(std::accumulate(theta.begin(), theta.end(), 0.0) - 1.0));
  if (dec.reconstruction_error > 1e-9)
    throw NumericalDegeneracy("decompose: reconstruction error " +
                              std::to_string(dec.reconstruction_error) + " exceeds 1e-9");
  return dec;
}

bool in_hull(const ReducedState& zr, const AtomLibrary& lib) {
  if (zr.dim() != lib.dim()) throw InvalidArgument("in_hull: dimension mismatch");
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  hull_system(zr, lib, A, b);
  return Simplex(A, b).feasible();
}

double hull_margin(const ReducedState& zr, const AtomLibrary& lib) {
  if (zr.dim() != lib.dim()) throw InvalidArgument("hull_margin: dimension mismatch");
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
  hull_system(zr, lib, A, b);
  const Simplex base(A, b);
  if (!base.feasible()) return 0.0;
  const Eigen::Index d = A.rows() - 1;
  double margin = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < d; ++i) {
    for (double sgn : {1.0, -1.0}) {
      // sum theta a - t sgn e_i = zr, i.e. zr + t sgn e_i in the hull.
      Simplex lp = base;
      Eigen::VectorXd col = Eigen::VectorXd::Zero(d + 1);
      col(i) = -sgn;
      const int j = lp.add_column(col);
      Eigen::VectorXd c = Eigen::VectorXd::Zero(lp.cols());
      c(j) = 1.0;
      if (lp.maximize(c) == LpStatus::Unbounded) continue;
      margin = std::min(margin, lp.solution()(j));
    }
  }
  return std::max(0.0, margin);
}

bool in_relaxed_set(const State& z, const AtomLibrary& lib) {
  return std::abs(z.q) < 1.0 && hull_margin(z.reduced, lib) > kMarginFloor;
}

SphereMoments sphere_moments(int n, int samples, std::uint64_t seed) {
  require_dimension(n);
  if (samples < 10000) throw InvalidArgument("sphere_moments needs at least 1e4 samples");
  constexpr int kReplicates = 16;
  const int per = samples / kReplicates;
  std::vector<double> g1(kReplicates), g2(kReplicates), g3(kReplicates);
  std::vector<double> uni(static_cast<std::size_t>(n)), u(static_cast<std::size_t>(n));
  const double inv_n = 1.0 / n;
  for (int r = 0; r < kReplicates; ++r) {
    ShiftedSobol sob(n, substream_seed(seed, "kgeometry/moments/" + std::to_string(r)));
    double s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (int k = 0; k < per; ++k) {
      sob.next(uni);
      sphere_from_uniform(uni, u);
      const double a = u[0] * u[0];
      s1 += a;
      s2 += a * u[1] * u[1];
      s3 += (a - inv_n) * (a - inv_n);
    }
    g1[static_cast<std::size_t>(r)] = s1 / per;
    g2[static_cast<std::size_t>(r)] = s2 / per;
    g3[static_cast<std::size_t>(r)] = s3 / per;
  }
  auto summarize = [](const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size() - 1);
    return MomentEstimate{mean, std::sqrt(var / static_cast<double>(v.size()))};
  };
  SphereMoments out;
  out.gamma1 = summarize(g1);
  out.gamma2 = summarize(g2);
  out.gamma3 = summarize(g3);
  out.samples = per * kReplicates;
  out.replicates = kReplicates;
  return out;
}

TImageRank t_image_rank(const AtomLibrary& lib, double threshold) {
  const int n = lib.dim();
  const int K = lib.count();
  std::vector<std::function<double(const KAtom&)>> tests;
  for (int i = 0; i < n; ++i) {
    tests.emplace_back([i](const KAtom& a) { return a.u()(i); });
    tests.emplace_back([i](const KAtom& a) { return a.b()(i); });
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      tests.emplace_back([i, j](const KAtom& a) { return a.u()(i) * a.u()(j); });
      tests.emplace_back([i, j](const KAtom& a) { return -a.b()(i) * a.b()(j); });
    }
  for (int i = 0; i < n; ++i) {
    tests.emplace_back([i, n](const KAtom& a) { return a.u()(i) * a.u()(i) - 1.0 / n; });
    tests.emplace_back([i, n](const KAtom& a) { return -a.b()(i) * a.b()(i) + 1.0 / n; });
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      tests.emplace_back([i, j](const KAtom& a) { return a.u()(i) * a.b()(j); });

  Eigen::MatrixXd images(lib.coords().rows(), static_cast<Eigen::Index>(tests.size()));
  for (std::size_t t = 0; t < tests.size(); ++t) {
    Eigen::VectorXd phi(K);
    for (int k = 0; k < K; ++k) phi(k) = tests[t](lib.atom(k));
    images.col(static_cast<Eigen::Index>(t)) = lib.coords() * phi / static_cast<double>(K);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(images);
  TImageRank r;
  r.images = static_cast<int>(tests.size());
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
    r.singular_values.push_back(svd.singularValues()(i));
    if (svd.singularValues()(i) > threshold) ++r.rank;
  }
  return r;
}

void save_library(const std::string& path, const AtomLibrary& lib) {
  MhdfData d;
  d.n = static_cast<std::uint32_t>(lib.dim());
  d.points_per_axis = static_cast<std::uint32_t>(lib.count());
  d.components = static_cast<std::uint32_t>(2 * lib.dim());
  for (const auto& a : lib.atoms()) {
    for (int i = 0; i < lib.dim(); ++i) d.values.push_back(a.u()(i));
    for (int i = 0; i < lib.dim(); ++i) d.values.push_back(a.b()(i));
  }
  write_mhdf(path, d);
}

AtomLibrary load_library(const std::string& path) {
  const MhdfData d = read_mhdf(path);
  const int n = static_cast<int>(d.n);
  require_dimension(n);
  if (d.components != 2 * d.n || d.values.size() != std::size_t{d.points_per_axis} * d.components)
    throw IoError("'" + path + "' is not an atom library dump");
  std::vector<KAtom> atoms;
  for (std::uint32_t k = 0; k < d.points_per_axis; ++k) {
    const double* p = d.values.data() + std::size_t{k} * d.components;
    atoms.emplace_back(Eigen::Map<const Eigen::VectorXd>(p, n), Eigen::Map<const Eigen::VectorXd>(p + n, n));
  }
  return AtomLibrary(n, std::move(atoms));
}

}  // namespace mhdci
