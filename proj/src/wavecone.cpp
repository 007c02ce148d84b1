#include "mhdci/wavecone.hpp"

#include <cmath>
#include <vector>

namespace mhdci {

namespace {

void require_unit(const Vec& v, const char* name) {
  const double nv = v.norm();
  if (std::abs(nv - 1.0) > 1e-12) throw NonUnitInput(std::string("lambda_direction: ") + name, nv);
}

// Orthonormal basis of span(vectors), dropping numerically dependent ones.
std::vector<Vec> orthonormalize(const std::vector<Vec>& vectors) {
  std::vector<Vec> basis;
  for (const Vec& v : vectors) {
    Vec w = v;
    for (int pass = 0; pass < 2; ++pass)
      for (const Vec& q : basis) w -= q.dot(w) * q;
    const double nw = w.norm();
    if (nw > 1e-10 * std::max(1.0, v.norm())) basis.push_back(w / nw);
  }
  return basis;
}

// First coordinate vector with a substantial component orthogonal to the
// span, orthogonalized and normalized.
std::optional<Vec> first_complement_vector(const std::vector<Vec>& spanners, int n) {
  const std::vector<Vec> basis = orthonormalize(spanners);
  const double floor = 0.5 / std::sqrt(static_cast<double>(n));
  for (int i = 0; i < n; ++i) {
    Vec w = unit_vector(n, i);
    for (int pass = 0; pass < 2; ++pass)
      for (const Vec& q : basis) w -= q.dot(w) * q;
    const double nw = w.norm();
    if (nw >= floor) return Vec(w / nw);
  }
  return std::nullopt;
}

ReducedState atom_difference(const KAtom& a, const KAtom& b) { return a.reduced() - b.reduced(); }

}  // namespace

double wave_residual(const State& z, const Vec& xi) {
  const PackedMat& W = pack_state(z).entries();
  const double scale = W.norm() * xi.norm();
  if (scale == 0.0) return 0.0;
  return (W * xi).norm() / scale;
}

std::optional<WaveDirection> wave_cone_kernel(const State& z) {
  const int n = z.dim();
  require_dimension(n);
  const PackedMat W = pack_state(z).entries();
  if (W.cwiseAbs().maxCoeff() == 0.0)
    throw DegenerateInput("wave_cone_kernel: z = 0 is annihilated by every direction");
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(Eigen::MatrixXd(W), Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double cut = 1e-10 * sv(0);
  int rank = 0;
  for (Eigen::Index i = 0; i < sv.size(); ++i)
    if (sv(i) > cut) ++rank;
  const int k = n + 1 - rank;
  if (k <= 0) return std::nullopt;

  // Rows = kernel basis vectors, columns reordered as (s, zeta_n, ..., zeta_1).
  Eigen::MatrixXd R(k, n + 1);
  for (int r = 0; r < k; ++r) {
    const Eigen::VectorXd v = svd.matrixV().col(rank + r);
    R(r, 0) = v(n);
    for (int c = 1; c <= n; ++c) R(r, c) = v(n - c);
  }
  int row = 0;
  for (int c = 0; c <= n && row < k; ++c) {
    Eigen::Index piv;
    const double mag = R.col(c).segment(row, k - row).cwiseAbs().maxCoeff(&piv);
    if (mag <= 1e-10) continue;
    R.row(row).swap(R.row(row + piv));
    R.row(row) /= R(row, c);
    for (int r = 0; r < k; ++r)
      if (r != row) R.row(r) -= R(r, c) * R.row(row);
    ++row;
  }
  const Eigen::VectorXd last = R.row(k - 1).transpose();
  Vec xi(n + 1);
  xi(n) = last(0);
  for (int c = 1; c <= n; ++c) xi(n - c) = last(c);
  xi.normalize();
  for (int i = 0; i <= n; ++i)
    if (std::abs(xi(i)) > 1e-12) {
      if (xi(i) < 0) xi = -xi;
      break;
    }
  return WaveDirection{xi, wave_residual(z, xi)};
}

WaveDirection lambda_direction(const Vec& u1, const Vec& b1, const Vec& u2, const Vec& b2) {
  const int n = static_cast<int>(u1.size());
  require_dimension(n);
  require_unit(u1, "u1");
  require_unit(b1, "b1");
  require_unit(u2, "u2");
  require_unit(b2, "b2");
  std::optional<Vec> zeta = first_complement_vector({u1 - u2, b1, b2, u1}, n);
  if (!zeta) zeta = first_complement_vector({u1 - u2, b1, b2}, n);
  if (!zeta) throw InternalConsistency("lambda_direction: orthogonal complement is trivial");
  Vec xi(n + 1);
  xi.head(n) = *zeta;
  xi(n) = -u1.dot(*zeta);
  xi.normalize();
  const State diff{atom_difference(KAtom(u1, b1), KAtom(u2, b2)), 0.0};
  return WaveDirection{xi, wave_residual(diff, xi)};
}

LambdaSegment select_segment(const State& z, const CaratheodoryDecomp& decomp) {
  if (decomp.atoms.empty()) throw InvalidArgument("segment_from_decomposition: empty decomposition");
  const int K = static_cast<int>(decomp.atoms.size());
  int one = 0;
  for (int k = 1; k < K; ++k)
    if (decomp.weights[static_cast<std::size_t>(k)] > decomp.weights[static_cast<std::size_t>(one)]) one = k;
  const KAtom& a1 = decomp.atoms[static_cast<std::size_t>(one)];
  int l = -1;
  double best = 0.0;
  for (int k = 0; k < K; ++k) {
    if (k == one) continue;
    const KAtom& ak = decomp.atoms[static_cast<std::size_t>(k)];
    const double dist = std::sqrt((ak.u() - a1.u()).squaredNorm() + (ak.b() - a1.b()).squaredNorm());
    const double score = decomp.weights[static_cast<std::size_t>(k)] * dist;
    if (score > best) {
      best = score;
      l = k;
    }
  }
  if (l < 0 || best <= 1e-12)
    throw AtConstraintSet("segment_from_decomposition: all atoms share (u, b); z is effectively in K");
  const KAtom& al = decomp.atoms[static_cast<std::size_t>(l)];
  LambdaSegment seg;
  seg.base = z;
  seg.direction = State{(0.5 * decomp.weights[static_cast<std::size_t>(l)]) * atom_difference(al, a1), 0.0};
  seg.certificate = lambda_direction(al.u(), al.b(), a1.u(), a1.b());
  seg.certificate.residual = wave_residual(seg.direction, seg.certificate.xi);
  seg.anchor_atom = one;
  seg.partner_atom = l;
  return seg;
}

LambdaSegment segment_from_decomposition(const State& z, const CaratheodoryDecomp& decomp,
                                         const AtomLibrary& lib) {
  const ReducedState rec = decomp.reconstruct();
  if (reduced_norm(rec - z.reduced) > 1e-9 * std::sqrt(static_cast<double>(state_dim(z.dim()))))
    throw InvalidArgument("segment_from_decomposition: decomposition does not reconstruct z");
  LambdaSegment seg = select_segment(z, decomp);
  seg.margin_base = hull_margin(z.reduced, lib);
  seg.margin_plus = hull_margin(seg.endpoint(1.0).reduced, lib);
  seg.margin_minus = hull_margin(seg.endpoint(-1.0).reduced, lib);
  for (double sgn : {1.0, -1.0}) {
    const double mg = sgn > 0 ? seg.margin_plus : seg.margin_minus;
    const State e = seg.endpoint(sgn);
    if (!(mg > kMarginFloor) || !(std::abs(e.q) < 1.0)) {
      const auto v = to_vector(e);
      std::string s = "[";
      for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
      throw GeometryError("segment endpoint " + std::string(sgn > 0 ? "z + zbar" : "z - zbar") +
                          " leaves the relaxed set (margin " + std::to_string(mg) + "): " + s + "]");
    }
  }
  return seg;
}

double ae03_constant(int n, double m) { return std::pow(2.0, m) * n * (n + 2.0) * power_sum_constant(m); }

Ae03Check verify_ae03(const State& z, const LambdaSegment& seg, double eps, double m) {
  const int n = z.dim();
  Ae03Check r;
  r.c0 = ae03_constant(n, m);
  const double gap = 2.0 - std::pow(z.reduced.u.norm(), m) - std::pow(z.reduced.b.norm(), m);
  r.lhs = std::pow(eps, m - 1.0) * gap / r.c0;
  const double ub = std::sqrt(seg.direction.reduced.u.squaredNorm() + seg.direction.reduced.b.squaredNorm());
  r.rhs = std::pow(ub, m) + 2.0 * std::pow(eps, m) / r.c0;
  r.holds = r.lhs <= r.rhs;
  return r;
}

int wave_cone_nullity(int n, const Vec& xi, double threshold) {
  require_dimension(n);
  const int N = state_dim(n);
  Eigen::MatrixXd L(2 * n + 2, N);
  std::vector<double> e(static_cast<std::size_t>(N), 0.0);
  for (int k = 0; k < N; ++k) {
    e.assign(e.size(), 0.0);
    e[static_cast<std::size_t>(k)] = 1.0;
    L.col(k) = pack_state(state_from_vector(n, e)).entries() * xi;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(L);
  int rank = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) >= threshold) ++rank;
  return N - rank;
}

}  // namespace mhdci
