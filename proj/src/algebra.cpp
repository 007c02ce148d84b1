#include "mhdci/algebra.hpp"

#include <cmath>
#include <sstream>

namespace mhdci {

void require_dimension(int n) {
  if (n < kMinDim || n > kMaxDim) throw UnsupportedDimension(n);
}

Vec unit_vector(int n, int i) {
  Vec e = Vec::Zero(n);
  e(i) = 1.0;
  return e;
}

ReducedState ReducedState::zero(int n) {
  return {Vec::Zero(n), Vec::Zero(n), Mat::Zero(n, n), Mat::Zero(n, n)};
}

void ReducedState::validate(double tol) const {
  const int n = dim();
  if (b.size() != n || M.rows() != n || M.cols() != n || Q.rows() != n || Q.cols() != n)
    throw StructuralError("reduced state blocks have inconsistent sizes");
  const double scale = std::max(1.0, std::max(M.cwiseAbs().maxCoeff(), Q.cwiseAbs().maxCoeff()));
  if ((M - M.transpose()).cwiseAbs().maxCoeff() > tol * scale)
    throw StructuralError("M is not symmetric");
  if (std::abs(M.trace()) > tol * scale * n) throw StructuralError("M is not trace-free");
  if ((Q + Q.transpose()).cwiseAbs().maxCoeff() > tol * scale)
    throw StructuralError("Q is not skew-symmetric");
}

ReducedState& ReducedState::operator+=(const ReducedState& o) {
  u += o.u;
  b += o.b;
  M += o.M;
  Q += o.Q;
  return *this;
}
ReducedState& ReducedState::operator-=(const ReducedState& o) {
  u -= o.u;
  b -= o.b;
  M -= o.M;
  Q -= o.Q;
  return *this;
}
ReducedState& ReducedState::operator*=(double s) {
  u *= s;
  b *= s;
  M *= s;
  Q *= s;
  return *this;
}
bool ReducedState::operator==(const ReducedState& o) const {
  return u == o.u && b == o.b && M == o.M && Q == o.Q;
}

State State::zero(int n) { return {ReducedState::zero(n), 0.0}; }
State& State::operator+=(const State& o) {
  reduced += o.reduced;
  q += o.q;
  return *this;
}
State& State::operator-=(const State& o) {
  reduced -= o.reduced;
  q -= o.q;
  return *this;
}
State& State::operator*=(double s) {
  reduced *= s;
  q *= s;
  return *this;
}
bool State::operator==(const State& o) const { return reduced == o.reduced && q == o.q; }

double reduced_norm(const ReducedState& z) {
  return std::sqrt(z.u.squaredNorm() + z.b.squaredNorm() + z.M.squaredNorm() +
                   z.Q.squaredNorm());
}

double state_norm(const State& z) {
  const double r = reduced_norm(z.reduced);
  return std::sqrt(r * r + z.q * z.q);
}

void to_coords(const ReducedState& z, std::span<double> out) {
  const int n = z.dim();
  std::size_t k = 0;
  for (int i = 0; i < n; ++i) out[k++] = z.u(i);
  for (int i = 0; i < n; ++i) out[k++] = z.b(i);
  for (int i = 0; i + 1 < n; ++i) out[k++] = z.M(i, i);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out[k++] = z.M(i, j);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out[k++] = z.Q(i, j);
}

std::vector<double> to_coords(const ReducedState& z) {
  std::vector<double> c(static_cast<std::size_t>(reduced_dim(z.dim())));
  to_coords(z, c);
  return c;
}

ReducedState reduced_from_coords(int n, std::span<const double> c) {
  ReducedState z = ReducedState::zero(n);
  std::size_t k = 0;
  for (int i = 0; i < n; ++i) z.u(i) = c[k++];
  for (int i = 0; i < n; ++i) z.b(i) = c[k++];
  double tr = 0.0;
  for (int i = 0; i + 1 < n; ++i) {
    z.M(i, i) = c[k++];
    tr += z.M(i, i);
  }
  z.M(n - 1, n - 1) = -tr;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      z.M(i, j) = c[k];
      z.M(j, i) = c[k++];
    }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      z.Q(i, j) = c[k];
      z.Q(j, i) = -c[k++];
    }
  return z;
}

void to_vector(const State& z, std::span<double> out) {
  const auto d = static_cast<std::size_t>(reduced_dim(z.dim()));
  to_coords(z.reduced, out.first(d));
  out[d] = z.q;
}

std::vector<double> to_vector(const State& z) {
  std::vector<double> v(static_cast<std::size_t>(state_dim(z.dim())));
  to_vector(z, v);
  return v;
}

State state_from_vector(int n, std::span<const double> v) {
  const auto d = static_cast<std::size_t>(reduced_dim(n));
  return {reduced_from_coords(n, v.first(d)), v[d]};
}

double vector_state_norm(int n, std::span<const double> v) {
  // u, b entries count once; the n-1 stored diagonal entries of M plus the
  // implied last diagonal; off-diagonals of M and Q appear twice.
  double s = 0.0;
  std::size_t k = 0;
  for (int i = 0; i < 2 * n; ++i, ++k) s += v[k] * v[k];
  double tr = 0.0;
  for (int i = 0; i + 1 < n; ++i, ++k) {
    s += v[k] * v[k];
    tr += v[k];
  }
  s += tr * tr;
  const int off = n * (n - 1) / 2;
  for (int i = 0; i < 2 * off; ++i, ++k) s += 2.0 * v[k] * v[k];
  s += v[k] * v[k];
  return std::sqrt(s);
}

EmbeddedMatrix::EmbeddedMatrix(PackedMat entries) : entries_(std::move(entries)) {
  const auto cols = entries_.cols();
  if (entries_.rows() != 2 * cols) throw StructuralError("embedded matrix must be (2n+2) x (n+1)");
}

EmbeddedMatrix EmbeddedMatrix::zero(int n) {
  return EmbeddedMatrix(PackedMat::Zero(2 * n + 2, n + 1));
}

EmbeddedMatrix EmbeddedMatrix::from_blocks(const Mat& U, const Mat& V) {
  const auto k = U.rows();
  PackedMat W(2 * k, k);
  W.topRows(k) = U;
  W.bottomRows(k) = V;
  return EmbeddedMatrix(W);
}

Mat EmbeddedMatrix::upper() const { return entries_.topRows(entries_.cols()); }
Mat EmbeddedMatrix::lower() const { return entries_.bottomRows(entries_.cols()); }

void EmbeddedMatrix::validate(double tol) const {
  const int n = dim();
  const double scale = std::max(1.0, entries_.cwiseAbs().maxCoeff());
  const double t = tol * scale;
  const Mat U = upper();
  const Mat V = lower();
  if ((U - U.transpose()).cwiseAbs().maxCoeff() > t)
    throw StructuralError("upper block U is not symmetric (K1 violated)");
  if (std::abs(U(n, n)) > t) throw StructuralError("upper block corner is nonzero (K1 violated)");
  const Mat Qp = V.topLeftCorner(n, n);
  if ((Qp + Qp.transpose()).cwiseAbs().maxCoeff() > t)
    throw StructuralError("lower block Q part is not skew (K2 violated)");
  if ((V.col(n).head(n) - V.row(n).head(n).transpose()).cwiseAbs().maxCoeff() > t)
    throw StructuralError("lower block border is not symmetric (K2 violated)");
  if (std::abs(V(n, n)) > t) throw StructuralError("lower block corner is nonzero (K2 violated)");
}

EmbeddedMatrix pack_state(const State& z) {
  const int n = z.dim();
  PackedMat W = PackedMat::Zero(2 * n + 2, n + 1);
  W.topLeftCorner(n, n) = z.reduced.M + z.q * Mat::Identity(n, n);
  W.block(0, n, n, 1) = z.reduced.u;
  W.block(n, 0, 1, n) = z.reduced.u.transpose();
  W.block(n + 1, 0, n, n) = z.reduced.Q;
  W.block(n + 1, n, n, 1) = z.reduced.b;
  W.block(2 * n + 1, 0, 1, n) = z.reduced.b.transpose();
  return EmbeddedMatrix(W);
}

State unpack_state(const EmbeddedMatrix& W, double tol) {
  W.validate(tol);
  const int n = W.dim();
  const PackedMat& E = W.entries();
  State z = State::zero(n);
  const Mat top = E.topLeftCorner(n, n);
  z.q = top.trace() / n;
  // Symmetrize to remove sub-tolerance asymmetry.
  z.reduced.M = 0.5 * (top + top.transpose()) - z.q * Mat::Identity(n, n);
  z.reduced.u = 0.5 * (E.block(0, n, n, 1) + E.block(n, 0, 1, n).transpose());
  const Mat Qp = E.block(n + 1, 0, n, n);
  z.reduced.Q = 0.5 * (Qp - Qp.transpose());
  z.reduced.b = 0.5 * (E.block(n + 1, n, n, 1) + E.block(2 * n + 1, 0, 1, n).transpose());
  return z;
}

KAtom::KAtom(const Vec& u, const Vec& b) : u_(u), b_(b) {
  require_dimension(static_cast<int>(u.size()));
  if (b.size() != u.size()) throw InvalidArgument("k_atom: u and b differ in dimension");
  const double nu = u.norm();
  const double nb = b.norm();
  if (std::abs(nu - 1.0) > 1e-12) throw NonUnitInput("k_atom: u", nu);
  if (std::abs(nb - 1.0) > 1e-12) throw NonUnitInput("k_atom: b", nb);
  M_ = u * u.transpose() - b * b.transpose();
  Q_ = b * u.transpose() - u * b.transpose();
}

KAtom k_atom(const Vec& u, const Vec& b) { return KAtom(u, b); }

State relaxed_vars(const Vec& u, const Vec& b, double p) {
  const int n = static_cast<int>(u.size());
  require_dimension(n);
  const double diff = (u.squaredNorm() - b.squaredNorm()) / n;
  State z = State::zero(n);
  z.reduced.u = u;
  z.reduced.b = b;
  z.reduced.M = u * u.transpose() - b * b.transpose() - diff * Mat::Identity(n, n);
  z.reduced.Q = b * u.transpose() - u * b.transpose();
  z.q = p + diff;
  return z;
}

double power_sum_constant(double m) { return std::pow(2.0, m) * std::pow(m - 1.0, m - 1.0); }

PowerSumBound power_sum_bound(double a, double c, double eps, double m) {
  if (!(a >= 0.0) || !(c >= 0.0) || !(eps > 0.0 && eps < 1.0) || !(m > 1.0)) {
    std::ostringstream os;
    os << "power_sum_bound: parameters out of range (a=" << a << ", c=" << c << ", eps=" << eps
       << ", m=" << m << ")";
    throw InvalidArgument(os.str());
  }
  PowerSumBound r;
  r.bound = (1.0 + eps) * std::pow(a, m) +
            power_sum_constant(m) * std::pow(eps, 1.0 - m) * std::pow(c, m);
  r.holds = std::pow(a + c, m) <= r.bound;
  return r;
}

}  // namespace mhdci
