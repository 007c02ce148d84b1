#include "mhdci/waves.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "mhdci/parallel.hpp"
#include "mhdci/sampling.hpp"

namespace mhdci {

namespace {

using LatticeKey = std::array<int, kMaxDim + 1>;

double smoothstep(double t) {
  return t * t * t * t * t * (126.0 + t * (-420.0 + t * (540.0 + t * (-315.0 + 70.0 * t))));
}
double smoothstep_d1(double t) {
  const double a = t * (1.0 - t);
  return 630.0 * a * a * a * a;
}
double smoothstep_d2(double t) {
  const double a = t * (1.0 - t);
  return 2520.0 * a * a * a * (1.0 - 2.0 * t);
}

PackedMat pack_blocks(const Mat& U, const Mat& V) {
  const auto d = U.rows();
  PackedMat W(2 * d, d);
  W.topRows(d) = U;
  W.bottomRows(d) = V;
  return W;
}

// U and the skew lift F of the aligned wave at y, for amplitudes U0, F0
// whose first row and column vanish.
void aligned_blocks(const Mat& U0, const Mat& F0, int N, const Vec& y, Mat& U, Mat& Ft) {
  const auto d = y.size();
  U.setZero(d, d);
  Ft.setZero(d, d);
  if (y.norm() >= 1.0) return;
  const double th = N * y(0);
  const double s = std::sin(th), c = std::cos(th);
  const double invN = 1.0 / N;
  const CutoffJet j = cutoff_jet(y);
  // Hessian of phi = psi sin(N y1) / N^2.
  Mat H = (s * invN * invN) * j.hess;
  H.row(0) += (c * invN) * j.grad.transpose();
  H.col(0) += (c * invN) * j.grad;
  H(0, 0) -= j.value * s;
  // Gradient of phi1 = -psi cos(N y1) / N.
  Vec g = (-c * invN) * j.grad;
  g(0) += j.value * s;

  const Mat HU = H * U0;
  U = -H(0, 0) * U0;
  U.row(0) += HU.row(0);
  U.col(0) += HU.row(0).transpose();
  U(0, 0) -= HU.trace();

  const Vec Fg = F0 * g;
  Ft = g(0) * F0;
  Ft.row(0) += Fg.transpose();
  Ft.col(0) -= Fg;
}

double state_dot(const State& a, const State& b) {
  return a.reduced.u.dot(b.reduced.u) + a.reduced.b.dot(b.reduced.b) +
         a.reduced.M.cwiseProduct(b.reduced.M).sum() + a.reduced.Q.cwiseProduct(b.reduced.Q).sum() +
         a.q * b.q;
}

}  // namespace

RadialProfile cutoff_profile(double r) {
  if (r <= 0.5) return {1.0, 0.0, 0.0};
  if (r >= 1.0) return {0.0, 0.0, 0.0};
  const double t = 2.0 * r - 1.0;
  return {1.0 - smoothstep(t), -2.0 * smoothstep_d1(t), -4.0 * smoothstep_d2(t)};
}

double cutoff(double r) { return cutoff_profile(r).value; }

CutoffJet cutoff_jet(const Vec& y) {
  const auto d = y.size();
  CutoffJet j;
  j.grad = Vec::Zero(d);
  j.hess = Mat::Zero(d, d);
  const double r = y.norm();
  const RadialProfile p = cutoff_profile(r);
  j.value = p.value;
  if (r <= 0.5 || r >= 1.0) return j;
  const Vec yh = y / r;
  j.grad = p.d1 * yh;
  const Mat P = yh * yh.transpose();
  j.hess = p.d2 * P + (p.d1 / r) * (Mat::Identity(d, d) - P);
  return j;
}

Mat skew_lift(const Mat& V) {
  Mat F = V;
  F.row(F.rows() - 1) *= -1.0;
  return F;
}

PotentialPair aligned_potential(const EmbeddedMatrix& W, int N) {
  if (N < 1) throw InvalidArgument("aligned_potential: frequency must be >= 1, got " + std::to_string(N));
  const double mis = W.entries().col(0).norm();
  if (mis > 1e-12 * W.norm()) throw AlignmentError("aligned_potential: amplitude does not annihilate e1", mis);
  PotentialPair p;
  p.amplitude = W;
  p.frequency = N;
  p.U = W.upper();
  p.F = skew_lift(W.lower());
  p.U.row(0).setZero();
  p.U.col(0).setZero();
  p.F.row(0).setZero();
  p.F.col(0).setZero();
  return p;
}

PackedMat apply_L(const PotentialPair& p, const Vec& y) {
  Mat U, Ft;
  aligned_blocks(p.U, p.F, p.frequency, y, U, Ft);
  return pack_blocks(U, skew_lift(Ft));
}

double u_potential_coefficient(const Mat& U, int a, int b, int c, int d) {
  double v = 0.0;
  if (a == 0 && c == 0) v += U(b, d);
  if (b == 0 && d == 0) v += U(a, c);
  if (a == 0 && d == 0) v -= U(b, c);
  if (b == 0 && c == 0) v -= U(a, d);
  return v;
}

double f_potential_coefficient(const Mat& F, int i, int j, int k) {
  double v = 0.0;
  if (k == 0) v += F(i, j);
  if (i == 0) v += F(j, k);
  if (j == 0) v += F(k, i);
  return v;
}

Mat basis_change(const WaveDirection& dir) {
  const auto d = dir.xi.size();
  const auto n = d - 1;
  if (dir.xi.head(n).norm() < 1e-12 * std::max(1.0, dir.xi.norm()))
    throw DegenerateInput("basis_change: xi is parallel to e_{n+1}");
  const Vec x = dir.xi / dir.xi.norm();
  Eigen::Index pivot = 0;
  for (Eigen::Index i = 1; i < n; ++i)
    if (std::abs(x(i)) > std::abs(x(pivot))) pivot = i;

  Mat A = Mat::Zero(d, d);
  A.col(0) = x;
  A(n, n) = 1.0;
  std::vector<Vec> ortho;
  ortho.push_back(Vec::Unit(d, n));
  Vec spatial = x;
  spatial(n) = 0.0;
  ortho.push_back(spatial / spatial.norm());
  for (Eigen::Index j = 1; j < n; ++j) {
    Vec v = Vec::Unit(d, j == pivot ? 0 : j);
    for (int pass = 0; pass < 2; ++pass)
      for (const Vec& q : ortho) v -= q.dot(v) * q;
    v.normalize();
    ortho.push_back(v);
    A.col(j) = v;
  }
  if (std::abs(A.determinant()) <= 1e-10) throw DegenerateInput("basis_change: singular completion");
  return A;
}

std::size_t LatticeKeyHash::operator()(const LatticeKey& k) const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (int v : k) {
    h ^= static_cast<std::uint32_t>(v);
    h *= 0x100000001b3ULL;
  }
  return static_cast<std::size_t>(h);
}

void BuildingBlock::prepare() {
  Ainv_ = A_.inverse();
  AinvT_ = Ainv_.transpose();
  const EmbeddedMatrix W = pack_state(amplitude_);
  const Mat Ubar = W.upper();
  const Mat Fbar = skew_lift(W.lower());
  Uhat_ = A_.transpose() * Ubar * A_;
  Fhat_ = A_.transpose() * Fbar * A_;
  const double scale = Ubar.norm() + Fbar.norm();
  const double mis = Uhat_.col(0).norm() + Fhat_.col(0).norm();
  if (mis > 1e-9 * std::max(scale, 1e-300) && scale > 0.0)
    throw AlignmentError("building block: amplitude does not annihilate the certificate direction", mis);
  Uhat_ = 0.5 * (Uhat_ + Uhat_.transpose()).eval();
  Fhat_ = 0.5 * (Fhat_ - Fhat_.transpose()).eval();
  Uhat_.row(0).setZero();
  Uhat_.col(0).setZero();
  Fhat_.row(0).setZero();
  Fhat_.col(0).setZero();
}

namespace {

struct CoverResult {
  std::vector<CoverPiece> pieces;
  std::vector<double> radius;
  std::vector<CellIndex> cells;
  double fraction = 0.0;
};

LatticeKey cell_of(const Vec& x, double g) {
  LatticeKey k{};
  for (Eigen::Index i = 0; i < x.size(); ++i) k[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(x(i) / g));
  return k;
}

// Calls visit(lo, hi) style odometer over the integer box [lo, hi].
template <class F>
void for_box(const LatticeKey& lo, const LatticeKey& hi, int d, F&& visit) {
  LatticeKey k = lo;
  for (;;) {
    visit(k);
    int i = 0;
    while (i < d && ++k[static_cast<std::size_t>(i)] > hi[static_cast<std::size_t>(i)]) {
      k[static_cast<std::size_t>(i)] = lo[static_cast<std::size_t>(i)];
      ++i;
    }
    if (i == d) return;
  }
}

void insert_piece(CellIndex& idx, double g, const CoverPiece& p, int id) {
  const int d = static_cast<int>(p.center.size());
  const LatticeKey lo = cell_of(p.center.array() - p.radius, g);
  const LatticeKey hi = cell_of(p.center.array() + p.radius, g);
  for_box(lo, hi, d, [&](const LatticeKey& k) { idx[k].push_back(id); });
}

// Points s (k + o), k integer, with |R s (k + o)| <= rho.
void enumerate_ellipsoid(const Eigen::MatrixXd& R, double s, const Eigen::VectorXd& o, double rho, int d,
                         const std::function<bool(const Vec&)>& visit) {
  Eigen::VectorXd k = Eigen::VectorXd::Zero(d);
  bool stop = false;
  std::function<void(int, double)> rec = [&](int i, double budget) {
    if (stop) return;
    if (i < 0) {
      if (!visit(Vec(s * (k + o)))) stop = true;
      return;
    }
    double tail = R(i, i) * o(i);
    for (int j = i + 1; j < d; ++j) tail += R(i, j) * (k(j) + o(j));
    const double centre = -tail / R(i, i);
    const double half = std::sqrt(std::max(budget, 0.0)) / (s * R(i, i));
    const double lo = std::ceil(centre - half - 1e-12), hi = std::floor(centre + half + 1e-12);
    for (double v = lo; v <= hi && !stop; v += 1.0) {
      k(i) = v;
      const double vi = s * (R(i, i) * v + tail);
      const double rest = budget - vi * vi;
      if (rest < -1e-12) continue;
      rec(i - 1, rest);
    }
    k(i) = 0.0;
  };
  rec(d - 1, rho * rho + 1e-12);
}

// Greedy packing of balls B(c, r) with |A^{-t} c| + r |A^{-t}| <= 1 (their
// images under A^{-t} are translates of r A^{-t} B1 inside B1). Radii
// r_j = r_max 2^{-floor(j/n)}, candidates on the grid r Z^d shifted by
// (j mod n) r / n along the diagonal.
CoverResult pack_cover(const Mat& A, const Mat& Ainv, const BlockOptions& opts) {
  const int max_pieces = opts.max_pieces;
  const double target = opts.target_fraction;
  const int d = static_cast<int>(A.rows());
  const int n = d - 1;
  const double detA = std::abs(A.determinant());
  Eigen::JacobiSVD<Eigen::MatrixXd> svd{Eigen::MatrixXd(A)};
  const double smin = svd.singularValues()(d - 1);
  const Eigen::MatrixXd G = Eigen::MatrixXd(Ainv) * Eigen::MatrixXd(Ainv).transpose();
  const Eigen::MatrixXd R = G.llt().matrixU();
  CoverResult out;
  bool capped = false;
  for (int pass = 0; out.fraction < target && !capped; ++pass) {
    const int level = pass / n;
    if (level > 12) break;
    const double r = std::ldexp(smin, -level);
    const double piece_volume = std::pow(r, d) / detA;
    if (pass % n == 0) {
      out.radius.push_back(r);
      out.cells.emplace_back();
    }
    const Eigen::VectorXd offset = Eigen::VectorXd::Constant(d, static_cast<double>(pass % n) / n);
    enumerate_ellipsoid(R, r, offset, 1.0 - r / smin, d, [&](const Vec& c) {
      for (std::size_t l = 0; l < out.radius.size(); ++l) {
        const double g = 2.0 * out.radius[l];
        const LatticeKey lo = cell_of(c.array() - r, g), hi = cell_of(c.array() + r, g);
        bool hit = false;
        for_box(lo, hi, d, [&](const LatticeKey& k) {
          if (hit) return;
          const auto it = out.cells[l].find(k);
          if (it == out.cells[l].end()) return;
          for (int id : it->second) {
            const CoverPiece& p = out.pieces[static_cast<std::size_t>(id)];
            if ((p.center - c).norm() < p.radius + r - 1e-12) {
              hit = true;
              return;
            }
          }
        });
        if (hit) return true;
      }
      CoverPiece p;
      p.center = c;
      p.radius = r;
      p.level = level;
      out.pieces.push_back(p);
      insert_piece(out.cells.back(), 2.0 * r, p, static_cast<int>(out.pieces.size()) - 1);
      out.fraction += piece_volume;
      if (static_cast<int>(out.pieces.size()) >= max_pieces) capped = true;
      return out.fraction < target && !capped;
    });
  }
  if (out.fraction < opts.min_fraction)
    throw CoveringError("building block cover: packing stopped below the required volume fraction", out.fraction);
  return out;
}

}  // namespace

PackedMat BuildingBlock::piece_field(const Vec& xt) const {
  Mat U, Ft;
  aligned_blocks(Uhat_, Fhat_, N_, xt, U, Ft);
  const Mat Uy = AinvT_ * U * Ainv_;
  const Mat Fy = AinvT_ * Ft * Ainv_;
  return pack_blocks(Uy, skew_lift(Fy));
}

PackedMat BuildingBlock::evaluate_local(const Vec& y) const {
  const auto d = y.size();
  if (y.norm() >= 1.0) return PackedMat::Zero(2 * d, d);
  const Vec x = A_.transpose() * y;
  for (std::size_t level = 0; level < level_radius_.size(); ++level) {
    const double r = level_radius_[level];
    const auto it = level_cells_[level].find(cell_of(x, 2.0 * r));
    if (it == level_cells_[level].end()) continue;
    for (int id : it->second) {
      const CoverPiece& p = cover_[static_cast<std::size_t>(id)];
      const Vec dx = x - p.center;
      if (dx.norm() < p.radius) return piece_field(dx / p.radius);
    }
  }
  return PackedMat::Zero(2 * d, d);
}

PackedMat BuildingBlock::evaluate(const Vec& Y) const {
  return evaluate_local((Y - anchor_center_) / anchor_radius_);
}

BuildingBlock BuildingBlock::scaled(double s) const {
  BuildingBlock b = *this;
  b.amplitude_ *= s;
  b.Uhat_ *= s;
  b.Fhat_ *= s;
  b.sup_distance_ *= std::abs(s);
  b.delta_ *= std::abs(s);
  return b;
}

BuildingBlock BuildingBlock::with_frequency(int N) const {
  if (N < 1) throw InvalidArgument("building block: frequency must be >= 1");
  BuildingBlock b = *this;
  b.N_ = N;
  return b;
}


BuildingBlock assemble_block(const State& amplitude, const WaveDirection& certificate, int N,
                             const Vec& anchor_center, double anchor_radius, const BlockOptions& opts) {
  const int n = amplitude.dim();
  require_dimension(n);
  if (N < 1) throw InvalidArgument("building block: frequency must be >= 1");
  if (!(anchor_radius > 0.0)) throw InvalidArgument("building block: anchor radius must be positive");
  if (anchor_center.size() != n + 1) throw InvalidArgument("building block: anchor has wrong dimension");
  BuildingBlock b;
  b.amplitude_ = amplitude;
  b.amplitude_.q = 0.0;
  b.certificate_ = certificate;
  b.A_ = basis_change(certificate);
  b.N_ = N;
  b.anchor_center_ = anchor_center;
  b.anchor_radius_ = anchor_radius;
  b.prepare();
  CoverResult cov = pack_cover(b.A_, b.Ainv_, opts);
  b.cover_ = std::move(cov.pieces);
  b.level_radius_ = std::move(cov.radius);
  b.level_cells_ = std::move(cov.cells);
  b.fraction_ = cov.fraction;
  return b;
}

double segment_distance(const State& w, const State& wbar) {
  const double nb = state_dot(wbar, wbar);
  if (nb == 0.0) return state_norm(w);
  const double t = std::clamp(state_dot(w, wbar) / nb, -1.0, 1.0);
  return state_norm(w - t * wbar);
}

double block_sup_distance(const BuildingBlock& blk, std::size_t samples, std::uint64_t seed) {
  const int d = blk.dim() + 1;
  const std::vector<double> pts = ball_points(d, samples, substream_seed(seed, "waves/sup"));
  return parallel_max(samples, 1024, [&](std::size_t b, std::size_t e) {
    double worst = 0.0;
    for (std::size_t k = b; k < e; ++k) {
      const Vec x = Eigen::Map<const Eigen::VectorXd>(pts.data() + k * static_cast<std::size_t>(d), d);
      const State w = unpack_state(EmbeddedMatrix(blk.piece_field(x)), 1e-8);
      worst = std::max(worst, segment_distance(w, blk.amplitude()));
    }
    return worst;
  });
}

BuildingBlock build_block(const LambdaSegment& seg, double delta, double m, const Vec& anchor_center,
                          double anchor_radius, const BlockOptions& opts) {
  if (!(delta > 0.0)) throw InvalidArgument("build_block: delta must be positive");
  if (!(m >= 1.0)) throw InvalidArgument("build_block: exponent must be >= 1");
  const State amp = seg.half_length * seg.direction;
  const double temporal = std::sqrt(amp.reduced.u.squaredNorm() + amp.reduced.b.squaredNorm());
  if (temporal == 0.0) throw DegenerateInput("build_block: zero temporal column (ubar, bbar) = 0");

  BuildingBlock blk;
  {
    const int n = amp.dim();
    require_dimension(n);
    if (!(anchor_radius > 0.0)) throw InvalidArgument("build_block: anchor radius must be positive");
    if (anchor_center.size() != n + 1) throw InvalidArgument("build_block: anchor has wrong dimension");
    blk.amplitude_ = amp;
    blk.amplitude_.q = 0.0;
    blk.certificate_ = seg.certificate;
    blk.A_ = basis_change(seg.certificate);
    blk.N_ = 1;
    blk.anchor_center_ = anchor_center;
    blk.anchor_radius_ = anchor_radius;
    blk.prepare();
    CoverResult cov = pack_cover(blk.A_, blk.Ainv_, opts);
    blk.cover_ = std::move(cov.pieces);
    blk.level_radius_ = std::move(cov.radius);
    blk.level_cells_ = std::move(cov.cells);
    blk.fraction_ = cov.fraction;
  }

  auto measure = [&](int N) { return block_sup_distance(blk.with_frequency(N), opts.sup_samples, opts.seed); };
  int N = 1;
  double dist = measure(1);
  if (dist >= delta) {
    N = 1;
    while (N < dist / delta && N < opts.max_frequency) N *= 2;
    dist = measure(N);
    if (dist < delta) {
      while (N > 1) {
        const double lower = measure(N / 2);
        if (lower >= delta) break;
        N /= 2;
        dist = lower;
      }
    } else {
      while (dist >= delta) {
        if (N >= opts.max_frequency)
          throw GeometryError("build_block: frequency cap reached with sup-distance " + std::to_string(dist));
        N *= 2;
        dist = measure(N);
      }
    }
  }
  blk.N_ = N;
  blk.sup_distance_ = dist;
  blk.delta_ = delta;
  return blk;
}

double ball_sine_mean(int dim, double rho, int N, double m) {
  const int cells = 4000 + 400 * N;
  const double h = 2.0 * rho / cells;
  double num = 0.0, den = 0.0;
  for (int i = 0; i < cells; ++i) {
    const double t = -rho + (i + 0.5) * h;
    const double w = std::pow(std::max(rho * rho - t * t, 0.0), 0.5 * (dim - 1));
    num += std::pow(std::abs(std::sin(N * t)), m) * w;
    den += w;
  }
  return num / den;
}

BlockMetrics block_metrics(const BuildingBlock& blk, double m, std::size_t samples, std::uint64_t seed) {
  const int n = blk.dim();
  const int d = n + 1;
  const double ref = pack_state(blk.amplitude()).entries().col(n).norm();
  if (ref == 0.0) throw DegenerateInput("block_metrics: zero temporal column");
  constexpr int kReplicates = 8;
  const std::size_t per = std::max<std::size_t>(samples / kReplicates, 1);
  std::vector<double> means;
  for (int r = 0; r < kReplicates; ++r) {
    const std::vector<double> pts =
        ball_points(d, per, substream_seed(seed, "waves/metrics/" + std::to_string(r)));
    const double sum = parallel_sum(per, 1024, [&](std::size_t b, std::size_t e) {
      double acc = 0.0;
      for (std::size_t k = b; k < e; ++k) {
        const Vec x = Eigen::Map<const Eigen::VectorXd>(pts.data() + k * static_cast<std::size_t>(d), d);
        acc += std::pow(blk.piece_field(x).col(n).norm() / ref, m);
      }
      return acc;
    });
    means.push_back(sum / static_cast<double>(per));
  }
  double mean = 0.0;
  for (double v : means) mean += v;
  mean /= kReplicates;
  double var = 0.0;
  for (double v : means) var += (v - mean) * (v - mean);
  var /= kReplicates - 1;
  BlockMetrics out;
  out.mass_ratio = blk.covered_fraction() * mean;
  out.mass_std_error = blk.covered_fraction() * std::sqrt(var / kReplicates);
  out.alpha_est = blk.covered_fraction() * std::pow(0.5, d) * ball_sine_mean(d, 0.5, blk.frequency(), m);
  return out;
}

DivergenceRefinement divergence_refinement(const BuildingBlock& blk, double h0, int levels,
                                           std::size_t samples, std::uint64_t seed) {
  const int n = blk.dim();
  const int d = n + 1;
  const std::vector<double> pts = ball_points(d, samples, substream_seed(seed, "waves/divergence"));
  DivergenceRefinement out;
  for (int level = 0; level < levels; ++level) {
    const double h = std::ldexp(h0, -level);
    std::vector<double> res(samples);
    parallel_tiles(samples, 256, [&](std::size_t b, std::size_t e) {
      for (std::size_t k = b; k < e; ++k) {
        const Vec p = Eigen::Map<const Eigen::VectorXd>(pts.data() + k * static_cast<std::size_t>(d), d);
        const Vec Y = blk.anchor_center() + blk.anchor_radius() * p;
        Eigen::VectorXd div = Eigen::VectorXd::Zero(2 * d);
        for (int j = 0; j < d; ++j) {
          Vec step = Vec::Zero(d);
          step(j) = h;
          div += (blk.evaluate(Y + step).col(j) - blk.evaluate(Y - step).col(j)) / (2.0 * h);
        }
        res[k] = div.norm();
      }
    });
    double s2 = 0.0, mx = 0.0;
    for (double r : res) {
      s2 += r * r;
      mx = std::max(mx, r);
    }
    out.steps.push_back(h);
    out.l2.push_back(std::sqrt(s2 / static_cast<double>(samples)));
    out.max.push_back(mx);
  }
  for (std::size_t k = 0; k + 1 < out.l2.size(); ++k) out.ratios.push_back(out.l2[k] / out.l2[k + 1]);
  return out;
}

}  // namespace mhdci
