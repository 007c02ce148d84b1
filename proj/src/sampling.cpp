#include "mhdci/sampling.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <random>

namespace mhdci {

namespace {
std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
}  // namespace

std::uint64_t substream_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(splitmix64(seed) ^ h);
}

ShiftedSobol::ShiftedSobol(int dim, std::uint64_t seed)
    : dim_(dim), engine_(static_cast<std::size_t>(dim)), shift_(static_cast<std::size_t>(dim)) {
  std::mt19937_64 gen(seed);
  for (auto& s : shift_) s = static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

void ShiftedSobol::next(std::span<double> out) {
  constexpr double lo = 1e-15;
  const double scale = 1.0 / (static_cast<double>(boost::random::sobol::max()) + 1.0);
  for (int i = 0; i < dim_; ++i) {
    double v = static_cast<double>(engine_()) * scale + shift_[static_cast<std::size_t>(i)];
    if (v >= 1.0) v -= 1.0;
    out[static_cast<std::size_t>(i)] = std::clamp(v, lo, 1.0 - lo);
  }
}

double normal_quantile(double p) { return std::sqrt(2.0) * boost::math::erf_inv(2.0 * p - 1.0); }

void sphere_from_uniform(std::span<const double> uniforms, std::span<double> out) {
  double s = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = normal_quantile(uniforms[i]);
    s += out[i] * out[i];
  }
  s = std::sqrt(s);
  for (auto& v : out) v /= s;
}

void ball_from_uniform(std::span<const double> uniforms, std::span<double> out) {
  const std::size_t d = out.size();
  sphere_from_uniform(uniforms.first(d), out);
  const double r = std::pow(uniforms[d], 1.0 / static_cast<double>(d));
  for (auto& v : out) v *= r;
}

std::vector<double> ball_points(int dim, std::size_t count, std::uint64_t seed) {
  const auto d = static_cast<std::size_t>(dim);
  std::vector<double> pts(count * d);
  std::vector<double> u(d + 1);
  ShiftedSobol sob(dim + 1, seed);
  for (std::size_t k = 0; k < count; ++k) {
    sob.next(u);
    ball_from_uniform(u, std::span<double>(pts).subspan(k * d, d));
  }
  return pts;
}

}  // namespace mhdci
