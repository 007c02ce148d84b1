#pragma once

#include <cmath>
#include <random>

#include "mhdci/algebra.hpp"

namespace mhdci::testing {

inline Vec random_vec(int n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

inline Vec random_unit(int n, std::mt19937_64& rng) {
  const Vec v = random_vec(n, rng);
  return v / v.norm();
}

inline State random_state(int n, std::mt19937_64& rng, double scale = 1.0) {
  State z = State::zero(n);
  z.reduced.u = random_vec(n, rng, scale);
  z.reduced.b = random_vec(n, rng, scale);
  Mat A(n, n), B(n, n);
  for (int i = 0; i < n; ++i) {
    A.col(i) = random_vec(n, rng, scale);
    B.col(i) = random_vec(n, rng, scale);
  }
  z.reduced.M = 0.5 * (A + A.transpose());
  z.reduced.M -= (z.reduced.M.trace() / n) * Mat::Identity(n, n);
  z.reduced.Q = 0.5 * (B - B.transpose());
  z.q = std::normal_distribution<double>(0.0, scale)(rng);
  return z;
}

// Entries k 2^-10 with |k| <= 1024: every step of pack/unpack at n = 4 is
// exact in binary floating point.
inline State random_dyadic_state(int n, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> K(-1024, 1024);
  auto d = [&] { return std::ldexp(static_cast<double>(K(rng)), -10); };
  State z = State::zero(n);
  for (int i = 0; i < n; ++i) {
    z.reduced.u(i) = d();
    z.reduced.b(i) = d();
  }
  double tr = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      if (i == j && i == n - 1) continue;
      z.reduced.M(i, j) = z.reduced.M(j, i) = d();
      if (i == j) tr += z.reduced.M(i, i);
      if (i != j) {
        z.reduced.Q(i, j) = d();
        z.reduced.Q(j, i) = -z.reduced.Q(i, j);
      }
    }
  z.reduced.M(n - 1, n - 1) = -tr;
  z.q = d();
  return z;
}

}  // namespace mhdci::testing
