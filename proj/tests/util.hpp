#pragma once

#include <doctest.h>

#include "fpovi/nn.hpp"

namespace testutil {

using fpovi::Matrix;
using fpovi::Rng;
using fpovi::Vector;

// central finite differences of a scalar function
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x,
                          double eps = 1e-5) {
  Vector g(x.size());
  for (int i = 0; i < x.size(); ++i) {
    Vector hi = x, lo = x;
    hi[i] += eps;
    lo[i] -= eps;
    g[i] = (f(hi) - f(lo)) / (2.0 * eps);
  }
  return g;
}

inline double rel_err(const Vector& a, const Vector& b) {
  double denom = std::max(1e-12, std::max(a.norm(), b.norm()));
  return (a - b).norm() / denom;
}

inline Vector random_vector(int n, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

inline Matrix random_matrix(int r, int c, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Matrix m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = g(rng);
  return m;
}

}  // namespace testutil
