#pragma once

#include "fpovi/particles.hpp"

namespace fpovi {

/// RBF gram matrix over n points plus everything the flow rules need:
/// K_ij = exp(-||p_i - p_j||^2 / h) and the per-pair gradient factor
/// grad_wrt_second(i, j) = (2/h) (p_i - p_j) K_ij.
struct GramPack {
  Matrix K;       // n x n
  double h = 1.0; // bandwidth, squared-distance units
  Matrix points;  // n x dim, the vectors the gram was built on

  int size() const { return static_cast<int>(K.rows()); }

  Vector grad_wrt_second(int i, int j) const {
    return (2.0 / h) * K(i, j) * (points.row(i) - points.row(j)).transpose();
  }
};

constexpr double kBandwidthFloor = 1e-8;

/// h = med^2 / log(n+1), med = median of the n(n-1)/2 distinct pairwise
/// Euclidean distances. Collapsed ensembles hit the 1e-8 floor.
double median_bandwidth(const Matrix& points);

GramPack rbf_gram(const Matrix& points, double h);

/// RBF gram on the flattened prediction vectors f(x; theta_i), with a fresh
/// median bandwidth on those vectors.
GramPack function_value_gram(const ParticleEnsemble& ens, const Matrix& X);

/// Same, on the concatenated per-layer activations h(x; theta_i).
GramPack activation_gram(const ParticleEnsemble& ens, const Matrix& X);

}  // namespace fpovi
