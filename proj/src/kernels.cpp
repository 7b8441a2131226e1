#include "fpovi/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace fpovi {

double median_bandwidth(const Matrix& points) {
  const int n = static_cast<int>(points.rows());
  if (n < 2) throw std::invalid_argument("median_bandwidth needs n >= 2 points");
  std::vector<double> d;
  d.reserve(n * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      d.push_back((points.row(i) - points.row(j)).norm());
  std::sort(d.begin(), d.end());
  const std::size_t m = d.size();
  double med = (m % 2 == 1) ? d[m / 2] : 0.5 * (d[m / 2 - 1] + d[m / 2]);
  double h = med * med / std::log(static_cast<double>(n) + 1.0);
  return std::max(h, kBandwidthFloor);
}

GramPack rbf_gram(const Matrix& points, double h) {
  if (h <= 0.0) throw std::invalid_argument("rbf_gram: bandwidth must be positive");
  const int n = static_cast<int>(points.rows());
  GramPack g;
  g.h = h;
  g.points = points;
  g.K.resize(n, n);
  for (int i = 0; i < n; ++i) {
    g.K(i, i) = 1.0;
    for (int j = i + 1; j < n; ++j) {
      double k = std::exp(-(points.row(i) - points.row(j)).squaredNorm() / h);
      g.K(i, j) = k;
      g.K(j, i) = k;
    }
  }
  return g;
}

namespace {

GramPack gram_on_feature(const ParticleEnsemble& ens, const Matrix& feats) {
  const int n = static_cast<int>(feats.rows());
  (void)ens;
  if (n == 1) {
    GramPack g;
    g.K = Matrix::Ones(1, 1);
    g.h = 1.0;
    g.points = feats;
    return g;
  }
  return rbf_gram(feats, median_bandwidth(feats));
}

}  // namespace

GramPack function_value_gram(const ParticleEnsemble& ens, const Matrix& X) {
  if (X.rows() == 0) throw std::invalid_argument("function_value_gram: empty batch");
  const int n = ens.n_particles();
  Matrix feats(n, X.rows() * ens.spec.output_dim());
  for (int i = 0; i < n; ++i) {
    Matrix f = ens.predict(i, X);
    feats.row(i) = Eigen::Map<Vector>(f.data(), f.size()).transpose();
  }
  return gram_on_feature(ens, feats);
}

GramPack activation_gram(const ParticleEnsemble& ens, const Matrix& X) {
  if (X.rows() == 0) throw std::invalid_argument("activation_gram: empty batch");
  const int n = ens.n_particles();
  Matrix a0 = activations(ens.particle(0), ens.spec, X);
  Matrix feats(n, a0.size());
  feats.row(0) = Eigen::Map<Vector>(a0.data(), a0.size()).transpose();
  for (int i = 1; i < n; ++i) {
    Matrix a = activations(ens.particle(i), ens.spec, X);
    feats.row(i) = Eigen::Map<Vector>(a.data(), a.size()).transpose();
  }
  return gram_on_feature(ens, feats);
}

}  // namespace fpovi
