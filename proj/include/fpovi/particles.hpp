#pragma once

#include "fpovi/nn.hpp"

namespace fpovi {

/// n weight-space particles sharing one NetworkSpec; the discrete
/// approximation q = (1/n) sum_i delta(theta - theta_i).
struct ParticleEnsemble {
  NetworkSpec spec;
  Matrix params;      // n x D, one particle per row
  Vector log_noise;   // n, only used when the noise is inferred (else size 0)
  long iteration = 0;

  ParticleEnsemble() = default;
  ParticleEnsemble(NetworkSpec s, int n, double sigma_w2, Rng& rng)
      : spec(std::move(s)) {
    if (n < 1) throw std::invalid_argument("ensemble needs n >= 1 particles");
    params.resize(n, spec.param_count());
    for (int i = 0; i < n; ++i)
      params.row(i) = init_params(spec, sigma_w2, rng).transpose();
  }

  int n_particles() const { return static_cast<int>(params.rows()); }
  Vector particle(int i) const { return params.row(i).transpose(); }
  bool noise_inferred() const { return log_noise.size() == n_particles(); }

  /// Predictions of particle i on X.
  Matrix predict(int i, const Matrix& X) const {
    return forward(particle(i), spec, X);
  }
};

}  // namespace fpovi
