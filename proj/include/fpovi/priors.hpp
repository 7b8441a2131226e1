#pragma once

#include "fpovi/nn.hpp"

namespace fpovi {

/// Isotropic Gaussian weight prior. With per_layer_fan_in set, layer weights
/// get variance sigma_w2 / fan_in (matching the initialization).
struct GaussianWeightPrior {
  double sigma_w2 = 1.0;
  bool per_layer_fan_in = false;

  GaussianWeightPrior() = default;
  explicit GaussianWeightPrior(double v, bool fan_in = false)
      : sigma_w2(v), per_layer_fan_in(fan_in) {
    if (v <= 0.0) throw std::invalid_argument("weight prior variance must be positive");
  }
};

enum class NoiseKind { FixedGaussian, InferredGaussian, Categorical };

/// Observation model. InferredGaussian carries an inverse-Gamma prior on
/// sigma_y^2, with per-particle log-variance values held by the ensemble.
struct NoiseModel {
  NoiseKind kind = NoiseKind::FixedGaussian;
  double sigma_y2 = 1.0;      // FixedGaussian
  double alpha = 1.0, beta = 0.1;  // InferredGaussian inverse-Gamma prior

  static NoiseModel fixed_gaussian(double s2) {
    if (s2 <= 0.0) throw std::invalid_argument("sigma_y2 must be positive");
    NoiseModel m;
    m.kind = NoiseKind::FixedGaussian;
    m.sigma_y2 = s2;
    return m;
  }
  static NoiseModel inferred_gaussian(double alpha = 1.0, double beta = 0.1) {
    if (alpha <= 0.0 || beta <= 0.0)
      throw std::invalid_argument("inverse-Gamma parameters must be positive");
    NoiseModel m;
    m.kind = NoiseKind::InferredGaussian;
    m.alpha = alpha;
    m.beta = beta;
    return m;
  }
  static NoiseModel categorical() {
    NoiseModel m;
    m.kind = NoiseKind::Categorical;
    return m;
  }
};

/// Draw a weight vector from the prior: weights N(0, sigma_w^2 / fan_in) in
/// fan-in mode (else sigma_w^2), biases N(0, sigma_w^2).
Vector sample_weight_prior(const NetworkSpec& spec, const GaussianWeightPrior& prior,
                           Rng& rng);

/// log N(theta; 0, sigma_w^2 I) up to constant, and its gradient -theta/sigma_w^2.
/// The fan-in scaled variant applies the per-layer variances.
std::pair<double, Vector> weight_prior_logp_grad(const Vector& params,
                                                 const GaussianWeightPrior& prior,
                                                 const NetworkSpec& spec);

/// sum_b [ -1/2 log(2 pi s2) - (y_b - f_b)^2 / (2 s2) ]
double gaussian_loglik(const Matrix& f, const Matrix& y, double sigma_y2);

/// d/d(log s2) of the mini-batch-scaled log posterior in log sigma^2:
/// (N/B') sum_b [-1/2 + r_b^2/(2 s2)] + d/d(log s2) log InvGamma(s2; a, b),
/// with the log-parameterization Jacobian folded in.
double noise_grad(const Vector& residuals, const NoiseModel& noise, double log_sigma2,
                  double n_total, int batch_size);

/// The same log posterior (up to constant), used by finite-difference tests.
double noise_log_posterior(const Vector& residuals, const NoiseModel& noise,
                           double log_sigma2, double n_total, int batch_size);

}  // namespace fpovi
