#include "fpovi/priors.hpp"

#include <cmath>

namespace fpovi {

std::pair<double, Vector> weight_prior_logp_grad(const Vector& params,
                                                 const GaussianWeightPrior& prior,
                                                 const NetworkSpec& spec) {
  detail::check_params(params, spec);
  if (!prior.per_layer_fan_in) {
    double logp = -0.5 * params.squaredNorm() / prior.sigma_w2;
    return {logp, -params / prior.sigma_w2};
  }
  // weights: variance sigma_w2 / fan_in; biases: variance sigma_w2
  double logp = 0.0;
  Vector grad(params.size());
  int off = 0;
  for (int l = 0; l < spec.n_layers(); ++l) {
    const int w_in = spec.widths[l], w_out = spec.widths[l + 1];
    const double vw = prior.sigma_w2 / static_cast<double>(w_in);
    auto wseg = params.segment(off, w_in * w_out);
    auto bseg = params.segment(off + w_in * w_out, w_out);
    logp += -0.5 * wseg.squaredNorm() / vw - 0.5 * bseg.squaredNorm() / prior.sigma_w2;
    grad.segment(off, w_in * w_out) = -wseg / vw;
    grad.segment(off + w_in * w_out, w_out) = -bseg / prior.sigma_w2;
    off += (w_in + 1) * w_out;
  }
  return {logp, grad};
}

Vector sample_weight_prior(const NetworkSpec& spec, const GaussianWeightPrior& prior,
                           Rng& rng) {
  spec.validate();
  Vector p(spec.param_count());
  std::normal_distribution<double> gauss(0.0, 1.0);
  int off = 0;
  for (int l = 0; l < spec.n_layers(); ++l) {
    const int w_in = spec.widths[l], w_out = spec.widths[l + 1];
    const double sd_w = prior.per_layer_fan_in
                            ? std::sqrt(prior.sigma_w2 / static_cast<double>(w_in))
                            : std::sqrt(prior.sigma_w2);
    const double sd_b = std::sqrt(prior.sigma_w2);
    for (int k = 0; k < w_in * w_out; ++k) p[off + k] = sd_w * gauss(rng);
    for (int k = 0; k < w_out; ++k) p[off + w_in * w_out + k] = sd_b * gauss(rng);
    off += (w_in + 1) * w_out;
  }
  return p;
}

double gaussian_loglik(const Matrix& f, const Matrix& y, double sigma_y2) {
  if (sigma_y2 <= 0.0) throw std::invalid_argument("sigma_y2 must be positive");
  if (f.rows() != y.rows() || f.cols() != y.cols())
    throw std::invalid_argument("gaussian_loglik shape mismatch");
  const double c = -0.5 * std::log(2.0 * M_PI * sigma_y2);
  return f.size() * c - (y - f).squaredNorm() / (2.0 * sigma_y2);
}

double noise_grad(const Vector& residuals, const NoiseModel& noise, double log_sigma2,
                  double n_total, int batch_size) {
  if (noise.kind != NoiseKind::InferredGaussian)
    throw std::invalid_argument("noise_grad requires the inferred-Gaussian model");
  const double s2 = std::exp(log_sigma2);
  const double scale = n_total / static_cast<double>(batch_size);
  double lik = 0.0;
  for (int b = 0; b < residuals.size(); ++b)
    lik += -0.5 + residuals[b] * residuals[b] / (2.0 * s2);
  return scale * lik - noise.alpha + noise.beta / s2;
}

double noise_log_posterior(const Vector& residuals, const NoiseModel& noise,
                           double log_sigma2, double n_total, int batch_size) {
  const double s2 = std::exp(log_sigma2);
  const double scale = n_total / static_cast<double>(batch_size);
  double lik = 0.0;
  for (int b = 0; b < residuals.size(); ++b)
    lik += -0.5 * std::log(2.0 * M_PI * s2) -
           residuals[b] * residuals[b] / (2.0 * s2);
  // inverse-Gamma prior on s2, plus the ds2/d(log s2) Jacobian
  double prior = noise.alpha * std::log(noise.beta) - std::lgamma(noise.alpha) -
                 (noise.alpha + 1.0) * log_sigma2 - noise.beta / s2 + log_sigma2;
  return scale * lik + prior;
}

}  // namespace fpovi
