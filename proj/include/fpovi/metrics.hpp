#pragma once

#include "fpovi/particles.hpp"

namespace fpovi {

/// Per-test-point summary of an ensemble's predictive distribution.
struct PredictiveSummary {
  Vector mean;           // particle-averaged prediction
  Vector epistemic_std;  // std of per-particle means
  Vector lo, hi;         // interval bounds at the requested level
  Vector nll;            // per-point mixture negative log-likelihood
};

/// sqrt(mean over test points of (particle-mean prediction - y)^2).
/// predictions: n x T, one row per particle.
double rmse(const Matrix& predictions, const Vector& y);

/// Mean over test points of -log[(1/n) sum_i N(y; f_i, sigma2_i)], via
/// log-sum-exp. sigma2 has one entry per particle.
double mixture_nll(const Matrix& predictions, const Vector& sigma2, const Vector& y);

enum class BandMode { MeanBand, PredictiveBand };

/// Per-point central interval at level gamma. MeanBand takes empirical
/// quantiles of the particle means; PredictiveBand broadens each particle by
/// Gaussian noise draws (draws_per_particle each) before taking quantiles.
struct Band {
  Vector lo, hi;
  Vector width() const { return hi - lo; }
};
Band credible_band(const Matrix& predictions, const Vector& sigma2, double gamma,
                   BandMode mode, Rng& rng, int draws_per_particle = 100);

/// Mean width of band a over the masked region divided by the same for b.
double gap_ratio(const Vector& widths_a, const Vector& widths_b,
                 const std::vector<bool>& mask);

/// Empirical quantile with linear interpolation between order statistics.
double quantile(std::vector<double> v, double q);

PredictiveSummary summarize(const Matrix& predictions, const Vector& sigma2,
                            const Vector& y, double gamma, Rng& rng);

}  // namespace fpovi
