#include "fpovi/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace fpovi {

double rmse(const Matrix& predictions, const Vector& y) {
  if (predictions.cols() != y.size())
    throw std::invalid_argument("rmse: prediction/target length mismatch");
  Vector mean = predictions.colwise().mean().transpose();
  return std::sqrt((mean - y).squaredNorm() / static_cast<double>(y.size()));
}

double mixture_nll(const Matrix& predictions, const Vector& sigma2, const Vector& y) {
  const int n = static_cast<int>(predictions.rows());
  const int t = static_cast<int>(predictions.cols());
  if (sigma2.size() != n) throw std::invalid_argument("mixture_nll: one sigma2 per particle");
  if (y.size() != t) throw std::invalid_argument("mixture_nll: target length mismatch");
  for (int i = 0; i < n; ++i)
    if (sigma2[i] <= 0.0) throw std::invalid_argument("mixture_nll: sigma2 must be positive");
  double total = 0.0;
  for (int j = 0; j < t; ++j) {
    Vector lp(n);
    for (int i = 0; i < n; ++i) {
      double r = y[j] - predictions(i, j);
      lp[i] = -0.5 * std::log(2.0 * M_PI * sigma2[i]) - r * r / (2.0 * sigma2[i]);
    }
    double m = lp.maxCoeff();
    double lse = m + std::log((lp.array() - m).exp().sum());
    total += -(lse - std::log(static_cast<double>(n)));
  }
  return total / t;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile: empty sample");
  if (q < 0.0 || q > 1.0) throw std::invalid_argument("quantile: level outside [0,1]");
  std::sort(v.begin(), v.end());
  double pos = q * (v.size() - 1);
  auto k = static_cast<std::size_t>(pos);
  if (k + 1 >= v.size()) return v.back();
  double frac = pos - k;
  return v[k] * (1.0 - frac) + v[k + 1] * frac;
}

Band credible_band(const Matrix& predictions, const Vector& sigma2, double gamma,
                   BandMode mode, Rng& rng, int draws_per_particle) {
  const int n = static_cast<int>(predictions.rows());
  const int t = static_cast<int>(predictions.cols());
  if (gamma < 0.0 || gamma >= 1.0)
    throw std::invalid_argument("credible_band: level must lie in [0,1)");
  const double q_lo = 0.5 - gamma / 2.0, q_hi = 0.5 + gamma / 2.0;
  Band band;
  band.lo.resize(t);
  band.hi.resize(t);
  if (mode == BandMode::MeanBand) {
    for (int j = 0; j < t; ++j) {
      std::vector<double> col(predictions.col(j).data(), predictions.col(j).data() + n);
      band.lo[j] = quantile(col, q_lo);
      band.hi[j] = quantile(col, q_hi);
    }
    return band;
  }
  if (sigma2.size() != n)
    throw std::invalid_argument("credible_band: one sigma2 per particle");
  std::normal_distribution<double> gauss(0.0, 1.0);
  // mixture quantiles approximated by per-particle sampling; draw all noise
  // up front so the per-point loop stays rng-order deterministic
  for (int j = 0; j < t; ++j) {
    std::vector<double> draws;
    draws.reserve(static_cast<std::size_t>(n) * draws_per_particle);
    for (int i = 0; i < n; ++i) {
      double sd = std::sqrt(sigma2[i]);
      for (int r = 0; r < draws_per_particle; ++r)
        draws.push_back(predictions(i, j) + sd * gauss(rng));
    }
    band.lo[j] = quantile(draws, q_lo);
    band.hi[j] = quantile(std::move(draws), q_hi);
  }
  return band;
}

double gap_ratio(const Vector& widths_a, const Vector& widths_b,
                 const std::vector<bool>& mask) {
  if (widths_a.size() != widths_b.size() ||
      static_cast<std::size_t>(widths_a.size()) != mask.size())
    throw std::invalid_argument("gap_ratio: length mismatch");
  double sa = 0.0, sb = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    sa += widths_a[static_cast<int>(i)];
    sb += widths_b[static_cast<int>(i)];
    ++count;
  }
  if (count == 0) throw std::invalid_argument("gap_ratio: empty region");
  if (sb == 0.0) throw std::invalid_argument("gap_ratio: zero-width denominator band");
  return sa / sb;
}

PredictiveSummary summarize(const Matrix& predictions, const Vector& sigma2,
                            const Vector& y, double gamma, Rng& rng) {
  const int n = static_cast<int>(predictions.rows());
  const int t = static_cast<int>(predictions.cols());
  PredictiveSummary s;
  s.mean = predictions.colwise().mean().transpose();
  s.epistemic_std.resize(t);
  for (int j = 0; j < t; ++j) {
    double var = (predictions.col(j).array() - s.mean[j]).square().sum() /
                 std::max(1, n - 1);
    s.epistemic_std[j] = std::sqrt(var);
  }
  Band band = credible_band(predictions, sigma2, gamma, BandMode::PredictiveBand, rng);
  s.lo = band.lo;
  s.hi = band.hi;
  s.nll.resize(t);
  for (int j = 0; j < t; ++j) {
    Matrix pj = predictions.col(j);
    Vector yj(1);
    yj[0] = y[j];
    s.nll[j] = mixture_nll(pj, sigma2, yj);
  }
  return s;
}

}  // namespace fpovi
