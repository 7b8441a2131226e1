#pragma once

#include <functional>

#include "fpovi/function_space.hpp"

namespace fpovi {

using KernelFn = std::function<double(const Vector&, const Vector&)>;

/// k(x, x') = exp(-||x - x'||^2 / (2 bandwidth^2))
KernelFn rbf_kernel_fn(double bandwidth);

struct GpPosterior {
  Vector mean;  // length t
  Matrix cov;   // t x t
};

/// Closed-form GP regression posterior via Cholesky:
/// mean = K_tr (K_rr + s2 I)^{-1} Y, cov = K_tt - K_tr (K_rr + s2 I)^{-1} K_tr^T.
GpPosterior gp_posterior(const KernelFn& k, const Matrix& X_train, const Vector& Y_train,
                         const Matrix& X_test, double sigma2);

/// n function-value particles on a finite index set (one row per particle).
struct FunctionParticleSet {
  Matrix values;  // n x |X|
  int n_particles() const { return static_cast<int>(values.rows()); }
};

/// Exact finite-dimensional function-space POVI: treats f(X) as the parameter,
/// uses a zero-mean GP prior with gram K_XX, Gaussian likelihood on the
/// training positions, RBF/median gram over the function vectors, Euler step.
class ExactFpovi {
 public:
  ExactFpovi(const Matrix& K_XX, std::vector<int> train_pos, Vector y_train, double sigma2);

  /// Per-particle log-posterior gradients at the current values.
  Matrix log_posterior_grads(const FunctionParticleSet& particles) const;
  void step(FunctionParticleSet& particles, FlowKind flow, double step_size) const;

 private:
  Eigen::LLT<Matrix> prior_llt_;
  std::vector<int> train_pos_;
  Vector y_train_;
  double sigma2_;
  int dim_;
};

struct HmcResult {
  Matrix samples;  // n_samples x dim
  double acceptance_rate = 0.0;
};

/// Leapfrog HMC with a standard Metropolis correction.
HmcResult hmc_sample(const std::function<double(const Vector&)>& log_density,
                     const std::function<Vector(const Vector&)>& grad,
                     const Vector& init, double step_size, int leapfrog_steps,
                     int n_samples, int burn_in, Rng& rng);

/// Sample mean + unbiased covariance as a GaussianApprox.
GaussianApprox mvn_fit(const Matrix& samples);

/// KL(a || b) between two multivariate normals (jittered covariances).
double mvn_kl(const GaussianApprox& a, const GaussianApprox& b);

/// The 1-D finite-index-set regression fixture used by the exact-vs-parametric
/// KL study: grid plus three extra test points, noisy sine targets, RBF prior.
struct FiniteGpFixture {
  Matrix X;                    // all positions, |X| x 1 (train part first)
  std::vector<int> train_pos;  // indices into X
  std::vector<int> test_pos;
  Vector y_train;
  double sigma2 = 0.01;        // observation noise 0.1^2
  double bandwidth = 0.5;      // prior RBF bandwidth
  double white_noise = 1e-3;   // white-noise kernel component, keeps K_XX well conditioned
  Matrix K_XX;                 // prior gram over all of X

  /// RBF(bandwidth) plus the white-noise component on coincident points.
  KernelFn kernel() const;
  Matrix x_train() const;
  Matrix x_test() const;
};

FiniteGpFixture make_finite_gp_fixture(Rng& rng);

/// Baseline for KL scale: GP posterior on the down-sampled training grid
/// {-2, -1.6, ..., 2}, evaluated at the fixture's test positions.
GpPosterior downsampled_baseline(const FiniteGpFixture& fx);

}  // namespace fpovi
