#pragma once

#include "fpovi/data.hpp"
#include "fpovi/flows.hpp"
#include "fpovi/optimizer.hpp"
#include "fpovi/priors.hpp"

namespace fpovi {

/// Multivariate normal over function values, used for the moment-matched
/// function-space prior and for MVN fits in KL diagnostics.
class GaussianApprox {
 public:
  GaussianApprox() = default;

  /// cov is symmetrized; jitter starts at 1e-6 * trace/m (floored 1e-8) and
  /// escalates x10 up to 3 times until the Cholesky succeeds.
  static GaussianApprox from_moments(Vector mean, Matrix cov);

  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  double jitter() const { return jitter_; }
  int dim() const { return static_cast<int>(mean_.size()); }

  /// grad_F log N(F; mean, cov + jitter I) = -(cov + jitter I)^{-1} (F - mean)
  Vector grad_log_density(const Vector& f) const;
  double log_density(const Vector& f) const;
  Vector solve(const Vector& rhs) const { return llt_.solve(rhs); }
  Matrix solve_matrix(const Matrix& rhs) const { return llt_.solve(rhs); }
  double log_det() const;

 private:
  Vector mean_;
  Matrix cov_;
  double jitter_ = 0.0;
  Eigen::LLT<Matrix> llt_;
};

/// One mini-batch of Algorithm-style inputs: B' training rows (with targets)
/// followed by B - B' draws from the continuous distribution nu.
struct ComposedBatch {
  Matrix x_b;      // B' x d, from the training set
  Matrix y_b;      // B' x F
  Matrix x_tilde;  // (B - B') x d, i.i.d. from nu

  Matrix joined() const {
    Matrix x(x_b.rows() + x_tilde.rows(), x_b.cols());
    x.topRows(x_b.rows()) = x_b;
    x.bottomRows(x_tilde.rows()) = x_tilde;
    return x;
  }
};

ComposedBatch compose_batch(const Dataset& train, const KdeSampler& nu, int B,
                            int B_prime, Rng& rng);

/// Moment-matched Gaussian approximation to the function-space prior at the
/// rows of x: sample k draws from the weight prior (biases included), match
/// mean and (unbiased) covariance of the flattened f(x) values (row-major per
/// position across outputs).
GaussianApprox gp_prior_moments(const NetworkSpec& spec,
                                const GaussianWeightPrior& weight_prior,
                                const Matrix& x, int k_draws, Rng& rng);

Vector prior_grad(const GaussianApprox& approx, const Vector& f_vals);

/// Mini-batch-scaled top-layer likelihood signal. Gaussian:
/// (N/B') (y - f) / sigma_y^2; categorical: (N/B') (onehot(y) - softmax(f)).
/// A nonempty mask (same shape as y, Gaussian only) zeroes the signal at
/// unobserved entries, e.g. bandit rewards seen only for the chosen action.
Matrix likelihood_grad(const Matrix& f_vals, const Matrix& y, const NoiseModel& noise,
                       double n_total, double sigma2_override = -1.0,
                       const Matrix& y_mask = Matrix());

/// Where the function-space direction is evaluated: input positions, which of
/// them carry likelihood targets, and which carry the prior gradient.
struct FunctionTarget {
  Matrix x;                    // m x d
  std::vector<int> lik_pos;    // rows of x with training targets
  Matrix y;                    // |lik_pos| x F
  Matrix y_mask;               // optional, same shape as y; 1 = observed
  std::vector<int> prior_pos;  // rows of x with prior gradient
  GaussianApprox prior;        // over the flattened f at prior_pos
  double lik_scale = 1.0;      // N_total / B'
};

/// Alg.-style target: likelihood on the training part of the batch, prior on
/// a separate fresh nu-batch with a freshly moment-matched GP approximation.
FunctionTarget make_minibatch_target(const Dataset& train, const KdeSampler& nu,
                                     const NetworkSpec& spec, double sigma_w2,
                                     int B_lik, int B_prior, int k_draws, Rng& rng);

struct StepGrads {
  Matrix dparams;  // n x D ascent gradients
  Vector dnoise;   // n (empty when noise is fixed)
};

/// Raw per-particle update direction of the function-space POVI rule:
/// function-space log-posterior gradients, function-value RBF gram with a
/// fresh median bandwidth, flow rule, then backprop of -v through each net.
StepGrads fpovi_grads(const ParticleEnsemble& ens, const FunctionTarget& target,
                      FlowKind flow, const NoiseModel& noise);

void fpovi_step(ParticleEnsemble& ens, const FunctionTarget& target, FlowKind flow,
                const NoiseModel& noise, Optimizer& opt, Optimizer* noise_opt = nullptr);

/// Independent MAP ascent per particle (no interaction between particles).
StepGrads ensemble_grads(const ParticleEnsemble& ens, const Matrix& x_b, const Matrix& y_b,
                         const GaussianWeightPrior& prior, const NoiseModel& noise,
                         double n_total, const Matrix& y_mask = Matrix());
void ensemble_step(ParticleEnsemble& ens, const Matrix& x_b, const Matrix& y_b,
                   const GaussianWeightPrior& prior, const NoiseModel& noise,
                   double n_total, Optimizer& opt, Optimizer* noise_opt = nullptr,
                   const Matrix& y_mask = Matrix());

enum class KernelChoice { WeightRbf, FunctionValue, Activation };
KernelChoice kernel_from_string(const std::string& s);

/// Weight-space POVI baselines: gram on the weight vectors (or through the
/// function-value / activation kernels), flow rule on weight-space posterior
/// gradients.
StepGrads weight_povi_grads(const ParticleEnsemble& ens, const Matrix& x_b,
                            const Matrix& y_b, FlowKind flow, KernelChoice kernel,
                            const GaussianWeightPrior& prior, const NoiseModel& noise,
                            double n_total, const Matrix& y_mask = Matrix());
void weight_povi_step(ParticleEnsemble& ens, const Matrix& x_b, const Matrix& y_b,
                      FlowKind flow, KernelChoice kernel, const GaussianWeightPrior& prior,
                      const NoiseModel& noise, double n_total, Optimizer& opt,
                      Optimizer* noise_opt = nullptr, const Matrix& y_mask = Matrix());

}  // namespace fpovi
