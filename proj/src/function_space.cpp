#include "fpovi/function_space.hpp"

#include <cmath>
#include <numeric>

namespace fpovi {

namespace {

// row-major flattening of a B x F value matrix (position-major across outputs)
Vector flatten_rowmajor(const Matrix& m) {
  Vector v(m.size());
  int k = 0;
  for (int r = 0; r < m.rows(); ++r)
    for (int c = 0; c < m.cols(); ++c) v[k++] = m(r, c);
  return v;
}

Matrix unflatten_rowmajor(const Vector& v, int rows, int cols) {
  Matrix m(rows, cols);
  int k = 0;
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = v[k++];
  return m;
}

}  // namespace

GaussianApprox GaussianApprox::from_moments(Vector mean, Matrix cov) {
  if (cov.rows() != cov.cols() || cov.rows() != mean.size())
    throw std::invalid_argument("GaussianApprox: mean/cov shape mismatch");
  if (((cov - cov.transpose()).cwiseAbs().maxCoeff()) > 1e-12 * (1.0 + cov.cwiseAbs().maxCoeff()))
    throw std::invalid_argument("GaussianApprox: covariance not symmetric");
  GaussianApprox g;
  g.mean_ = std::move(mean);
  g.cov_ = 0.5 * (cov + cov.transpose());
  const int m = g.dim();
  double jitter = std::max(1e-6 * g.cov_.trace() / m, 1e-8);
  for (int attempt = 0; attempt <= 3; ++attempt) {
    g.llt_.compute(g.cov_ + jitter * Matrix::Identity(m, m));
    if (g.llt_.info() == Eigen::Success) {
      g.jitter_ = jitter;
      return g;
    }
    jitter *= 10.0;
  }
  throw std::runtime_error("GaussianApprox: Cholesky failed after jitter escalation");
}

Vector GaussianApprox::grad_log_density(const Vector& f) const {
  if (f.size() != dim()) throw std::invalid_argument("GaussianApprox: value dim mismatch");
  return -llt_.solve(f - mean_);
}

double GaussianApprox::log_det() const {
  double ld = 0.0;
  for (int i = 0; i < dim(); ++i) ld += std::log(llt_.matrixL()(i, i));
  return 2.0 * ld;
}

double GaussianApprox::log_density(const Vector& f) const {
  Vector r = f - mean_;
  double quad = r.dot(llt_.solve(r));
  return -0.5 * (dim() * std::log(2.0 * M_PI) + log_det() + quad);
}

ComposedBatch compose_batch(const Dataset& train, const KdeSampler& nu, int B,
                            int B_prime, Rng& rng) {
  if (B_prime >= B) throw std::invalid_argument("compose_batch: need B' < B");
  if (B_prime < 1) throw std::invalid_argument("compose_batch: need B' >= 1");
  if (B_prime > train.size())
    throw std::invalid_argument("compose_batch: B' exceeds training set size");
  // uniform without replacement: partial Fisher-Yates over the index set
  std::vector<int> idx(train.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < B_prime; ++i) {
    std::uniform_int_distribution<int> pick(i, train.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  ComposedBatch b;
  b.x_b.resize(B_prime, train.X.cols());
  b.y_b.resize(B_prime, train.Y.cols());
  for (int i = 0; i < B_prime; ++i) {
    b.x_b.row(i) = train.X.row(idx[i]);
    b.y_b.row(i) = train.Y.row(idx[i]);
  }
  b.x_tilde = nu.sample(B - B_prime, rng);
  return b;
}

GaussianApprox gp_prior_moments(const NetworkSpec& spec,
                                const GaussianWeightPrior& weight_prior,
                                const Matrix& x, int k_draws, Rng& rng) {
  if (k_draws < 2) throw std::invalid_argument("gp_prior_moments: need k_draws >= 2");
  if (x.rows() < 1) throw std::invalid_argument("gp_prior_moments: empty batch");
  const int m = static_cast<int>(x.rows()) * spec.output_dim();
  Matrix draws(k_draws, m);
  for (int j = 0; j < k_draws; ++j) {
    Vector theta = sample_weight_prior(spec, weight_prior, rng);
    draws.row(j) = flatten_rowmajor(forward(theta, spec, x)).transpose();
  }
  Vector mean = draws.colwise().mean().transpose();
  Matrix centered = draws.rowwise() - mean.transpose();
  Matrix cov = centered.transpose() * centered / static_cast<double>(k_draws - 1);
  return GaussianApprox::from_moments(std::move(mean), std::move(cov));
}

Vector prior_grad(const GaussianApprox& approx, const Vector& f_vals) {
  return approx.grad_log_density(f_vals);
}

namespace {

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (int r = 0; r < p.rows(); ++r) {
    Eigen::RowVectorXd row = p.row(r);
    double mx = row.maxCoeff();
    Eigen::RowVectorXd e = (row.array() - mx).exp();
    p.row(r) = e / e.sum();
  }
  return p;
}

}  // namespace

Matrix likelihood_grad(const Matrix& f_vals, const Matrix& y, const NoiseModel& noise,
                       double n_total, double sigma2_override, const Matrix& y_mask) {
  const double scale = n_total / static_cast<double>(f_vals.rows());
  if (noise.kind == NoiseKind::Categorical) {
    if (y_mask.size() > 0)
      throw std::invalid_argument("likelihood_grad: mask unsupported for class labels");
    if (y.cols() != 1 || y.rows() != f_vals.rows())
      throw std::invalid_argument("likelihood_grad: class labels must be one column");
    Matrix sm = softmax_rows(f_vals);
    Matrix g = -sm;
    for (int r = 0; r < f_vals.rows(); ++r) {
      int cls = static_cast<int>(y(r, 0));
      if (cls < 0 || cls >= f_vals.cols())
        throw std::invalid_argument("likelihood_grad: class label out of range");
      g(r, cls) += 1.0;
    }
    g *= scale;
    if (!g.allFinite()) throw std::runtime_error("likelihood_grad: non-finite signal");
    return g;
  }
  if (y.rows() != f_vals.rows() || y.cols() != f_vals.cols())
    throw std::invalid_argument("likelihood_grad: shape mismatch");
  double s2 = sigma2_override > 0.0 ? sigma2_override : noise.sigma_y2;
  Matrix g = scale * (y - f_vals) / s2;
  if (y_mask.size() > 0) {
    if (y_mask.rows() != y.rows() || y_mask.cols() != y.cols())
      throw std::invalid_argument("likelihood_grad: mask shape mismatch");
    g = g.cwiseProduct(y_mask);
  }
  if (!g.allFinite()) throw std::runtime_error("likelihood_grad: non-finite signal");
  return g;
}

FunctionTarget make_minibatch_target(const Dataset& train, const KdeSampler& nu,
                                     const NetworkSpec& spec, double sigma_w2,
                                     int B_lik, int B_prior, int k_draws, Rng& rng) {
  ComposedBatch batch = compose_batch(train, nu, B_lik + B_prior, B_lik, rng);
  FunctionTarget t;
  t.x = batch.joined();
  t.lik_pos.resize(B_lik);
  std::iota(t.lik_pos.begin(), t.lik_pos.end(), 0);
  t.y = batch.y_b;
  t.prior_pos.resize(B_prior);
  std::iota(t.prior_pos.begin(), t.prior_pos.end(), B_lik);
  t.prior = gp_prior_moments(spec, GaussianWeightPrior(sigma_w2, true), batch.x_tilde,
                             k_draws, rng);
  t.lik_scale = static_cast<double>(train.size()) / B_lik;
  return t;
}

namespace {

double particle_sigma2(const ParticleEnsemble& ens, const NoiseModel& noise, int i) {
  if (noise.kind == NoiseKind::InferredGaussian) {
    if (!ens.noise_inferred())
      throw std::invalid_argument("inferred noise model but ensemble has no log-noise");
    return std::exp(ens.log_noise[i]);
  }
  return noise.sigma_y2;
}

}  // namespace

StepGrads fpovi_grads(const ParticleEnsemble& ens, const FunctionTarget& target,
                      FlowKind flow, const NoiseModel& noise) {
  const int n = ens.n_particles();
  const int m = static_cast<int>(target.x.rows());
  const int F = ens.spec.output_dim();
  const bool categorical = noise.kind == NoiseKind::Categorical;

  std::vector<Matrix> fvals(n);
  Matrix feats(n, m * F);
  Matrix fsg(n, m * F);  // function-space log-posterior gradients
  for (int i = 0; i < n; ++i) {
    Matrix f = ens.predict(i, target.x);
    if (categorical) f = (f.array().colwise() - f.rowwise().mean().array()).matrix();
    fvals[i] = f;
    feats.row(i) = flatten_rowmajor(f).transpose();

    Matrix g = Matrix::Zero(m, F);
    if (!target.prior_pos.empty()) {
      Vector fp(static_cast<int>(target.prior_pos.size()) * F);
      int k = 0;
      for (int p : target.prior_pos)
        for (int c = 0; c < F; ++c) fp[k++] = f(p, c);
      Vector pg = target.prior.grad_log_density(fp);
      k = 0;
      for (int p : target.prior_pos)
        for (int c = 0; c < F; ++c) g(p, c) += pg[k++];
    }
    if (!target.lik_pos.empty()) {
      Matrix fl(static_cast<int>(target.lik_pos.size()), F);
      for (std::size_t r = 0; r < target.lik_pos.size(); ++r)
        fl.row(r) = fvals[i].row(target.lik_pos[r]);
      Matrix lg = likelihood_grad(fl, target.y, noise,
                                  target.lik_scale * target.lik_pos.size(),
                                  particle_sigma2(ens, noise, i), target.y_mask);
      for (std::size_t r = 0; r < target.lik_pos.size(); ++r)
        g.row(target.lik_pos[r]) += lg.row(r);
    }
    fsg.row(i) = flatten_rowmajor(g).transpose();
  }

  GramPack gram;
  if (n == 1) {
    gram.K = Matrix::Ones(1, 1);
    gram.h = 1.0;
    gram.points = feats;
  } else {
    gram = rbf_gram(feats, median_bandwidth(feats));
  }
  Matrix dirs = flow_directions(flow, gram, fsg);

  StepGrads out;
  out.dparams.resize(n, ens.spec.param_count());
  for (int i = 0; i < n; ++i) {
    if (!dirs.row(i).allFinite())
      throw std::runtime_error("fpovi: non-finite direction for particle " +
                               std::to_string(i));
    Matrix v = unflatten_rowmajor(dirs.row(i).transpose(), m, F);
    if (categorical) v = (v.array().colwise() - v.rowwise().mean().array()).matrix();
    out.dparams.row(i) = backprop_top_signal(ens.particle(i), ens.spec, target.x, v).transpose();
  }

  if (noise.kind == NoiseKind::InferredGaussian) {
    out.dnoise.resize(n);
    for (int i = 0; i < n; ++i) {
      Vector res(static_cast<int>(target.lik_pos.size()));
      for (std::size_t r = 0; r < target.lik_pos.size(); ++r)
        res[r] = target.y(r, 0) - fvals[i](target.lik_pos[r], 0);
      out.dnoise[i] = noise_grad(res, noise, ens.log_noise[i],
                                 target.lik_scale * target.lik_pos.size(),
                                 static_cast<int>(target.lik_pos.size()));
    }
  }
  return out;
}

namespace {

void apply_step(ParticleEnsemble& ens, const StepGrads& g, Optimizer& opt,
                Optimizer* noise_opt) {
  Matrix upd = opt.step(g.dparams);
  if (!upd.allFinite()) throw std::runtime_error("step update non-finite");
  ens.params += upd;
  if (g.dnoise.size() > 0) {
    Optimizer fallback = Optimizer::constant(opt.lr);
    Optimizer& nopt = noise_opt ? *noise_opt : fallback;
    Matrix nupd = nopt.step(g.dnoise);
    ens.log_noise += nupd.col(0);
  }
  ++ens.iteration;
}

}  // namespace

void fpovi_step(ParticleEnsemble& ens, const FunctionTarget& target, FlowKind flow,
                const NoiseModel& noise, Optimizer& opt, Optimizer* noise_opt) {
  apply_step(ens, fpovi_grads(ens, target, flow, noise), opt, noise_opt);
}

StepGrads ensemble_grads(const ParticleEnsemble& ens, const Matrix& x_b, const Matrix& y_b,
                         const GaussianWeightPrior& prior, const NoiseModel& noise,
                         double n_total, const Matrix& y_mask) {
  const int n = ens.n_particles();
  StepGrads out;
  out.dparams.resize(n, ens.spec.param_count());
  if (noise.kind == NoiseKind::InferredGaussian) out.dnoise.resize(n);
  for (int i = 0; i < n; ++i) {
    Vector theta = ens.particle(i);
    Matrix f = forward(theta, ens.spec, x_b);
    Matrix v = likelihood_grad(f, y_b, noise, n_total, particle_sigma2(ens, noise, i),
                               y_mask);
    Vector g = backprop_top_signal(theta, ens.spec, x_b, v) +
               weight_prior_logp_grad(theta, prior, ens.spec).second;
    if (!g.allFinite())
      throw std::runtime_error("ensemble: non-finite gradient for particle " +
                               std::to_string(i));
    out.dparams.row(i) = g.transpose();
    if (noise.kind == NoiseKind::InferredGaussian) {
      Vector res = (y_b - f).col(0);
      out.dnoise[i] = noise_grad(res, noise, ens.log_noise[i], n_total,
                                 static_cast<int>(x_b.rows()));
    }
  }
  return out;
}

void ensemble_step(ParticleEnsemble& ens, const Matrix& x_b, const Matrix& y_b,
                   const GaussianWeightPrior& prior, const NoiseModel& noise,
                   double n_total, Optimizer& opt, Optimizer* noise_opt,
                   const Matrix& y_mask) {
  apply_step(ens, ensemble_grads(ens, x_b, y_b, prior, noise, n_total, y_mask), opt,
             noise_opt);
}

KernelChoice kernel_from_string(const std::string& s) {
  if (s == "rbf_on_weights" || s == "rbf") return KernelChoice::WeightRbf;
  if (s == "function_value") return KernelChoice::FunctionValue;
  if (s == "activation") return KernelChoice::Activation;
  throw std::invalid_argument("unknown kernel choice: " + s);
}

StepGrads weight_povi_grads(const ParticleEnsemble& ens, const Matrix& x_b,
                            const Matrix& y_b, FlowKind flow, KernelChoice kernel,
                            const GaussianWeightPrior& prior, const NoiseModel& noise,
                            double n_total, const Matrix& y_mask) {
  const int n = ens.n_particles();

  // weight-space log-posterior gradients
  Matrix grads(n, ens.spec.param_count());
  for (int i = 0; i < n; ++i) {
    Vector theta = ens.particle(i);
    Matrix f = forward(theta, ens.spec, x_b);
    Matrix v = likelihood_grad(f, y_b, noise, n_total, particle_sigma2(ens, noise, i),
                               y_mask);
    grads.row(i) = (backprop_top_signal(theta, ens.spec, x_b, v) +
                    weight_prior_logp_grad(theta, prior, ens.spec).second)
                       .transpose();
  }

  Matrix dirs;
  if (kernel == KernelChoice::WeightRbf) {
    GramPack gram;
    if (n == 1) {
      gram.K = Matrix::Ones(1, 1);
      gram.h = 1.0;
      gram.points = ens.params;
    } else {
      gram = rbf_gram(ens.params, median_bandwidth(ens.params));
    }
    dirs = flow_directions(flow, gram, grads);
  } else {
    // kernel on per-particle feature vectors; its gradient w.r.t. theta_j is
    // backprop of the feature-space pair gradient through particle j's net
    const bool fv = kernel == KernelChoice::FunctionValue;
    GramPack gram = fv ? function_value_gram(ens, x_b) : activation_gram(ens, x_b);
    const Matrix& feats = gram.points;
    const int rows = static_cast<int>(x_b.rows());
    PairGrad pg = [&](int i, int j) -> Vector {
      if (i == j) return Vector::Zero(ens.spec.param_count());
      Vector s = (2.0 / gram.h) * gram.K(i, j) *
                 (feats.row(i) - feats.row(j)).transpose();
      Matrix sig = unflatten_rowmajor(s, rows, static_cast<int>(s.size()) / rows);
      if (fv)
        return backprop_top_signal(ens.particle(j), ens.spec, x_b, sig);
      return backprop_activation_signal(ens.particle(j), ens.spec, x_b, sig);
    };
    dirs = flow_directions(flow, gram.K, grads, pg);
  }

  StepGrads out;
  out.dparams = dirs;
  for (int i = 0; i < n; ++i)
    if (!out.dparams.row(i).allFinite())
      throw std::runtime_error("weight povi: non-finite direction for particle " +
                               std::to_string(i));
  if (noise.kind == NoiseKind::InferredGaussian) {
    out.dnoise.resize(n);
    for (int i = 0; i < n; ++i) {
      Matrix f = ens.predict(i, x_b);
      Vector res = (y_b - f).col(0);
      out.dnoise[i] = noise_grad(res, noise, ens.log_noise[i], n_total,
                                 static_cast<int>(x_b.rows()));
    }
  }
  return out;
}

void weight_povi_step(ParticleEnsemble& ens, const Matrix& x_b, const Matrix& y_b,
                      FlowKind flow, KernelChoice kernel, const GaussianWeightPrior& prior,
                      const NoiseModel& noise, double n_total, Optimizer& opt,
                      Optimizer* noise_opt, const Matrix& y_mask) {
  apply_step(ens,
             weight_povi_grads(ens, x_b, y_b, flow, kernel, prior, noise, n_total, y_mask),
             opt, noise_opt);
}

}  // namespace fpovi
