#include "fpovi/oracles.hpp"

#include <cmath>

namespace fpovi {

KernelFn rbf_kernel_fn(double bandwidth) {
  if (bandwidth <= 0.0) throw std::invalid_argument("kernel bandwidth must be positive");
  const double denom = 2.0 * bandwidth * bandwidth;
  return [denom](const Vector& a, const Vector& b) {
    return std::exp(-(a - b).squaredNorm() / denom);
  };
}

namespace {

Matrix gram(const KernelFn& k, const Matrix& A, const Matrix& B) {
  Matrix K(A.rows(), B.rows());
  for (int i = 0; i < A.rows(); ++i)
    for (int j = 0; j < B.rows(); ++j)
      K(i, j) = k(A.row(i).transpose(), B.row(j).transpose());
  return K;
}

}  // namespace

GpPosterior gp_posterior(const KernelFn& k, const Matrix& X_train, const Vector& Y_train,
                         const Matrix& X_test, double sigma2) {
  if (sigma2 < 0.0) throw std::invalid_argument("gp_posterior: sigma2 must be >= 0");
  if (X_train.rows() != Y_train.size())
    throw std::invalid_argument("gp_posterior: X/Y size mismatch");
  const int r = static_cast<int>(X_train.rows());
  Matrix Krr = gram(k, X_train, X_train) + sigma2 * Matrix::Identity(r, r);
  Eigen::LLT<Matrix> llt(Krr);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("gp_posterior: Cholesky of K_rr + sigma2 I failed "
                             "(min diag " + std::to_string(Krr.diagonal().minCoeff()) + ")");
  Matrix Ktr = gram(k, X_test, X_train);
  Matrix Ktt = gram(k, X_test, X_test);
  GpPosterior post;
  post.mean = Ktr * llt.solve(Y_train);
  post.cov = Ktt - Ktr * llt.solve(Ktr.transpose());
  post.cov = 0.5 * (post.cov + post.cov.transpose());
  return post;
}

ExactFpovi::ExactFpovi(const Matrix& K_XX, std::vector<int> train_pos, Vector y_train,
                       double sigma2)
    : train_pos_(std::move(train_pos)),
      y_train_(std::move(y_train)),
      sigma2_(sigma2),
      dim_(static_cast<int>(K_XX.rows())) {
  if (static_cast<int>(train_pos_.size()) != y_train_.size())
    throw std::invalid_argument("ExactFpovi: train positions/targets mismatch");
  Matrix Kj = K_XX + 1e-10 * Matrix::Identity(dim_, dim_);
  prior_llt_.compute(Kj);
  if (prior_llt_.info() != Eigen::Success)
    throw std::runtime_error("ExactFpovi: prior gram not PD after jitter");
}

Matrix ExactFpovi::log_posterior_grads(const FunctionParticleSet& particles) const {
  if (particles.values.cols() != dim_)
    throw std::invalid_argument("ExactFpovi: particle dimension mismatch");
  const int n = particles.n_particles();
  Matrix grads(n, dim_);
  for (int i = 0; i < n; ++i) {
    Vector f = particles.values.row(i).transpose();
    Vector g = -prior_llt_.solve(f);
    for (std::size_t r = 0; r < train_pos_.size(); ++r)
      g[train_pos_[r]] += (y_train_[r] - f[train_pos_[r]]) / sigma2_;
    grads.row(i) = g.transpose();
  }
  return grads;
}

void ExactFpovi::step(FunctionParticleSet& particles, FlowKind flow, double step_size) const {
  Matrix grads = log_posterior_grads(particles);
  GramPack g;
  if (particles.n_particles() == 1) {
    g.K = Matrix::Ones(1, 1);
    g.h = 1.0;
    g.points = particles.values;
  } else {
    g = rbf_gram(particles.values, median_bandwidth(particles.values));
  }
  Matrix dirs = flow_directions(flow, g, grads);
  if (!dirs.allFinite()) throw std::runtime_error("ExactFpovi: non-finite direction");
  particles.values += step_size * dirs;
}

HmcResult hmc_sample(const std::function<double(const Vector&)>& log_density,
                     const std::function<Vector(const Vector&)>& grad,
                     const Vector& init, double step_size, int leapfrog_steps,
                     int n_samples, int burn_in, Rng& rng) {
  if (step_size <= 0.0 || leapfrog_steps < 1)
    throw std::invalid_argument("hmc_sample: bad step size or leapfrog count");
  const int d = static_cast<int>(init.size());
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  Vector q = init;
  double logp = log_density(q);
  HmcResult res;
  res.samples.resize(n_samples, d);
  long accepted = 0, burn_accept = 0, total = 0;
  for (int s = 0; s < burn_in + n_samples; ++s) {
    Vector p(d);
    for (int i = 0; i < d; ++i) p[i] = gauss(rng);
    Vector q_new = q;
    Vector p_new = p;
    double h0 = -logp + 0.5 * p.squaredNorm();
    // leapfrog
    p_new += 0.5 * step_size * grad(q_new);
    for (int l = 0; l < leapfrog_steps; ++l) {
      q_new += step_size * p_new;
      if (l + 1 < leapfrog_steps) p_new += step_size * grad(q_new);
    }
    p_new += 0.5 * step_size * grad(q_new);
    double logp_new = log_density(q_new);
    double h1 = -logp_new + 0.5 * p_new.squaredNorm();
    ++total;
    bool accept = std::isfinite(h1) && unif(rng) < std::exp(h0 - h1);
    if (accept) {
      q = q_new;
      logp = logp_new;
      ++accepted;
      if (s < burn_in) ++burn_accept;
    }
    if (s == burn_in - 1 && burn_accept == 0)
      throw std::runtime_error("hmc_sample: zero acceptance over burn-in, retune step size");
    if (s >= burn_in) res.samples.row(s - burn_in) = q.transpose();
  }
  res.acceptance_rate = static_cast<double>(accepted) / total;
  return res;
}

GaussianApprox mvn_fit(const Matrix& samples) {
  const int n = static_cast<int>(samples.rows());
  const int m = static_cast<int>(samples.cols());
  if (n <= m) throw std::invalid_argument("mvn_fit: need more samples than dimensions");
  Vector mean = samples.colwise().mean().transpose();
  Matrix centered = samples.rowwise() - mean.transpose();
  Matrix cov = centered.transpose() * centered / static_cast<double>(n - 1);
  return GaussianApprox::from_moments(std::move(mean), std::move(cov));
}

double mvn_kl(const GaussianApprox& a, const GaussianApprox& b) {
  if (a.dim() != b.dim()) throw std::invalid_argument("mvn_kl: dimension mismatch");
  const int m = a.dim();
  Matrix Sa = a.cov() + a.jitter() * Matrix::Identity(m, m);
  Matrix Sb_inv_Sa = b.solve_matrix(Sa);
  Vector dmu = b.mean() - a.mean();
  double kl = 0.5 * (Sb_inv_Sa.trace() + dmu.dot(b.solve(dmu)) - m +
                     b.log_det() - a.log_det());
  return kl;
}

KernelFn FiniteGpFixture::kernel() const {
  KernelFn rbf = rbf_kernel_fn(bandwidth);
  double wn = white_noise;
  return [rbf, wn](const Vector& a, const Vector& b) {
    double k = rbf(a, b);
    if ((a - b).squaredNorm() < 1e-24) k += wn;
    return k;
  };
}

Matrix FiniteGpFixture::x_train() const {
  Matrix out(train_pos.size(), 1);
  for (std::size_t i = 0; i < train_pos.size(); ++i) out(i, 0) = X(train_pos[i], 0);
  return out;
}

Matrix FiniteGpFixture::x_test() const {
  Matrix out(test_pos.size(), 1);
  for (std::size_t i = 0; i < test_pos.size(); ++i) out(i, 0) = X(test_pos[i], 0);
  return out;
}

FiniteGpFixture make_finite_gp_fixture(Rng& rng) {
  FiniteGpFixture fx;
  std::vector<double> xs;
  for (int i = 0; i <= 20; ++i) xs.push_back(-2.0 + 0.2 * i);
  const int n_train = static_cast<int>(xs.size());
  xs.push_back(1.7);
  xs.push_back(1.9);
  xs.push_back(2.1);
  fx.X.resize(xs.size(), 1);
  for (std::size_t i = 0; i < xs.size(); ++i) fx.X(i, 0) = xs[i];
  for (int i = 0; i < n_train; ++i) fx.train_pos.push_back(i);
  for (std::size_t i = n_train; i < xs.size(); ++i)
    fx.test_pos.push_back(static_cast<int>(i));

  std::normal_distribution<double> noise(0.0, 0.1);
  fx.y_train.resize(n_train);
  for (int i = 0; i < n_train; ++i) fx.y_train[i] = std::sin(xs[i]) + noise(rng);

  KernelFn k = fx.kernel();
  fx.K_XX = gram(k, fx.X, fx.X);
  return fx;
}

GpPosterior downsampled_baseline(const FiniteGpFixture& fx) {
  // down-sampled training grid {-2, -1.6, ..., 2}: every other training point
  std::vector<int> keep;
  for (std::size_t i = 0; i < fx.train_pos.size(); i += 2) keep.push_back(fx.train_pos[i]);
  Matrix xd(keep.size(), 1);
  Vector yd(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    xd(i, 0) = fx.X(keep[i], 0);
    yd[i] = fx.y_train[keep[i]];
  }
  return gp_posterior(fx.kernel(), xd, yd, fx.x_test(), fx.sigma2);
}

}  // namespace fpovi
