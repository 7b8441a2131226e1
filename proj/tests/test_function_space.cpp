#include <numeric>

#include "fpovi/function_space.hpp"
#include "fpovi/oracles.hpp"
#include "util.hpp"

using namespace fpovi;
using testutil::fd_gradient;
using testutil::random_matrix;
using testutil::random_vector;
using testutil::rel_err;

TEST_CASE("GaussianApprox: moments, jitter floor, shape validation") {
  Vector mean(2);
  mean << 1.0, -2.0;
  GaussianApprox g = GaussianApprox::from_moments(mean, Matrix::Zero(2, 2));
  CHECK(g.jitter() == doctest::Approx(1e-8));
  CHECK(g.mean() == mean);

  CHECK_THROWS(GaussianApprox::from_moments(mean, Matrix::Zero(3, 3)));
  Matrix asym(2, 2);
  asym << 1.0, 0.5, -0.5, 1.0;
  CHECK_THROWS(GaussianApprox::from_moments(mean, asym));
}

TEST_CASE("GaussianApprox: 1-d closed forms") {
  Vector mu = Vector::Constant(1, 2.0);
  Matrix cov = Matrix::Constant(1, 1, 4.0);
  GaussianApprox g = GaussianApprox::from_moments(mu, cov);
  const double v = 4.0 + g.jitter();
  Vector f = Vector::Constant(1, 3.5);
  CHECK(g.grad_log_density(f)[0] == doctest::Approx(-(3.5 - 2.0) / v));
  CHECK(g.log_density(f) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI * v) - 0.5 * 1.5 * 1.5 / v));
  CHECK(g.log_det() == doctest::Approx(std::log(v)));
}

TEST_CASE("GaussianApprox: gradient matches finite differences, solve inverts") {
  Rng rng(3);
  Matrix a = random_matrix(4, 4, rng);
  Matrix cov = a * a.transpose() + Matrix::Identity(4, 4);
  Vector mu = random_vector(4, rng);
  GaussianApprox g = GaussianApprox::from_moments(mu, cov);
  Vector f = random_vector(4, rng);
  Vector grad = g.grad_log_density(f);
  Vector fd = fd_gradient([&](const Vector& x) { return g.log_density(x); }, f);
  CHECK(rel_err(grad, fd) < 1e-5);

  Matrix cj = g.cov() + g.jitter() * Matrix::Identity(4, 4);
  CHECK((cj * g.solve(f) - f).cwiseAbs().maxCoeff() < 1e-10);
  Matrix rhs = random_matrix(4, 2, rng);
  CHECK((cj * g.solve_matrix(rhs) - rhs).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("compose_batch: shapes, membership, validation") {
  Rng rng(5);
  Dataset train;
  train.X = random_matrix(10, 2, rng);
  train.Y = random_matrix(10, 1, rng);
  KdeSampler nu = KdeSampler::silverman(train.X);
  ComposedBatch b = compose_batch(train, nu, 7, 3, rng);
  CHECK(b.x_b.rows() == 3);
  CHECK(b.y_b.rows() == 3);
  CHECK(b.x_tilde.rows() == 4);
  CHECK(b.joined().rows() == 7);

  // training rows are drawn without replacement from the dataset
  for (int i = 0; i < 3; ++i) {
    int hits = 0;
    for (int r = 0; r < 10; ++r)
      if ((b.x_b.row(i) - train.X.row(r)).norm() == 0.0) ++hits;
    CHECK(hits == 1);
    for (int j = i + 1; j < 3; ++j)
      CHECK((b.x_b.row(i) - b.x_b.row(j)).norm() > 0.0);
  }

  CHECK_THROWS(compose_batch(train, nu, 3, 3, rng));
  CHECK_THROWS(compose_batch(train, nu, 3, 0, rng));
  CHECK_THROWS(compose_batch(train, nu, 20, 11, rng));
}

TEST_CASE("compose_batch: uniform selection frequency over anchors") {
  Rng rng(7);
  Dataset train;
  train.X = Matrix::Zero(4, 1);
  for (int i = 0; i < 4; ++i) train.X(i, 0) = i;
  train.Y = train.X;
  KdeSampler nu(train.X, Vector::Ones(1));
  std::vector<int> counts(4, 0);
  const int trials = 8000;
  for (int t = 0; t < trials; ++t) {
    ComposedBatch b = compose_batch(train, nu, 2, 1, rng);
    ++counts[static_cast<int>(b.x_b(0, 0))];
  }
  // each row picked with probability 1/4; 4 sigma of a binomial
  double expect = trials / 4.0;
  double sd = std::sqrt(trials * 0.25 * 0.75);
  for (int c : counts) CHECK(std::abs(c - expect) < 4.0 * sd);
}

TEST_CASE("gp_prior_moments: single-layer linear net has cov sigma_w2 (x x' + 1)") {
  // widths {1,1}: f(x) = w x + b with w, b ~ N(0, sigma_w2)
  NetworkSpec spec({1, 1});
  Rng rng(11);
  Matrix x(2, 1);
  x << 0.5, -1.5;
  const double sw2 = 0.8;
  GaussianApprox g = gp_prior_moments(spec, GaussianWeightPrior(sw2, true), x, 40000, rng);
  CHECK(std::abs(g.mean()[0]) < 0.05);
  CHECK(g.cov()(0, 0) == doctest::Approx(sw2 * (0.25 + 1.0)).epsilon(0.05));
  CHECK(g.cov()(1, 1) == doctest::Approx(sw2 * (2.25 + 1.0)).epsilon(0.05));
  CHECK(g.cov()(0, 1) == doctest::Approx(sw2 * (0.5 * -1.5 + 1.0)).epsilon(0.05));
}

TEST_CASE("gp_prior_moments: relu layer matches the arc-cosine covariance") {
  // One hidden relu layer in fan-in mode. Pre-activations u(x) = w x + b are
  // jointly Gaussian with cov sw2 (x x' + 1); independent output weights of
  // variance sw2 / H plus the output bias give, exactly at any width,
  //   cov(f(x), f(x')) = sw2 + sw2 * E[relu(u) relu(u')]
  // with the arc-cosine expectation (su su' / 2pi)(sin t + (pi - t) cos t).
  NetworkSpec spec({1, 400, 1});
  Rng rng(13);
  Matrix x(2, 1);
  x << 0.7, 1.3;
  const double sw2 = 1.2;
  auto analytic = [&](double xa, double xb) {
    const double va = sw2 * (xa * xa + 1.0), vb = sw2 * (xb * xb + 1.0);
    const double rho = sw2 * (xa * xb + 1.0) / std::sqrt(va * vb);
    const double t = std::acos(std::min(1.0, rho));
    const double e = std::sqrt(va * vb) / (2.0 * M_PI) *
                     (std::sin(t) + (M_PI - t) * std::cos(t));
    return sw2 + sw2 * e;
  };
  GaussianApprox g = gp_prior_moments(spec, GaussianWeightPrior(sw2, true), x, 20000, rng);
  CHECK(g.cov()(0, 0) == doctest::Approx(analytic(0.7, 0.7)).epsilon(0.1));
  CHECK(g.cov()(1, 1) == doctest::Approx(analytic(1.3, 1.3)).epsilon(0.1));
  CHECK(g.cov()(0, 1) == doctest::Approx(analytic(0.7, 1.3)).epsilon(0.1));
}

TEST_CASE("prior_grad: zero at the mean, matches the density gradient") {
  Rng rng(17);
  Matrix a = random_matrix(3, 3, rng);
  GaussianApprox g = GaussianApprox::from_moments(random_vector(3, rng),
                                                 a * a.transpose() + Matrix::Identity(3, 3));
  CHECK(prior_grad(g, g.mean()).cwiseAbs().maxCoeff() < 1e-12);
  Vector f = random_vector(3, rng);
  CHECK((prior_grad(g, f) - g.grad_log_density(f)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("likelihood_grad: gaussian scaling, override, mask") {
  Matrix f(2, 1), y(2, 1);
  f << 0.0, 1.0;
  y << 1.0, 1.0;
  // N = 10, B = 2 -> scale 5; sigma2 = 0.5
  Matrix g = likelihood_grad(f, y, NoiseModel::fixed_gaussian(0.5), 10.0);
  CHECK(g(0, 0) == doctest::Approx(5.0 * 1.0 / 0.5));
  CHECK(g(1, 0) == doctest::Approx(0.0));

  Matrix g2 = likelihood_grad(f, y, NoiseModel::fixed_gaussian(0.5), 10.0, 2.0);
  CHECK(g2(0, 0) == doctest::Approx(5.0 * 1.0 / 2.0));

  Matrix mask = Matrix::Zero(2, 1);
  mask(1, 0) = 1.0;
  Matrix gm = likelihood_grad(f, y, NoiseModel::fixed_gaussian(0.5), 10.0, -1.0, mask);
  CHECK(gm(0, 0) == 0.0);
  CHECK(gm(1, 0) == 0.0);
}

TEST_CASE("likelihood_grad: categorical softmax signal") {
  Matrix f(1, 2);
  f << 0.0, 0.0;
  Matrix y(1, 1);
  y << 0.0;
  Matrix g = likelihood_grad(f, y, NoiseModel::categorical(), 6.0);
  // softmax is (1/2, 1/2); scale N/B = 6
  CHECK(g(0, 0) == doctest::Approx(6.0 * 0.5));
  CHECK(g(0, 1) == doctest::Approx(-6.0 * 0.5));

  Matrix bad_y(1, 1);
  bad_y << 5.0;
  CHECK_THROWS(likelihood_grad(f, bad_y, NoiseModel::categorical(), 6.0));
  Matrix mask = Matrix::Ones(1, 1);
  CHECK_THROWS(likelihood_grad(f, y, NoiseModel::categorical(), 6.0, -1.0, mask));
}

TEST_CASE("make_minibatch_target: layout and scale") {
  Rng rng(19);
  Dataset train;
  train.X = random_matrix(30, 1, rng);
  train.Y = random_matrix(30, 1, rng);
  KdeSampler nu = KdeSampler::silverman(train.X);
  NetworkSpec spec({1, 5, 1});
  FunctionTarget t = make_minibatch_target(train, nu, spec, 1.4, 6, 4, 20, rng);
  CHECK(t.x.rows() == 10);
  CHECK(t.lik_pos == std::vector<int>({0, 1, 2, 3, 4, 5}));
  CHECK(t.prior_pos == std::vector<int>({6, 7, 8, 9}));
  CHECK(t.y.rows() == 6);
  CHECK(t.prior.dim() == 4);
  CHECK(t.lik_scale == doctest::Approx(30.0 / 6.0));
}

namespace {

FunctionTarget full_batch_target(const Dataset& train, const GaussianApprox& prior) {
  FunctionTarget t;
  t.x = train.X;
  t.lik_pos.resize(train.size());
  std::iota(t.lik_pos.begin(), t.lik_pos.end(), 0);
  t.y = train.Y;
  t.prior_pos = t.lik_pos;
  t.prior = prior;
  t.lik_scale = 1.0;
  return t;
}

}  // namespace

TEST_CASE("fpovi_step: zero step size leaves the ensemble unchanged") {
  Rng rng(23);
  Dataset train = gen_synthetic_1d(rng);
  NetworkSpec spec({1, 8, 1});
  ParticleEnsemble ens(spec, 3, 1.4, rng);
  Matrix before = ens.params;
  GaussianApprox prior = gp_prior_moments(spec, GaussianWeightPrior(1.4, true), train.X, 30, rng);
  FunctionTarget t = full_batch_target(train, prior);
  Optimizer opt = Optimizer::constant(0.0);
  fpovi_step(ens, t, FlowKind::SVGD, NoiseModel::fixed_gaussian(0.01), opt);
  CHECK(ens.params == before);
  CHECK(ens.iteration == 1);
}

TEST_CASE("fpovi n=1 direction is the backprop of prior + likelihood signals") {
  Rng rng(29);
  Dataset train = gen_synthetic_1d(rng);
  NetworkSpec spec({1, 6, 1});
  ParticleEnsemble ens(spec, 1, 1.4, rng);
  GaussianApprox prior = gp_prior_moments(spec, GaussianWeightPrior(1.4, true), train.X, 30, rng);
  FunctionTarget t = full_batch_target(train, prior);
  NoiseModel noise = NoiseModel::fixed_gaussian(0.01);
  StepGrads g = fpovi_grads(ens, t, FlowKind::SVGD, noise);

  Matrix f = ens.predict(0, train.X);
  Matrix signal = Matrix::Zero(train.size(), 1);
  signal.col(0) = prior.grad_log_density(f.col(0));
  signal += likelihood_grad(f, train.Y, noise, static_cast<double>(train.size()));
  Vector expect = backprop_top_signal(ens.particle(0), spec, train.X, signal);
  CHECK((g.dparams.row(0).transpose() - expect).cwiseAbs().maxCoeff() <
        1e-10 * (1.0 + expect.cwiseAbs().maxCoeff()));
}

TEST_CASE("fpovi n=1 agrees with the exact function-space posterior gradient") {
  Rng rng(31);
  FiniteGpFixture fx = make_finite_gp_fixture(rng);
  NetworkSpec spec({1, 10, 1});
  ParticleEnsemble ens(spec, 1, 1.4, rng);

  FunctionTarget t;
  t.x = fx.X;
  t.lik_pos = fx.train_pos;
  t.y = fx.y_train;
  t.prior_pos.resize(fx.X.rows());
  std::iota(t.prior_pos.begin(), t.prior_pos.end(), 0);
  t.prior = GaussianApprox::from_moments(Vector::Zero(fx.X.rows()), fx.K_XX);
  t.lik_scale = 1.0;
  StepGrads g = fpovi_grads(ens, t, FlowKind::SVGD, NoiseModel::fixed_gaussian(fx.sigma2));

  // the same log-posterior gradient from the finite-dimensional oracle, with
  // its prior Cholesky matched to the jittered one used above
  Matrix K_j = fx.K_XX + t.prior.jitter() * Matrix::Identity(fx.X.rows(), fx.X.rows());
  ExactFpovi oracle(K_j, fx.train_pos, fx.y_train, fx.sigma2);
  FunctionParticleSet ps;
  ps.values = ens.predict(0, fx.X).transpose();
  Matrix og = oracle.log_posterior_grads(ps);
  Matrix signal = og.row(0).transpose();
  Vector expect = backprop_top_signal(ens.particle(0), spec, fx.X, signal);
  CHECK(rel_err(Vector(g.dparams.row(0).transpose()), expect) < 1e-6);
}

TEST_CASE("first-order function change follows the injected direction") {
  Rng rng(37);
  Dataset train = gen_synthetic_1d(rng);
  NetworkSpec spec({1, 6, 1});
  ParticleEnsemble ens(spec, 2, 1.4, rng);
  GaussianApprox prior = gp_prior_moments(spec, GaussianWeightPrior(1.4, true), train.X, 30, rng);
  FunctionTarget t = full_batch_target(train, prior);
  StepGrads g = fpovi_grads(ens, t, FlowKind::SVGD, NoiseModel::fixed_gaussian(0.01));

  const double eps = 1e-7;
  for (int i = 0; i < 2; ++i) {
    Vector theta = ens.particle(i);
    Matrix f0 = forward(theta, spec, train.X);
    Matrix f1 = forward(theta + eps * g.dparams.row(i).transpose(), spec, train.X);
    // numeric Jacobian-vector product
    Matrix jvp = (forward(theta + eps * g.dparams.row(i).transpose(), spec, train.X) -
                  forward(theta - eps * g.dparams.row(i).transpose(), spec, train.X)) /
                 (2.0 * eps);
    CHECK(((f1 - f0) / eps - jvp).cwiseAbs().maxCoeff() <
          1e-4 * (1.0 + jvp.cwiseAbs().maxCoeff()));
    // and the jvp is exactly J * dtheta: check against backprop transpose
    // identity <v, J u> = <J^T v, u> for a random v
    Matrix v = random_matrix(train.size(), 1, rng);
    double lhs = (v.array() * jvp.array()).sum();
    double rhs = backprop_top_signal(theta, spec, train.X, v)
                     .dot(g.dparams.row(i).transpose());
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-4));
  }
}

TEST_CASE("ensemble_step converges to the closed-form ridge MAP") {
  // single linear layer f(x) = w x + b, isotropic prior on (w, b)
  Rng rng(41);
  NetworkSpec spec({1, 1});
  const int N = 12;
  Matrix X = random_matrix(N, 1, rng);
  Matrix Y = 2.0 * X + Matrix::Constant(N, 1, 0.5) + 0.1 * random_matrix(N, 1, rng);
  const double s2 = 0.04, sw2 = 2.0;

  Matrix design(N, 2);
  design.col(0) = X.col(0);
  design.col(1).setOnes();
  Matrix A = design.transpose() * design / s2 + Matrix::Identity(2, 2) / sw2;
  Vector map = A.ldlt().solve(design.transpose() * Y.col(0) / s2);

  ParticleEnsemble ens(spec, 1, sw2, rng);
  GaussianWeightPrior prior(sw2, false);
  NoiseModel noise = NoiseModel::fixed_gaussian(s2);
  Optimizer opt = Optimizer::adam(0.05);
  for (int it = 0; it < 4000; ++it)
    ensemble_step(ens, X, Y, prior, noise, static_cast<double>(N), opt);
  CHECK(std::abs(ens.params(0, 0) - map[0]) < 1e-4);
  CHECK(std::abs(ens.params(0, 1) - map[1]) < 1e-4);
}

TEST_CASE("weight_povi with one particle equals the ensemble gradient") {
  Rng rng(43);
  Dataset train = gen_synthetic_1d(rng);
  NetworkSpec spec({1, 5, 1});
  ParticleEnsemble ens(spec, 1, 1.4, rng);
  GaussianWeightPrior prior(1.4);
  NoiseModel noise = NoiseModel::fixed_gaussian(0.01);
  StepGrads a = ensemble_grads(ens, train.X, train.Y, prior, noise, 20.0);
  for (KernelChoice k :
       {KernelChoice::WeightRbf, KernelChoice::FunctionValue, KernelChoice::Activation}) {
    StepGrads b = weight_povi_grads(ens, train.X, train.Y, FlowKind::SVGD, k, prior,
                                    noise, 20.0);
    CHECK((a.dparams - b.dparams).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("function-value kernel sees permuted particles as identical") {
  NetworkSpec spec({1, 4, 1});
  Rng rng(47);
  ParticleEnsemble ens(spec, 2, 1.4, rng);
  StructuredParams sp = unflatten(ens.particle(0), spec);
  StructuredParams pp = sp;
  std::vector<int> perm{3, 1, 0, 2};
  for (int u = 0; u < 4; ++u) {
    pp.weights[0].row(u) = sp.weights[0].row(perm[u]);
    pp.biases[0][u] = sp.biases[0][perm[u]];
    pp.weights[1].col(u) = sp.weights[1].col(perm[u]);
  }
  ens.params.row(1) = flatten(pp, spec).transpose();
  Matrix X = random_matrix(8, 1, rng);
  GramPack fk = function_value_gram(ens, X);
  CHECK(fk.K(0, 1) == doctest::Approx(1.0));
  GramPack wk = rbf_gram(ens.params, median_bandwidth(ens.params));
  CHECK(wk.K(0, 1) < 1.0);
}

TEST_CASE("fpovi_grads is deterministic given identical inputs") {
  Rng rng(53);
  Dataset train = gen_synthetic_1d(rng);
  NetworkSpec spec({1, 6, 1});
  ParticleEnsemble ens(spec, 4, 1.4, rng);
  GaussianApprox prior = gp_prior_moments(spec, GaussianWeightPrior(1.4, true), train.X, 30, rng);
  FunctionTarget t = full_batch_target(train, prior);
  NoiseModel noise = NoiseModel::fixed_gaussian(0.01);
  StepGrads a = fpovi_grads(ens, t, FlowKind::GFSF, noise);
  StepGrads b = fpovi_grads(ens, t, FlowKind::GFSF, noise);
  CHECK(a.dparams == b.dparams);
}
