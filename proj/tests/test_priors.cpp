#include "fpovi/priors.hpp"
#include "util.hpp"

using namespace fpovi;
using testutil::fd_gradient;
using testutil::random_matrix;
using testutil::random_vector;
using testutil::rel_err;

TEST_CASE("weight_prior_logp_grad: simple cases") {
  NetworkSpec spec({1, 1});
  GaussianWeightPrior prior(1.0);
  Vector zero = Vector::Zero(spec.param_count());
  CHECK(weight_prior_logp_grad(zero, prior, spec).second.isZero(0.0));

  Vector theta(2);
  theta << 3.0, 0.0;
  CHECK(weight_prior_logp_grad(theta, prior, spec).second[0] == doctest::Approx(-3.0));
}

TEST_CASE("weight_prior_logp_grad matches finite differences") {
  NetworkSpec spec({2, 3, 1});
  Rng rng(3);
  for (bool fan_in : {false, true}) {
    GaussianWeightPrior prior(0.7, fan_in);
    Vector theta = random_vector(spec.param_count(), rng);
    Vector g = weight_prior_logp_grad(theta, prior, spec).second;
    Vector g_fd = fd_gradient(
        [&](const Vector& t) { return weight_prior_logp_grad(t, prior, spec).first; },
        theta);
    CHECK(rel_err(g, g_fd) < 1e-5);
  }
}

TEST_CASE("gaussian_loglik: closed-form values") {
  Matrix f(1, 1), y(1, 1);
  f << 0.4;
  y << 0.4;
  CHECK(gaussian_loglik(f, y, 1.0 / (2.0 * M_PI)) == doctest::Approx(0.0));

  y << 1.4;  // residual 1, sigma2 1
  CHECK(gaussian_loglik(f, y, 1.0) ==
        doctest::Approx(-0.5 * std::log(2.0 * M_PI) - 0.5));
}

TEST_CASE("gaussian_loglik: batch equals sum of per-point terms") {
  Rng rng(7);
  Matrix f = random_matrix(3, 1, rng);
  Matrix y = random_matrix(3, 1, rng);
  const double s2 = 0.3;
  double total = 0.0;
  for (int b = 0; b < 3; ++b) {
    Matrix fb = f.row(b), yb = y.row(b);
    total += gaussian_loglik(fb, yb, s2);
  }
  CHECK(gaussian_loglik(f, y, s2) == doctest::Approx(total));
}

TEST_CASE("gaussian_loglik is maximized over sigma2 at the mean squared residual") {
  Rng rng(11);
  Matrix f = random_matrix(10, 1, rng);
  Matrix y = random_matrix(10, 1, rng);
  double msr = (y - f).array().square().mean();
  double best = gaussian_loglik(f, y, msr);
  for (double factor : {0.5, 0.9, 1.1, 2.0})
    CHECK(gaussian_loglik(f, y, msr * factor) < best);
}

TEST_CASE("noise_grad: stationary at matching residuals under a vague prior") {
  NoiseModel noise = NoiseModel::inferred_gaussian(1e-12, 1e-12);
  const double s2 = 0.25;
  Vector res = Vector::Constant(8, std::sqrt(s2));  // r_b^2 = s2 for all b
  double g = noise_grad(res, noise, std::log(s2), 8.0, 8);
  CHECK(std::abs(g) < 1e-9);
}

TEST_CASE("noise_grad: vague prior reduces toward the pure likelihood gradient") {
  Rng rng(13);
  Vector res = testutil::random_vector(6, rng);
  const double ls2 = std::log(0.4);
  double vague = noise_grad(res, NoiseModel::inferred_gaussian(1e-12, 1e-12), ls2, 60.0, 6);
  const double s2 = std::exp(ls2);
  double lik = (60.0 / 6.0) * (res.array().square() / (2.0 * s2) - 0.5).sum();
  CHECK(vague == doctest::Approx(lik).epsilon(1e-9));
}

TEST_CASE("noise_grad matches finite differences of the log posterior") {
  Rng rng(17);
  NoiseModel noise = NoiseModel::inferred_gaussian(1.0, 0.1);
  Vector res = testutil::random_vector(5, rng);
  const double ls2 = -1.3;
  double g = noise_grad(res, noise, ls2, 50.0, 5);
  const double eps = 1e-6;
  double fd = (noise_log_posterior(res, noise, ls2 + eps, 50.0, 5) -
               noise_log_posterior(res, noise, ls2 - eps, 50.0, 5)) /
              (2.0 * eps);
  CHECK(g == doctest::Approx(fd).epsilon(1e-6));
}

TEST_CASE("noise model constructors validate") {
  CHECK_THROWS_AS(NoiseModel::fixed_gaussian(0.0), std::invalid_argument);
  CHECK_THROWS_AS(NoiseModel::inferred_gaussian(-1.0, 0.1), std::invalid_argument);
  CHECK_THROWS_AS(GaussianWeightPrior(0.0), std::invalid_argument);
}
