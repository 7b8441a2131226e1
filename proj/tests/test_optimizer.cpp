#include "fpovi/optimizer.hpp"
#include "util.hpp"

using namespace fpovi;
using testutil::random_matrix;

TEST_CASE("constant optimizer scales by the step size") {
  Optimizer opt = Optimizer::constant(0.05);
  Rng rng(1);
  Matrix g = random_matrix(3, 4, rng);
  CHECK(((opt.step(g) - 0.05 * g).cwiseAbs().maxCoeff()) < 1e-15);
  // stateless: same input, same output
  CHECK(opt.step(g) == opt.step(g));
}

TEST_CASE("adam: first step has magnitude ~ lr in each coordinate") {
  Optimizer opt = Optimizer::adam(0.01);
  Rng rng(3);
  Matrix g = random_matrix(2, 5, rng);
  Matrix u = opt.step(g);
  for (int i = 0; i < u.rows(); ++i)
    for (int j = 0; j < u.cols(); ++j) {
      CHECK(std::abs(u(i, j)) <= 0.01 + 1e-12);
      if (std::abs(g(i, j)) > 1e-3) {
        CHECK(std::abs(u(i, j)) == doctest::Approx(0.01).epsilon(1e-3));
        CHECK(u(i, j) * g(i, j) > 0.0);  // ascent direction preserved
      }
    }
}

TEST_CASE("adam: repeated identical gradients keep moving in that direction") {
  Optimizer opt = Optimizer::adam(0.001);
  Matrix g = Matrix::Constant(1, 3, 2.0);
  Matrix total = Matrix::Zero(1, 3);
  for (int t = 0; t < 50; ++t) total += opt.step(g);
  CHECK(total.minCoeff() > 0.04);  // ~ 50 * lr
}

TEST_CASE("adam state resets when the gradient shape changes") {
  Optimizer opt = Optimizer::adam(0.01);
  Rng rng(5);
  opt.step(random_matrix(2, 2, rng));
  CHECK(opt.t == 1);
  opt.step(random_matrix(3, 2, rng));
  CHECK(opt.t == 1);  // fresh state for the new shape
}

TEST_CASE("deterministic: two optimizers fed the same sequence agree bitwise") {
  Optimizer a = Optimizer::adam(0.004), b = Optimizer::adam(0.004);
  Rng rng(7);
  for (int t = 0; t < 10; ++t) {
    Matrix g = random_matrix(4, 3, rng);
    CHECK(a.step(g) == b.step(g));
  }
}
