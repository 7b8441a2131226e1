#include "fpovi/metrics.hpp"
#include "util.hpp"

using namespace fpovi;
using testutil::random_matrix;
using testutil::random_vector;

TEST_CASE("rmse: hand-computed examples") {
  // single particle, two points, residuals 3 and 4 -> sqrt(12.5)
  Matrix preds(1, 2);
  preds << 3.0, 4.0;
  Vector y = Vector::Zero(2);
  CHECK(rmse(preds, y) == doctest::Approx(std::sqrt(12.5)));

  // two particles averaging to y -> zero error
  Matrix two(2, 1);
  two << 1.0, 3.0;
  Vector y2 = Vector::Constant(1, 2.0);
  CHECK(rmse(two, y2) == doctest::Approx(0.0));
}

TEST_CASE("mixture_nll: single particle reduces to Gaussian nll") {
  Matrix preds(1, 1);
  preds << 0.0;
  Vector s2 = Vector::Constant(1, 1.0);
  Vector y = Vector::Constant(1, 1.0);
  CHECK(mixture_nll(preds, s2, y) ==
        doctest::Approx(0.5 * std::log(2.0 * M_PI) + 0.5));
}

TEST_CASE("mixture_nll: identical particles match the single-particle value") {
  Rng rng(3);
  Matrix one = random_matrix(1, 5, rng);
  Matrix many(4, 5);
  for (int i = 0; i < 4; ++i) many.row(i) = one.row(0);
  Vector s2 = Vector::Constant(4, 0.3);
  Vector y = random_vector(5, rng);
  CHECK(mixture_nll(many, s2, y) ==
        doctest::Approx(mixture_nll(one, s2.head(1), y)));
}

TEST_CASE("mixture_nll: two-component direct evaluation") {
  Matrix preds(2, 1);
  preds << -1.0, 2.0;
  Vector s2(2);
  s2 << 0.5, 1.5;
  Vector y = Vector::Constant(1, 0.3);
  auto gauss = [](double y, double m, double v) {
    return std::exp(-0.5 * (y - m) * (y - m) / v) / std::sqrt(2.0 * M_PI * v);
  };
  double expect = -std::log(0.5 * (gauss(0.3, -1.0, 0.5) + gauss(0.3, 2.0, 1.5)));
  CHECK(mixture_nll(preds, s2, y) == doctest::Approx(expect));
}

TEST_CASE("mixture_nll: invariant to particle order, bounded below") {
  Rng rng(7);
  Matrix preds = random_matrix(5, 8, rng);
  Vector s2 = random_vector(5, rng).array().abs() + 0.1;
  Vector y = random_vector(8, rng);
  Matrix perm(5, 8);
  std::vector<int> order{3, 0, 4, 1, 2};
  Vector s2p(5);
  for (int i = 0; i < 5; ++i) {
    perm.row(i) = preds.row(order[i]);
    s2p[i] = s2[order[i]];
  }
  CHECK(mixture_nll(perm, s2p, y) == doctest::Approx(mixture_nll(preds, s2, y)));

  // mixture nll <= best single component nll + log n
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 5; ++i) {
    Matrix one = preds.row(i);
    best = std::min(best, mixture_nll(one, s2.segment(i, 1), y));
  }
  CHECK(mixture_nll(preds, s2, y) <= best + std::log(5.0) + 1e-12);
}

TEST_CASE("quantile: interpolation of order statistics") {
  std::vector<double> v{3.0, 1.0, 2.0, 4.0};
  CHECK(quantile(v, 0.0) == doctest::Approx(1.0));
  CHECK(quantile(v, 1.0) == doctest::Approx(4.0));
  CHECK(quantile(v, 0.5) == doctest::Approx(2.5));
  CHECK(quantile(v, 1.0 / 3.0) == doctest::Approx(2.0));
  CHECK(quantile({5.0}, 0.7) == doctest::Approx(5.0));
}

TEST_CASE("credible_band: gamma=0 collapses to the median") {
  Rng rng(11);
  Matrix preds = random_matrix(6, 4, rng);
  Vector s2 = Vector::Constant(6, 0.1);
  Band b = credible_band(preds, s2, 0.0, BandMode::MeanBand, rng);
  for (int t = 0; t < 4; ++t) {
    std::vector<double> col(6);
    for (int i = 0; i < 6; ++i) col[i] = preds(i, t);
    double med = quantile(col, 0.5);
    CHECK(b.lo[t] == doctest::Approx(med));
    CHECK(b.hi[t] == doctest::Approx(med));
  }
}

TEST_CASE("credible_band: identical particles give a zero-width mean band") {
  Rng rng(13);
  Matrix preds(3, 2);
  preds << 1.0, -2.0, 1.0, -2.0, 1.0, -2.0;
  Vector s2 = Vector::Constant(3, 0.2);
  Band b = credible_band(preds, s2, 0.95, BandMode::MeanBand, rng);
  CHECK(b.width().cwiseAbs().maxCoeff() < 1e-14);

  // the predictive band is strictly wider once noise is added
  Band pb = credible_band(preds, s2, 0.95, BandMode::PredictiveBand, rng);
  CHECK(pb.width().minCoeff() > 0.0);
}

TEST_CASE("credible_band: two particles at +-1, gamma 0.95 mean band") {
  // quantiles interpolate between the two order statistics, so the 2.5% and
  // 97.5% points sit at -0.95 and 0.95
  Rng rng(17);
  Matrix preds(2, 1);
  preds << -1.0, 1.0;
  Vector s2 = Vector::Constant(2, 0.01);
  Band b = credible_band(preds, s2, 0.95, BandMode::MeanBand, rng);
  CHECK(b.lo[0] == doctest::Approx(-0.95));
  CHECK(b.hi[0] == doctest::Approx(0.95));
}

TEST_CASE("credible_band: width is monotone in gamma") {
  Rng rng(19);
  Matrix preds = random_matrix(40, 3, rng);
  Vector s2 = random_vector(40, rng).array().abs() + 0.05;
  double prev = 0.0;
  for (double gamma : {0.5, 0.8, 0.95, 0.99}) {
    Rng band_rng(23);
    Band b = credible_band(preds, s2, gamma, BandMode::PredictiveBand, band_rng);
    double mean_width = b.width().mean();
    CHECK(mean_width >= prev);
    prev = mean_width;
  }
}

TEST_CASE("gap_ratio: direct evaluations") {
  Vector a(4), b(4);
  a << 2.0, 4.0, 100.0, 100.0;
  b << 1.0, 2.0, 1.0, 1.0;
  std::vector<bool> mask{true, true, false, false};
  CHECK(gap_ratio(a, b, mask) == doctest::Approx(2.0));
  std::vector<bool> all{true, true, true, true};
  CHECK(gap_ratio(a, a, all) == doctest::Approx(1.0));
  CHECK_THROWS(gap_ratio(a, b, std::vector<bool>{false, false, false, false}));
}

TEST_CASE("summarize: fields agree with the standalone metrics") {
  Rng rng(29);
  Matrix preds = random_matrix(5, 6, rng);
  Vector s2 = random_vector(5, rng).array().abs() + 0.1;
  Vector y = random_vector(6, rng);
  Rng band_rng(29);
  PredictiveSummary s = summarize(preds, s2, y, 0.9, band_rng);
  for (int t = 0; t < 6; ++t) {
    CHECK(s.mean[t] == doctest::Approx(preds.col(t).mean()));
    double var = (preds.col(t).array() - preds.col(t).mean()).square().sum() / 4.0;
    CHECK(s.epistemic_std[t] == doctest::Approx(std::sqrt(var)));
  }
  double mean_nll = s.nll.mean();
  CHECK(mean_nll == doctest::Approx(mixture_nll(preds, s2, y)));
}
