#pragma once

#include <optional>
#include <string>

#include "fpovi/nn.hpp"

namespace fpovi {

/// Standardization statistics recorded when a dataset is rescaled, so
/// predictions can be reported in raw units.
struct StandardizeStats {
  Vector x_mean, x_std;
  Vector y_mean, y_std;
};

struct Dataset {
  Matrix X;  // N x d
  Matrix Y;  // N x F (real targets, or class indices in column 0)
  std::vector<std::string> names;
  std::optional<StandardizeStats> stats;

  int size() const { return static_cast<int>(X.rows()); }
  int input_dim() const { return static_cast<int>(X.cols()); }
};

/// The continuous batch distribution nu: pick an anchor uniformly, add
/// per-dimension Gaussian noise.
struct KdeSampler {
  Matrix anchors;      // m x d
  Vector bandwidths;   // d, all positive

  KdeSampler() = default;
  KdeSampler(Matrix a, Vector bw);

  /// Silverman's rule per dimension: 1.06 * sd * N^(-1/5), floored at 1e-8.
  static KdeSampler silverman(const Matrix& anchors);

  Matrix sample(int n, Rng& rng) const;
};

/// The 20-point synthetic regression fixture: 12 inputs from U(0, 0.6) and 8
/// from U(0.8, 1); y = x + e + sin(4(x+e)) + sin(13(x+e)), e ~ N(0, 0.0009).
Dataset gen_synthetic_1d(Rng& rng, bool noiseless = false);

/// CSV ingestion. Auto-detects a header row; last column is the target unless
/// target_column names another one.
Dataset load_csv(const std::string& path, const std::string& target_column = "");

/// Zero mean, unit variance per input column and per target column; the stats
/// are stored on the result for de-standardization.
Dataset standardize(const Dataset& ds);

/// Seeded permutation split with floor(N * test_fraction) test rows.
std::pair<Dataset, Dataset> split(const Dataset& ds, double test_fraction, unsigned seed);

}  // namespace fpovi
