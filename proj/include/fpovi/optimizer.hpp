#pragma once

#include "fpovi/nn.hpp"

namespace fpovi {

/// Step-size schedule applied to flow directions: plain constant scaling, or
/// adaptive-moment scaling treating the direction as a gradient. State is
/// lazily sized to the first update's shape.
struct Optimizer {
  enum class Kind { Constant, Adam };
  Kind kind = Kind::Constant;
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  long t = 0;
  Matrix m, v;

  static Optimizer constant(double lr) { return {Kind::Constant, lr}; }
  static Optimizer adam(double lr) { return {Kind::Adam, lr}; }

  /// Increment to add to the parameters for ascent direction `grad`.
  Matrix step(const Matrix& grad) {
    if (kind == Kind::Constant) return lr * grad;
    if (m.rows() != grad.rows() || m.cols() != grad.cols()) {
      m = Matrix::Zero(grad.rows(), grad.cols());
      v = Matrix::Zero(grad.rows(), grad.cols());
      t = 0;
    }
    ++t;
    m = beta1 * m + (1.0 - beta1) * grad;
    v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    Matrix mhat = m / c1;
    Matrix denom = (v / c2).cwiseSqrt() + Matrix::Constant(grad.rows(), grad.cols(), eps);
    return lr * mhat.cwiseQuotient(denom);
  }
};

}  // namespace fpovi
