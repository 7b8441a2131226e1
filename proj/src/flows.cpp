#include "fpovi/flows.hpp"

#include <cmath>

namespace fpovi {

FlowKind flow_from_string(const std::string& s) {
  if (s == "svgd") return FlowKind::SVGD;
  if (s == "wsgld") return FlowKind::WSGLD_B;
  if (s == "pisgld") return FlowKind::PI_SGLD;
  if (s == "gfsf") return FlowKind::GFSF;
  throw std::invalid_argument("unknown flow kind: " + s);
}

std::string to_string(FlowKind k) {
  switch (k) {
    case FlowKind::SVGD: return "svgd";
    case FlowKind::WSGLD_B: return "wsgld";
    case FlowKind::PI_SGLD: return "pisgld";
    case FlowKind::GFSF: return "gfsf";
  }
  return "?";
}

namespace {

constexpr double kDenomFloor = 1e-12;

void check_dims(const Matrix& K, const Matrix& grads) {
  if (K.rows() != K.cols() || K.rows() != grads.rows())
    throw std::invalid_argument("flow: gram/gradient dimension mismatch");
}

Matrix svgd_impl(const Matrix& K, const Matrix& grads, const PairGrad& pg) {
  const int n = static_cast<int>(K.rows());
  Matrix dir = Matrix::Zero(n, grads.cols());
  for (int i = 0; i < n; ++i) {
    Vector acc = Vector::Zero(grads.cols());
    for (int j = 0; j < n; ++j) {
      acc += K(i, j) * grads.row(j).transpose();
      if (j != i) acc += pg(i, j);
    }
    dir.row(i) = acc.transpose() / static_cast<double>(n);
  }
  return dir;
}

Matrix wsgld_impl(const Matrix& K, const Matrix& grads, const PairGrad& pg) {
  const int n = static_cast<int>(K.rows());
  Vector row_sum(n);
  for (int j = 0; j < n; ++j)
    row_sum[j] = std::max(K.row(j).sum(), kDenomFloor);
  Matrix dir = grads;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      Vector g = pg(i, j);
      dir.row(i) += (g / row_sum[j] + g / row_sum[i]).transpose();
    }
  }
  return dir;
}

Matrix gfsf_impl(const Matrix& K, const Matrix& grads, const PairGrad& pg, double ridge) {
  const int n = static_cast<int>(K.rows());
  if (ridge < 0.0) ridge = 1e-5 * K.trace() / static_cast<double>(n);
  Matrix Kreg = K + ridge * Matrix::Identity(n, n);
  Eigen::LDLT<Matrix> solver(Kreg);
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("gfsf: gram matrix singular even after ridge");
  Matrix Kinv = solver.solve(Matrix::Identity(n, n));
  Matrix dir = grads;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (j != i) dir.row(i) += (Kinv(i, j) * pg(i, j)).transpose();
  return dir;
}

}  // namespace

Matrix flow_directions(FlowKind kind, const Matrix& K, const Matrix& grads,
                       const PairGrad& pair_grad, double gfsf_ridge) {
  check_dims(K, grads);
  switch (kind) {
    case FlowKind::SVGD:
      return svgd_impl(K, grads, pair_grad);
    case FlowKind::WSGLD_B:
      return wsgld_impl(K, grads, pair_grad);
    case FlowKind::PI_SGLD:
      return svgd_impl(K, grads, pair_grad) + wsgld_impl(K, grads, pair_grad);
    case FlowKind::GFSF:
      return gfsf_impl(K, grads, pair_grad, gfsf_ridge);
  }
  throw std::logic_error("unreachable flow kind");
}

Matrix flow_directions(FlowKind kind, const GramPack& gram, const Matrix& grads,
                       double gfsf_ridge) {
  PairGrad pg = [&gram](int i, int j) { return gram.grad_wrt_second(i, j); };
  return flow_directions(kind, gram.K, grads, pg, gfsf_ridge);
}

Matrix svgd_direction(const GramPack& g, const Matrix& grads) {
  return flow_directions(FlowKind::SVGD, g, grads);
}
Matrix wsgld_b_direction(const GramPack& g, const Matrix& grads) {
  return flow_directions(FlowKind::WSGLD_B, g, grads);
}
Matrix pi_sgld_direction(const GramPack& g, const Matrix& grads) {
  return flow_directions(FlowKind::PI_SGLD, g, grads);
}
Matrix gfsf_direction(const GramPack& g, const Matrix& grads, double ridge) {
  return flow_directions(FlowKind::GFSF, g, grads, ridge);
}

}  // namespace fpovi
