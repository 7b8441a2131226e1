#pragma once

#include <Eigen/Dense>
#include <random>
#include <stdexcept>
#include <vector>

namespace fpovi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

/// Feed-forward MLP architecture: layer widths (input, hidden..., output),
/// ReLU on hidden layers, linear output.
struct NetworkSpec {
  std::vector<int> widths;

  NetworkSpec() = default;
  explicit NetworkSpec(std::vector<int> w) : widths(std::move(w)) { validate(); }

  void validate() const {
    if (widths.size() < 2)
      throw std::invalid_argument("NetworkSpec: need at least input and output layer");
    for (int w : widths)
      if (w < 1) throw std::invalid_argument("NetworkSpec: all widths must be >= 1");
  }

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int n_layers() const { return static_cast<int>(widths.size()) - 1; }

  // D = sum over layers of (w_in + 1) * w_out
  int param_count() const {
    int d = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l)
      d += (widths[l] + 1) * widths[l + 1];
    return d;
  }

  bool operator==(const NetworkSpec& o) const { return widths == o.widths; }
};

// Flat parameter layout: layer-major, weights then bias per layer, weight
// matrices stored row-major with shape (w_out x w_in). Checkpoints rely on
// this layout being stable.
struct LayerView {
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W;
  Eigen::Map<const Vector> b;
};

namespace detail {
inline void check_params(const Vector& params, const NetworkSpec& spec) {
  if (params.size() != spec.param_count())
    throw std::invalid_argument("parameter vector length does not match spec");
}
inline void check_input(const Matrix& X, const NetworkSpec& spec) {
  if (X.cols() != spec.input_dim())
    throw std::invalid_argument("input column count does not match spec input dim");
}
}  // namespace detail

/// Access layer l of a flat parameter vector without copying.
inline LayerView layer_view(const Vector& params, const NetworkSpec& spec, int l) {
  int off = 0;
  for (int k = 0; k < l; ++k) off += (spec.widths[k] + 1) * spec.widths[k + 1];
  const int w_in = spec.widths[l], w_out = spec.widths[l + 1];
  return LayerView{
      {params.data() + off, w_out, w_in},
      {params.data() + off + w_in * w_out, w_out}};
}

/// f(X; theta): B x d inputs -> B x F outputs.
Matrix forward(const Vector& params, const NetworkSpec& spec, const Matrix& X);

/// Post-activation values of every layer (hidden ReLU outputs and the final
/// linear output), concatenated per input row. Used by the activation kernel.
Matrix activations(const Vector& params, const NetworkSpec& spec, const Matrix& X);

/// Gradient w.r.t. theta of sum_{b,k} f(x_b)_k * V_{b,k}, with V held fixed;
/// backprop with V injected as the top-layer error signal.
Vector backprop_top_signal(const Vector& params, const NetworkSpec& spec,
                           const Matrix& X, const Matrix& V);

/// As backprop_top_signal, but the signal is injected at every layer's
/// post-activation values (concatenated layout matching activations()).
Vector backprop_activation_signal(const Vector& params, const NetworkSpec& spec,
                                  const Matrix& X, const Matrix& S);

/// Draw from the weight prior: W ~ N(0, sigma_w^2 / fan_in), biases zero.
Vector init_params(const NetworkSpec& spec, double sigma_w2, Rng& rng);

/// Structured parameters, for flatten/unflatten round trips.
struct StructuredParams {
  std::vector<Matrix> weights;  // per layer, w_out x w_in
  std::vector<Vector> biases;   // per layer, w_out
};

Vector flatten(const StructuredParams& sp, const NetworkSpec& spec);
StructuredParams unflatten(const Vector& params, const NetworkSpec& spec);

}  // namespace fpovi
