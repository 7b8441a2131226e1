#include "fpovi/nn.hpp"

namespace fpovi {

namespace {

// Forward pass keeping pre-activations for each layer.
struct ForwardTrace {
  std::vector<Matrix> pre;   // pre-activation per layer, B x w_out
  std::vector<Matrix> post;  // post-activation per layer (ReLU, linear on last)
};

ForwardTrace run_forward(const Vector& params, const NetworkSpec& spec, const Matrix& X) {
  detail::check_params(params, spec);
  detail::check_input(X, spec);
  ForwardTrace t;
  const int L = spec.n_layers();
  Matrix h = X;
  for (int l = 0; l < L; ++l) {
    LayerView lv = layer_view(params, spec, l);
    Matrix z = (h * lv.W.transpose()).rowwise() + lv.b.transpose();
    t.pre.push_back(z);
    if (l + 1 < L) z = z.cwiseMax(0.0);  // ReLU subgradient at 0 taken as 0
    t.post.push_back(z);
    h = z;
  }
  return t;
}

}  // namespace

Matrix forward(const Vector& params, const NetworkSpec& spec, const Matrix& X) {
  return run_forward(params, spec, X).post.back();
}

Matrix activations(const Vector& params, const NetworkSpec& spec, const Matrix& X) {
  ForwardTrace t = run_forward(params, spec, X);
  int total = 0;
  for (const Matrix& m : t.post) total += static_cast<int>(m.cols());
  Matrix out(X.rows(), total);
  int off = 0;
  for (const Matrix& m : t.post) {
    out.middleCols(off, m.cols()) = m;
    off += static_cast<int>(m.cols());
  }
  return out;
}

namespace {

// Shared backward pass. `deltas[l]` is the error signal injected at layer l's
// post-activation (may be empty for no signal at that layer).
Vector run_backward(const Vector& params, const NetworkSpec& spec, const Matrix& X,
                    const std::vector<Matrix>& deltas) {
  ForwardTrace t = run_forward(params, spec, X);
  const int L = spec.n_layers();
  Vector grad = Vector::Zero(spec.param_count());

  Matrix delta;  // running error signal at layer l's post-activation
  for (int l = L - 1; l >= 0; --l) {
    if (delta.size() == 0)
      delta = deltas[l];
    else if (deltas[l].size() != 0)
      delta += deltas[l];
    if (delta.size() == 0) continue;

    // through the ReLU (output layer is linear)
    Matrix dz = delta;
    if (l + 1 < L) dz = dz.cwiseProduct((t.pre[l].array() > 0.0).cast<double>().matrix());

    const Matrix& h_prev = (l == 0) ? X : t.post[l - 1];
    LayerView lv = layer_view(params, spec, l);
    Matrix gW = dz.transpose() * h_prev;             // w_out x w_in
    Vector gb = dz.colwise().sum().transpose();      // w_out

    int off = 0;
    for (int k = 0; k < l; ++k) off += (spec.widths[k] + 1) * spec.widths[k + 1];
    const int w_in = spec.widths[l], w_out = spec.widths[l + 1];
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        grad.data() + off, w_out, w_in) = gW;
    grad.segment(off + w_in * w_out, w_out) = gb;

    delta = dz * lv.W;  // signal at previous layer's post-activation
  }
  return grad;
}

}  // namespace

Vector backprop_top_signal(const Vector& params, const NetworkSpec& spec,
                           const Matrix& X, const Matrix& V) {
  if (V.rows() != X.rows() || V.cols() != spec.output_dim())
    throw std::invalid_argument("top signal shape does not match (batch, output dim)");
  std::vector<Matrix> deltas(spec.n_layers());
  deltas.back() = V;
  return run_backward(params, spec, X, deltas);
}

Vector backprop_activation_signal(const Vector& params, const NetworkSpec& spec,
                                  const Matrix& X, const Matrix& S) {
  const int L = spec.n_layers();
  int total = 0;
  for (int l = 0; l < L; ++l) total += spec.widths[l + 1];
  if (S.rows() != X.rows() || S.cols() != total)
    throw std::invalid_argument("activation signal shape mismatch");
  std::vector<Matrix> deltas(L);
  int off = 0;
  for (int l = 0; l < L; ++l) {
    deltas[l] = S.middleCols(off, spec.widths[l + 1]);
    off += spec.widths[l + 1];
  }
  return run_backward(params, spec, X, deltas);
}

Vector init_params(const NetworkSpec& spec, double sigma_w2, Rng& rng) {
  spec.validate();
  Vector p = Vector::Zero(spec.param_count());
  std::normal_distribution<double> gauss(0.0, 1.0);
  int off = 0;
  for (int l = 0; l < spec.n_layers(); ++l) {
    const int w_in = spec.widths[l], w_out = spec.widths[l + 1];
    const double sd = std::sqrt(sigma_w2 / static_cast<double>(w_in));
    for (int k = 0; k < w_in * w_out; ++k) p[off + k] = sd * gauss(rng);
    off += (w_in + 1) * w_out;  // biases stay zero
  }
  return p;
}

Vector flatten(const StructuredParams& sp, const NetworkSpec& spec) {
  if (static_cast<int>(sp.weights.size()) != spec.n_layers() ||
      static_cast<int>(sp.biases.size()) != spec.n_layers())
    throw std::invalid_argument("structured params layer count mismatch");
  Vector p(spec.param_count());
  int off = 0;
  for (int l = 0; l < spec.n_layers(); ++l) {
    const int w_in = spec.widths[l], w_out = spec.widths[l + 1];
    if (sp.weights[l].rows() != w_out || sp.weights[l].cols() != w_in ||
        sp.biases[l].size() != w_out)
      throw std::invalid_argument("structured params shape mismatch at layer");
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        p.data() + off, w_out, w_in) = sp.weights[l];
    p.segment(off + w_in * w_out, w_out) = sp.biases[l];
    off += (w_in + 1) * w_out;
  }
  return p;
}

StructuredParams unflatten(const Vector& params, const NetworkSpec& spec) {
  detail::check_params(params, spec);
  StructuredParams sp;
  for (int l = 0; l < spec.n_layers(); ++l) {
    LayerView lv = layer_view(params, spec, l);
    sp.weights.push_back(lv.W);
    sp.biases.push_back(lv.b);
  }
  return sp;
}

}  // namespace fpovi
