// Python bindings for the main operations: dataset handling, particle
// training (function- and weight-space), prediction summaries, the exact
// finite-dimensional oracles, and the config-driven runner.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "fpovi/runner.hpp"

namespace py = pybind11;
using namespace fpovi;

namespace {

Rng make_rng(unsigned seed) { return Rng(seed); }

}  // namespace

PYBIND11_MODULE(_fpovi, m) {
  m.doc() = "Function-space particle-optimization variational inference for BNNs";

  py::class_<NetworkSpec>(m, "NetworkSpec")
      .def(py::init<std::vector<int>>(), py::arg("widths"))
      .def_readonly("widths", &NetworkSpec::widths)
      .def("param_count", &NetworkSpec::param_count)
      .def("input_dim", &NetworkSpec::input_dim)
      .def("output_dim", &NetworkSpec::output_dim);

  m.def("forward",
        [](const Vector& params, const NetworkSpec& spec, const Matrix& X) {
          return forward(params, spec, X);
        },
        py::arg("params"), py::arg("spec"), py::arg("X"));
  m.def("init_params",
        [](const NetworkSpec& spec, double sigma_w2, unsigned seed) {
          Rng rng = make_rng(seed);
          return init_params(spec, sigma_w2, rng);
        },
        py::arg("spec"), py::arg("sigma_w2"), py::arg("seed"));

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<>())
      .def_readwrite("X", &Dataset::X)
      .def_readwrite("Y", &Dataset::Y)
      .def("size", &Dataset::size)
      .def("input_dim", &Dataset::input_dim);
  m.def("gen_synthetic_1d",
        [](unsigned seed, bool noiseless) {
          Rng rng = make_rng(seed);
          return gen_synthetic_1d(rng, noiseless);
        },
        py::arg("seed"), py::arg("noiseless") = false);
  m.def("load_csv", &load_csv, py::arg("path"), py::arg("target_column") = "");
  m.def("standardize", &standardize, py::arg("dataset"));

  m.def("median_bandwidth", &median_bandwidth, py::arg("points"));
  m.def("rbf_gram_matrix",
        [](const Matrix& points, double h) { return rbf_gram(points, h).K; },
        py::arg("points"), py::arg("h"));

  py::class_<ParticleEnsemble>(m, "ParticleEnsemble")
      .def(py::init([](const NetworkSpec& spec, int n, double sigma_w2, unsigned seed) {
             Rng rng = make_rng(seed);
             return ParticleEnsemble(spec, n, sigma_w2, rng);
           }),
           py::arg("spec"), py::arg("n_particles"), py::arg("sigma_w2"), py::arg("seed"))
      .def_readwrite("params", &ParticleEnsemble::params)
      .def_readonly("iteration", &ParticleEnsemble::iteration)
      .def("n_particles", &ParticleEnsemble::n_particles)
      .def("predict", &ParticleEnsemble::predict, py::arg("i"), py::arg("X"));

  py::class_<GpPosterior>(m, "GpPosterior")
      .def_readonly("mean", &GpPosterior::mean)
      .def_readonly("cov", &GpPosterior::cov);
  m.def("gp_posterior",
        [](const Matrix& X_train, const Vector& Y_train, const Matrix& X_test,
           double sigma2, double bandwidth) {
          return gp_posterior(rbf_kernel_fn(bandwidth), X_train, Y_train, X_test, sigma2);
        },
        py::arg("X_train"), py::arg("Y_train"), py::arg("X_test"), py::arg("sigma2"),
        py::arg("bandwidth"));

  /// Minimal high-level trainer: function-space POVI on a dataset with the
  /// moment-matched prior; returns per-particle predictions on X_eval.
  m.def("train_fpovi",
        [](const Dataset& data, std::vector<int> hidden, int n_particles, int epochs,
           double lr, double sigma_w2, double sigma_y2, const std::string& flow,
           unsigned seed, const Matrix& X_eval) {
          Rng rng = make_rng(seed);
          std::vector<int> widths;
          widths.push_back(data.input_dim());
          for (int h : hidden) widths.push_back(h);
          widths.push_back(static_cast<int>(data.Y.cols()));
          NetworkSpec spec(widths);
          ParticleEnsemble ens(spec, n_particles, sigma_w2, rng);
          Optimizer opt = Optimizer::adam(lr);
          NoiseModel noise = NoiseModel::fixed_gaussian(sigma_y2);
          KdeSampler nu = KdeSampler::silverman(data.X);
          const int B = std::min(100, data.size());
          FlowKind kind = flow_from_string(flow);
          for (int e = 0; e < epochs; ++e) {
            FunctionTarget t =
                make_minibatch_target(data, nu, spec, sigma_w2, B, 4, 40, rng);
            fpovi_step(ens, t, kind, noise, opt);
          }
          Matrix preds(n_particles, X_eval.rows());
          for (int i = 0; i < n_particles; ++i)
            preds.row(i) = ens.predict(i, X_eval).col(0).transpose();
          return preds;
        },
        py::arg("data"), py::arg("hidden"), py::arg("n_particles"), py::arg("epochs"),
        py::arg("lr"), py::arg("sigma_w2"), py::arg("sigma_y2"), py::arg("flow"),
        py::arg("seed"), py::arg("X_eval"));

  m.def("rmse", &rmse, py::arg("predictions"), py::arg("y"));
  m.def("mixture_nll", &mixture_nll, py::arg("predictions"), py::arg("sigma2"),
        py::arg("y"));

  m.def("run_config",
        [](const std::string& json_text) {
          RunConfig cfg = parse_config(json_text);
          RunResult res = run(cfg);
          return py::make_tuple(res.exit_code, res.summary_path);
        },
        py::arg("json_text"),
        "Parse a JSON run configuration, execute it, and return "
        "(exit_code, summary_path).");
  m.def("predict_csv", &predict_csv, py::arg("checkpoint"), py::arg("input_csv"),
        py::arg("out_csv"));
}
