#include "fpovi/runner.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

namespace fpovi {

using json = nlohmann::ordered_json;

Experiment experiment_from_string(const std::string& s) {
  if (s == "toy1d") return Experiment::Toy1d;
  if (s == "exact-gp") return Experiment::ExactGp;
  if (s == "uci") return Experiment::Uci;
  if (s == "bandit") return Experiment::Bandit;
  if (s == "hmc-ref") return Experiment::HmcRef;
  throw std::invalid_argument("unknown experiment: " + s);
}

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::Toy1d: return "toy1d";
    case Experiment::ExactGp: return "exact-gp";
    case Experiment::Uci: return "uci";
    case Experiment::Bandit: return "bandit";
    case Experiment::HmcRef: return "hmc-ref";
  }
  throw std::logic_error("bad experiment enum");
}

Method method_from_string(const std::string& s) {
  if (s == "fsvgd") return Method::Fsvgd;
  if (s == "fwsgld") return Method::Fwsgld;
  if (s == "fpisgld") return Method::Fpisgld;
  if (s == "fgfsf") return Method::Fgfsf;
  if (s == "wsvgd") return Method::Wsvgd;
  if (s == "wwsgld") return Method::Wwsgld;
  if (s == "wpisgld") return Method::Wpisgld;
  if (s == "wgfsf") return Method::Wgfsf;
  if (s == "ensemble") return Method::Ensemble;
  throw std::invalid_argument("unknown method: " + s);
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Fsvgd: return "fsvgd";
    case Method::Fwsgld: return "fwsgld";
    case Method::Fpisgld: return "fpisgld";
    case Method::Fgfsf: return "fgfsf";
    case Method::Wsvgd: return "wsvgd";
    case Method::Wwsgld: return "wwsgld";
    case Method::Wpisgld: return "wpisgld";
    case Method::Wgfsf: return "wgfsf";
    case Method::Ensemble: return "ensemble";
  }
  throw std::logic_error("bad method enum");
}

bool is_function_space(Method m) {
  return m == Method::Fsvgd || m == Method::Fwsgld || m == Method::Fpisgld ||
         m == Method::Fgfsf;
}

FlowKind method_flow(Method m) {
  switch (m) {
    case Method::Fsvgd:
    case Method::Wsvgd: return FlowKind::SVGD;
    case Method::Fwsgld:
    case Method::Wwsgld: return FlowKind::WSGLD_B;
    case Method::Fpisgld:
    case Method::Wpisgld: return FlowKind::PI_SGLD;
    case Method::Fgfsf:
    case Method::Wgfsf: return FlowKind::GFSF;
    case Method::Ensemble: break;
  }
  throw std::invalid_argument("method has no flow rule");
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

std::string kernel_to_string(KernelChoice k) {
  switch (k) {
    case KernelChoice::WeightRbf: return "rbf";
    case KernelChoice::FunctionValue: return "function_value";
    case KernelChoice::Activation: return "activation";
  }
  throw std::logic_error("bad kernel enum");
}

}  // namespace

std::string RunConfig::to_json() const {
  json j;
  j["experiment"] = fpovi::to_string(experiment);
  j["method"] = fpovi::to_string(method);
  j["kernel"] = kernel_to_string(kernel);
  j["hidden"] = hidden;
  j["particles"] = particles;
  j["optimizer"] = optimizer;
  j["lr"] = lr;
  j["batch"] = batch;
  j["batch_prior"] = batch_prior;
  j["k_draws"] = k_draws;
  j["epochs"] = epochs;
  j["iterations"] = iterations;
  j["seed"] = seed;
  j["sigma_w2"] = sigma_w2;
  j["noise"] = noise;
  j["sigma_y2"] = sigma_y2;
  j["dataset"] = dataset;
  j["target_column"] = target_column;
  j["test_fraction"] = test_fraction;
  j["out"] = out;
  j["flow_step"] = flow_step;
  j["grid_lo"] = grid_lo;
  j["grid_hi"] = grid_hi;
  j["grid_points"] = grid_points;
  j["wheel"] = {{"delta", wheel.delta}, {"mu1", wheel.mu1},     {"mu2", wheel.mu2},
                {"mu3", wheel.mu3},     {"sigma_r", wheel.sigma_r}};
  j["horizon"] = horizon;
  j["retrain_every"] = retrain_every;
  j["steps_per_retrain"] = steps_per_retrain;
  j["hmc_step"] = hmc_step;
  j["hmc_leapfrog"] = hmc_leapfrog;
  j["hmc_samples"] = hmc_samples;
  j["hmc_burn_in"] = hmc_burn_in;
  return j.dump();
}

namespace {

class ConfigReader {
 public:
  ConfigReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw std::invalid_argument("config: " + path_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    auto it = j_.find(key);
    if (it == j_.end()) return;
    seen_.insert(key);
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument("config: bad value at " + path_ + key + ": " + e.what());
    }
  }

  bool has(const char* key) {
    return j_.find(key) != j_.end();
  }

  const json* object(const char* key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key()))
        throw std::invalid_argument("config: unknown key " + path_ + it.key());
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: not valid JSON: ") + e.what());
  }
  ConfigReader r(j, "");
  RunConfig cfg;

  std::string s;
  s.clear(); r.get("experiment", s);
  if (!s.empty()) cfg.experiment = experiment_from_string(s);
  s.clear(); r.get("method", s);
  if (!s.empty()) cfg.method = method_from_string(s);
  bool kernel_given = r.has("kernel");
  s.clear(); r.get("kernel", s);
  if (!s.empty()) cfg.kernel = kernel_from_string(s);
  r.get("hidden", cfg.hidden);
  r.get("particles", cfg.particles);
  r.get("optimizer", cfg.optimizer);
  r.get("lr", cfg.lr);
  r.get("batch", cfg.batch);
  r.get("batch_prior", cfg.batch_prior);
  r.get("k_draws", cfg.k_draws);
  r.get("epochs", cfg.epochs);
  r.get("iterations", cfg.iterations);
  r.get("seed", cfg.seed);
  r.get("sigma_w2", cfg.sigma_w2);
  r.get("noise", cfg.noise);
  r.get("sigma_y2", cfg.sigma_y2);
  r.get("dataset", cfg.dataset);
  r.get("target_column", cfg.target_column);
  r.get("test_fraction", cfg.test_fraction);
  r.get("out", cfg.out);
  r.get("flow_step", cfg.flow_step);
  r.get("grid_lo", cfg.grid_lo);
  r.get("grid_hi", cfg.grid_hi);
  r.get("grid_points", cfg.grid_points);
  if (const json* w = r.object("wheel")) {
    ConfigReader rw(*w, "wheel.");
    rw.get("delta", cfg.wheel.delta);
    rw.get("mu1", cfg.wheel.mu1);
    rw.get("mu2", cfg.wheel.mu2);
    rw.get("mu3", cfg.wheel.mu3);
    rw.get("sigma_r", cfg.wheel.sigma_r);
    rw.finish();
  }
  r.get("horizon", cfg.horizon);
  r.get("retrain_every", cfg.retrain_every);
  r.get("steps_per_retrain", cfg.steps_per_retrain);
  r.get("hmc_step", cfg.hmc_step);
  r.get("hmc_leapfrog", cfg.hmc_leapfrog);
  r.get("hmc_samples", cfg.hmc_samples);
  r.get("hmc_burn_in", cfg.hmc_burn_in);
  r.finish();

  if (cfg.particles < 1) throw std::invalid_argument("config: particles must be >= 1");
  if (cfg.optimizer != "adam" && cfg.optimizer != "constant")
    throw std::invalid_argument("config: optimizer must be adam or constant");
  if (cfg.noise != "fixed" && cfg.noise != "inferred")
    throw std::invalid_argument("config: noise must be fixed or inferred");
  if (kernel_given && (is_function_space(cfg.method) || cfg.method == Method::Ensemble))
    throw std::invalid_argument("config: kernel only applies to weight-space methods");
  if (cfg.experiment == Experiment::Uci && cfg.dataset.empty())
    throw std::invalid_argument("config: dataset path required at dataset");
  if (cfg.experiment == Experiment::Uci && !std::filesystem::exists(cfg.dataset))
    throw std::invalid_argument("config: dataset file not found: " + cfg.dataset);
  if (cfg.experiment == Experiment::Bandit) cfg.wheel.validate();
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

// ---------------------------------------------------------------------------
// checkpoints

void save_checkpoint(const std::string& path, const ParticleEnsemble& ens,
                     const std::string& config_echo,
                     const std::optional<StandardizeStats>& stats) {
  static_assert(std::endian::native == std::endian::little,
                "checkpoint payload is little-endian");
  json manifest;
  manifest["format"] = "fpovi-checkpoint-v1";
  manifest["widths"] = ens.spec.widths;
  manifest["particles"] = ens.n_particles();
  manifest["param_count"] = ens.spec.param_count();
  manifest["noise_inferred"] = ens.noise_inferred();
  manifest["iteration"] = ens.iteration;
  manifest["payload"] = "f64-le";
  if (!config_echo.empty())
    manifest["config"] = json::parse(config_echo);
  else
    manifest["config"] = nullptr;
  if (stats) {
    auto vec = [](const Vector& v) {
      return std::vector<double>(v.data(), v.data() + v.size());
    };
    manifest["stats"] = {{"x_mean", vec(stats->x_mean)},
                         {"x_std", vec(stats->x_std)},
                         {"y_mean", vec(stats->y_mean)},
                         {"y_std", vec(stats->y_std)}};
  } else {
    manifest["stats"] = nullptr;
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint " + path);
  out << manifest.dump() << "\n";
  const int n = ens.n_particles(), d = ens.spec.param_count();
  for (int i = 0; i < n; ++i) {
    Vector row = ens.particle(i);
    out.write(reinterpret_cast<const char*>(row.data()),
              static_cast<std::streamsize>(sizeof(double)) * d);
  }
  if (ens.noise_inferred())
    out.write(reinterpret_cast<const char*>(ens.log_noise.data()),
              static_cast<std::streamsize>(sizeof(double)) * n);
  if (!out) throw std::runtime_error("short write on checkpoint " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint missing manifest line");
  json manifest;
  try {
    manifest = json::parse(line);
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint manifest is not JSON: ") + e.what());
  }
  if (manifest.value("format", "") != std::string("fpovi-checkpoint-v1"))
    throw std::runtime_error("checkpoint format mismatch");
  Checkpoint ck;
  ck.ens.spec = NetworkSpec(manifest.at("widths").get<std::vector<int>>());
  const int n = manifest.at("particles").get<int>();
  const int d = manifest.at("param_count").get<int>();
  if (d != ck.ens.spec.param_count())
    throw std::runtime_error("checkpoint param_count disagrees with widths");
  const bool noise_inferred = manifest.at("noise_inferred").get<bool>();
  ck.ens.iteration = manifest.at("iteration").get<long>();
  if (!manifest.at("config").is_null()) ck.config_echo = manifest.at("config").dump();
  if (!manifest.at("stats").is_null()) {
    auto vec = [&](const char* k) {
      auto v = manifest.at("stats").at(k).get<std::vector<double>>();
      return Eigen::Map<const Vector>(v.data(), static_cast<int>(v.size())).eval();
    };
    ck.stats = StandardizeStats{vec("x_mean"), vec("x_std"), vec("y_mean"), vec("y_std")};
  }

  ck.ens.params.resize(n, d);
  for (int i = 0; i < n; ++i) {
    Vector row(d);
    in.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(sizeof(double)) * d);
    ck.ens.params.row(i) = row.transpose();
  }
  if (noise_inferred) {
    ck.ens.log_noise.resize(n);
    in.read(reinterpret_cast<char*>(ck.ens.log_noise.data()),
            static_cast<std::streamsize>(sizeof(double)) * n);
  }
  if (!in) throw std::runtime_error("checkpoint payload truncated: " + path);
  char extra;
  if (in.read(&extra, 1))
    throw std::runtime_error("checkpoint payload longer than manifest declares");
  return ck;
}

// ---------------------------------------------------------------------------
// run

namespace {

Vector particle_sigma2s(const ParticleEnsemble& ens, double fixed_s2) {
  const int n = ens.n_particles();
  if (ens.noise_inferred()) return ens.log_noise.array().exp().matrix();
  return Vector::Constant(n, fixed_s2);
}

Matrix particle_predictions(const ParticleEnsemble& ens, const Matrix& X) {
  Matrix preds(ens.n_particles(), X.rows());
  for (int i = 0; i < ens.n_particles(); ++i)
    preds.row(i) = ens.predict(i, X).col(0).transpose();
  return preds;
}

Dataset apply_stats(const Dataset& ds, const StandardizeStats& st) {
  Dataset out = ds;
  for (int c = 0; c < out.X.cols(); ++c)
    out.X.col(c) = (out.X.col(c).array() - st.x_mean[c]) / st.x_std[c];
  for (int c = 0; c < out.Y.cols(); ++c)
    out.Y.col(c) = (out.Y.col(c).array() - st.y_mean[c]) / st.y_std[c];
  out.stats = st;
  return out;
}

std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

struct Trainer {
  const RunConfig& cfg;
  ParticleEnsemble ens;
  Optimizer opt, noise_opt;
  NoiseModel noise;
  GaussianWeightPrior wprior;
  KdeSampler nu;

  Trainer(const RunConfig& c, int input_dim, const Dataset& train, Rng& rng)
      : cfg(c), wprior(c.sigma_w2, true) {
    std::vector<int> widths;
    widths.push_back(input_dim);
    for (int h : c.hidden) widths.push_back(h);
    widths.push_back(static_cast<int>(train.Y.cols()));
    ens = ParticleEnsemble(NetworkSpec(widths), c.particles, c.sigma_w2, rng);
    opt = c.optimizer == "adam" ? Optimizer::adam(c.lr) : Optimizer::constant(c.lr);
    noise_opt = opt;
    if (c.noise == "inferred") {
      noise = NoiseModel::inferred_gaussian();
      ens.log_noise = Vector::Constant(c.particles, std::log(c.sigma_y2));
    } else {
      noise = NoiseModel::fixed_gaussian(c.sigma_y2);
    }
    nu = KdeSampler::silverman(train.X);
  }

  void epoch(const Dataset& train, Rng& rng) {
    const int N = train.size();
    const int B = std::min(cfg.batch, N);
    const int steps = std::max(1, N / B);
    for (int s = 0; s < steps; ++s) {
      if (is_function_space(cfg.method)) {
        FunctionTarget t = make_minibatch_target(train, nu, ens.spec, cfg.sigma_w2, B,
                                                 cfg.batch_prior, cfg.k_draws, rng);
        fpovi_step(ens, t, method_flow(cfg.method), noise, opt, &noise_opt);
        continue;
      }
      auto idx = sample_without_replacement(N, B, rng);
      Matrix x_b(B, train.X.cols()), y_b(B, train.Y.cols());
      for (int i = 0; i < B; ++i) {
        x_b.row(i) = train.X.row(idx[i]);
        y_b.row(i) = train.Y.row(idx[i]);
      }
      if (cfg.method == Method::Ensemble)
        ensemble_step(ens, x_b, y_b, wprior, noise, N, opt, &noise_opt);
      else
        weight_povi_step(ens, x_b, y_b, method_flow(cfg.method), cfg.kernel, wprior,
                         noise, N, opt, &noise_opt);
    }
  }
};

struct CsvWriter {
  std::ofstream out;
  CsvWriter(const std::filesystem::path& path, const std::string& config_echo,
            const std::string& header)
      : out(path) {
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << "# " << config_echo << "\n" << header << "\n";
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      out << (i ? "," : "") << cells[i];
    out << "\n";
  }
};

// de-standardized RMSE/NLL of the current ensemble on (X, y)
std::pair<double, double> eval_metrics(const ParticleEnsemble& ens, const Matrix& X,
                                       const Vector& y, double fixed_s2,
                                       const std::optional<StandardizeStats>& stats) {
  Matrix preds = particle_predictions(ens, X);
  Vector s2 = particle_sigma2s(ens, fixed_s2);
  Vector y_raw = y;
  if (stats) {
    const double m = stats->y_mean[0], sd = stats->y_std[0];
    preds = (preds.array() * sd + m).matrix();
    y_raw = (y.array() * sd + m).matrix();
    s2 *= sd * sd;
  }
  return {rmse(preds, y_raw), mixture_nll(preds, s2, y_raw)};
}

void write_summary(const std::filesystem::path& path, const json& body) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << body.dump(2) << "\n";
}

GaussianApprox to_gaussian(const GpPosterior& p) {
  return GaussianApprox::from_moments(p.mean, p.cov);
}

int run_toy1d(const RunConfig& cfg, const std::filesystem::path& dir,
              const std::string& echo) {
  Rng rng(cfg.seed);
  Dataset train = gen_synthetic_1d(rng);
  Trainer tr(cfg, 1, train, rng);

  CsvWriter metrics(dir / "metrics.csv", echo, "epoch,rmse,nll");
  double last_rmse = 0.0, last_nll = 0.0;
  for (int e = 0; e < cfg.epochs; ++e) {
    tr.epoch(train, rng);
    auto [r, n] = eval_metrics(tr.ens, train.X, train.Y.col(0), cfg.sigma_y2, {});
    last_rmse = r;
    last_nll = n;
    metrics.row({std::to_string(e), format_g17(r), format_g17(n)});
  }

  Matrix grid(cfg.grid_points, 1);
  for (int i = 0; i < cfg.grid_points; ++i)
    grid(i, 0) = cfg.grid_lo + (cfg.grid_hi - cfg.grid_lo) * i /
                                   std::max(1, cfg.grid_points - 1);
  Matrix preds = particle_predictions(tr.ens, grid);
  Vector s2 = particle_sigma2s(tr.ens, cfg.sigma_y2);
  Band mean_band = credible_band(preds, s2, 0.95, BandMode::MeanBand, rng);
  Band pred_band = credible_band(preds, s2, 0.95, BandMode::PredictiveBand, rng);
  Vector mean = preds.colwise().mean().transpose();
  CsvWriter band(dir / "band.csv", echo, "x,mean,mean_lo,mean_hi,pred_lo,pred_hi");
  for (int i = 0; i < cfg.grid_points; ++i)
    band.row({format_g17(grid(i, 0)), format_g17(mean[i]), format_g17(mean_band.lo[i]),
              format_g17(mean_band.hi[i]), format_g17(pred_band.lo[i]),
              format_g17(pred_band.hi[i])});

  save_checkpoint((dir / "checkpoint.bin").string(), tr.ens, echo, {});
  write_summary(dir / "summary.json",
                {{"experiment", "toy1d"}, {"rmse", last_rmse}, {"nll", last_nll}});
  return 0;
}

int run_uci(const RunConfig& cfg, const std::filesystem::path& dir,
            const std::string& echo) {
  Rng rng(cfg.seed);
  Dataset raw = load_csv(cfg.dataset, cfg.target_column);
  auto [train_raw, test_raw] = split(raw, cfg.test_fraction, cfg.seed);
  Dataset train = standardize(train_raw);
  Dataset test = apply_stats(test_raw, *train.stats);

  Trainer tr(cfg, train.input_dim(), train, rng);
  CsvWriter metrics(dir / "metrics.csv", echo, "epoch,rmse,nll");
  double last_rmse = 0.0, last_nll = 0.0;
  for (int e = 0; e < cfg.epochs; ++e) {
    tr.epoch(train, rng);
    auto [r, n] = eval_metrics(tr.ens, test.X, test.Y.col(0), cfg.sigma_y2, train.stats);
    last_rmse = r;
    last_nll = n;
    metrics.row({std::to_string(e), format_g17(r), format_g17(n)});
  }
  save_checkpoint((dir / "checkpoint.bin").string(), tr.ens, echo, train.stats);
  write_summary(dir / "summary.json",
                {{"experiment", "uci"}, {"rmse", last_rmse}, {"nll", last_nll}});
  return 0;
}

int run_exact_gp(const RunConfig& cfg, const std::filesystem::path& dir,
                 const std::string& echo) {
  Rng rng(cfg.seed);
  FiniteGpFixture fx = make_finite_gp_fixture(rng);
  const int m = static_cast<int>(fx.X.rows());
  const int n = cfg.particles;
  const int n_test = static_cast<int>(fx.test_pos.size());
  if (n <= n_test + 1)
    throw std::invalid_argument("exact-gp: need more particles than test points");
  const FlowKind flow = method_flow(cfg.method);

  GaussianApprox p = to_gaussian(
      gp_posterior(fx.kernel(), fx.x_train(), fx.y_train, fx.x_test(), fx.sigma2));
  GaussianApprox baseline = to_gaussian(downsampled_baseline(fx));
  const double baseline_kl = mvn_kl(baseline, p);

  // exact variant: particles are f(X) themselves, initialized from the prior
  ExactFpovi oracle(fx.K_XX, fx.train_pos, fx.y_train, fx.sigma2);
  Eigen::LLT<Matrix> prior_llt(fx.K_XX + 1e-10 * Matrix::Identity(m, m));
  if (prior_llt.info() != Eigen::Success)
    throw std::runtime_error("exact-gp: prior gram not PD");
  Matrix L = prior_llt.matrixL();
  std::normal_distribution<double> gauss(0.0, 1.0);
  FunctionParticleSet ps;
  ps.values.resize(n, m);
  for (int i = 0; i < n; ++i) {
    Vector z(m);
    for (int k = 0; k < m; ++k) z[k] = gauss(rng);
    ps.values.row(i) = (L * z).transpose();
  }

  // parametric variants: BNN particles, exact GP prior over function values
  GaussianApprox full_prior = GaussianApprox::from_moments(Vector::Zero(m), fx.K_XX);
  FunctionTarget full;
  full.x = fx.X;
  full.lik_pos = fx.train_pos;
  full.y = fx.y_train;
  full.prior_pos.resize(m);
  std::iota(full.prior_pos.begin(), full.prior_pos.end(), 0);
  full.prior = full_prior;
  full.lik_scale = 1.0;

  std::vector<int> widths;
  widths.push_back(1);
  for (int h : cfg.hidden) widths.push_back(h);
  widths.push_back(1);
  NetworkSpec spec(widths);
  ParticleEnsemble ens_p(spec, n, cfg.sigma_w2, rng);
  ParticleEnsemble ens_m(spec, n, cfg.sigma_w2, rng);
  Optimizer opt_p = cfg.optimizer == "adam" ? Optimizer::adam(cfg.lr)
                                            : Optimizer::constant(cfg.lr);
  Optimizer opt_m = opt_p;
  NoiseModel noise = NoiseModel::fixed_gaussian(fx.sigma2);
  KdeSampler nu = KdeSampler::silverman(fx.X);
  const int n_train = static_cast<int>(fx.train_pos.size());
  const int B = std::min(cfg.batch, n_train);

  Matrix x_test = fx.x_test();
  auto kl_of = [&](const Matrix& test_vals) {
    return mvn_kl(mvn_fit(test_vals), p);
  };
  auto nn_test_vals = [&](const ParticleEnsemble& e) {
    return particle_predictions(e, x_test);
  };

  CsvWriter kl_csv(dir / "kl.csv", echo, "iter,kl_exact,kl_parametric,kl_minibatch");
  double kl_e = 0.0, kl_p = 0.0, kl_m = 0.0;
  for (int it = 0; it <= cfg.iterations; ++it) {
    Matrix test_vals(n, n_test);
    for (int j = 0; j < n_test; ++j) test_vals.col(j) = ps.values.col(fx.test_pos[j]);
    kl_e = kl_of(test_vals);
    kl_p = kl_of(nn_test_vals(ens_p));
    kl_m = kl_of(nn_test_vals(ens_m));
    kl_csv.row({std::to_string(it), format_g17(kl_e), format_g17(kl_p), format_g17(kl_m)});
    if (it == cfg.iterations) break;

    oracle.step(ps, flow, cfg.flow_step);
    fpovi_step(ens_p, full, flow, noise, opt_p);

    // minibatch variant: random training subset plus a fresh nu-batch, with
    // the exact GP prior at the sampled positions
    auto idx = sample_without_replacement(n_train, B, rng);
    Matrix x_tilde = nu.sample(cfg.batch_prior, rng);
    FunctionTarget mini;
    mini.x.resize(B + cfg.batch_prior, 1);
    mini.y.resize(B, 1);
    for (int i = 0; i < B; ++i) {
      mini.x(i, 0) = fx.X(fx.train_pos[idx[i]], 0);
      mini.y(i, 0) = fx.y_train[idx[i]];
    }
    mini.x.bottomRows(cfg.batch_prior) = x_tilde;
    mini.lik_pos.resize(B);
    std::iota(mini.lik_pos.begin(), mini.lik_pos.end(), 0);
    mini.prior_pos.resize(cfg.batch_prior);
    std::iota(mini.prior_pos.begin(), mini.prior_pos.end(), B);
    Matrix Kt(cfg.batch_prior, cfg.batch_prior);
    KernelFn k = fx.kernel();
    for (int a = 0; a < cfg.batch_prior; ++a)
      for (int b = 0; b < cfg.batch_prior; ++b)
        Kt(a, b) = k(x_tilde.row(a).transpose(), x_tilde.row(b).transpose());
    mini.prior = GaussianApprox::from_moments(Vector::Zero(cfg.batch_prior), Kt);
    mini.lik_scale = static_cast<double>(n_train) / B;
    fpovi_step(ens_m, mini, flow, noise, opt_m);
  }

  write_summary(dir / "summary.json",
                {{"experiment", "exact-gp"},
                 {"baseline_kl", baseline_kl},
                 {"final_kl_exact", kl_e},
                 {"final_kl_parametric", kl_p},
                 {"final_kl_minibatch", kl_m}});
  return 0;
}

int run_bandit(const RunConfig& cfg, const std::filesystem::path& dir,
               const std::string& echo) {
  Rng rng(cfg.seed);
  WheelEnv env(cfg.wheel);
  ParticleAgentConfig ac;
  ac.method = cfg.method == Method::Ensemble
                  ? AgentMethod::Ensemble
                  : (is_function_space(cfg.method) ? AgentMethod::Fpovi
                                                   : AgentMethod::WeightPovi);
  if (cfg.method != Method::Ensemble) ac.flow = method_flow(cfg.method);
  ac.kernel = cfg.kernel;
  ac.hidden = cfg.hidden;
  ac.n_particles = cfg.particles;
  ac.sigma_w2 = cfg.sigma_w2;
  ac.sigma_y2 = cfg.sigma_y2;
  ac.lr = cfg.lr;
  ac.steps_per_retrain = cfg.steps_per_retrain;
  ac.batch = cfg.batch;
  ac.b_prior = cfg.batch_prior;
  ac.k_draws = cfg.k_draws;
  ParticleBanditAgent agent(ac, env.context_dim(), env.n_actions(), rng);

  BanditTrace trace = thompson_loop(agent, env, cfg.horizon, cfg.retrain_every, rng);
  CsvWriter csv(dir / "regret.csv", echo, "round,action,reward,regret,cum_regret");
  double cum = 0.0;
  for (std::size_t t = 0; t < trace.rounds.size(); ++t) {
    const auto& r = trace.rounds[t];
    double gap = r.expected_optimal - r.expected_chosen;
    cum += gap;
    csv.row({std::to_string(t), std::to_string(r.action), format_g17(r.reward),
             format_g17(gap), format_g17(cum)});
  }
  save_checkpoint((dir / "checkpoint.bin").string(), agent.ensemble(), echo, {});
  write_summary(dir / "summary.json",
                {{"experiment", "bandit"}, {"cumulative_regret", cumulative_regret(trace)}});
  return 0;
}

int run_hmc_ref(const RunConfig& cfg, const std::filesystem::path& dir,
                const std::string& echo) {
  Rng rng(cfg.seed);
  Dataset train = gen_synthetic_1d(rng);
  std::vector<int> widths;
  widths.push_back(1);
  for (int h : cfg.hidden) widths.push_back(h);
  widths.push_back(1);
  NetworkSpec spec(widths);
  GaussianWeightPrior prior(cfg.sigma_w2, true);
  const double s2 = cfg.sigma_y2;

  auto log_density = [&](const Vector& theta) {
    Matrix f = forward(theta, spec, train.X);
    return gaussian_loglik(f, train.Y, s2) +
           weight_prior_logp_grad(theta, prior, spec).first;
  };
  auto grad = [&](const Vector& theta) {
    Matrix f = forward(theta, spec, train.X);
    Matrix v = (train.Y - f) / s2;
    return (backprop_top_signal(theta, spec, train.X, v) +
            weight_prior_logp_grad(theta, prior, spec).second)
        .eval();
  };
  Vector init = init_params(spec, cfg.sigma_w2, rng);
  HmcResult res = hmc_sample(log_density, grad, init, cfg.hmc_step, cfg.hmc_leapfrog,
                             cfg.hmc_samples, cfg.hmc_burn_in, rng);

  Matrix grid(cfg.grid_points, 1);
  for (int i = 0; i < cfg.grid_points; ++i)
    grid(i, 0) = cfg.grid_lo + (cfg.grid_hi - cfg.grid_lo) * i /
                                   std::max(1, cfg.grid_points - 1);
  Matrix preds(res.samples.rows(), cfg.grid_points);
  for (int i = 0; i < res.samples.rows(); ++i)
    preds.row(i) = forward(res.samples.row(i).transpose(), spec, grid).col(0).transpose();
  Vector s2s = Vector::Constant(static_cast<int>(res.samples.rows()), s2);
  Band band = credible_band(preds, s2s, 0.95, BandMode::MeanBand, rng);
  Vector mean = preds.colwise().mean().transpose();
  CsvWriter csv(dir / "curve.csv", echo, "x,mean,mean_lo,mean_hi");
  for (int i = 0; i < cfg.grid_points; ++i)
    csv.row({format_g17(grid(i, 0)), format_g17(mean[i]), format_g17(band.lo[i]),
             format_g17(band.hi[i])});
  write_summary(dir / "summary.json",
                {{"experiment", "hmc-ref"}, {"acceptance_rate", res.acceptance_rate}});
  return 0;
}

}  // namespace

RunResult run(const RunConfig& cfg) {
  std::filesystem::path dir(cfg.out);
  std::filesystem::create_directories(dir);
  const std::string echo = cfg.to_json();
  RunResult res;
  res.summary_path = (dir / "summary.json").string();
  switch (cfg.experiment) {
    case Experiment::Toy1d: res.exit_code = run_toy1d(cfg, dir, echo); break;
    case Experiment::Uci: res.exit_code = run_uci(cfg, dir, echo); break;
    case Experiment::ExactGp: res.exit_code = run_exact_gp(cfg, dir, echo); break;
    case Experiment::Bandit: res.exit_code = run_bandit(cfg, dir, echo); break;
    case Experiment::HmcRef: res.exit_code = run_hmc_ref(cfg, dir, echo); break;
  }
  return res;
}

namespace {

// features-only numeric CSV (optional header, detected by a non-numeric cell)
Matrix load_feature_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t pos = 0;
        double v = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument("trailing");
        row.push_back(v);
      } catch (...) {
        numeric = false;
        break;
      }
    }
    if (!numeric) {
      if (first) {
        first = false;
        continue;  // header row
      }
      throw std::runtime_error("non-numeric cell at " + path + ":" +
                               std::to_string(lineno));
    }
    first = false;
    if (!rows.empty() && rows.back().size() != row.size())
      throw std::runtime_error("ragged row at " + path + ":" + std::to_string(lineno));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("no data rows in " + path);
  Matrix X(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[0].size(); ++c)
      X(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
  return X;
}

}  // namespace

void predict_csv(const std::string& checkpoint_path, const std::string& input_csv,
                 const std::string& out_csv) {
  Checkpoint ck = load_checkpoint(checkpoint_path);
  Matrix X = load_feature_csv(input_csv);
  if (X.cols() != ck.ens.spec.input_dim())
    throw std::runtime_error("input has " + std::to_string(X.cols()) +
                             " columns but checkpoint expects " +
                             std::to_string(ck.ens.spec.input_dim()));
  if (ck.ens.spec.output_dim() != 1)
    throw std::runtime_error("predict supports single-output checkpoints");
  if (ck.stats)
    for (int c = 0; c < X.cols(); ++c)
      X.col(c) = (X.col(c).array() - ck.stats->x_mean[c]) / ck.stats->x_std[c];

  Matrix preds = particle_predictions(ck.ens, X);
  double fixed_s2 = 1.0;
  if (!ck.config_echo.empty()) {
    json cfg = json::parse(ck.config_echo);
    fixed_s2 = cfg.value("sigma_y2", 1.0);
  }
  Vector s2 = particle_sigma2s(ck.ens, fixed_s2);
  if (ck.stats) {
    const double m = ck.stats->y_mean[0], sd = ck.stats->y_std[0];
    preds = (preds.array() * sd + m).matrix();
    s2 *= sd * sd;
  }
  Vector mean = preds.colwise().mean().transpose();
  const int n = static_cast<int>(preds.rows());
  Vector std(preds.cols());
  for (int j = 0; j < preds.cols(); ++j) {
    double var = n > 1 ? (preds.col(j).array() - mean[j]).square().sum() / (n - 1) : 0.0;
    std[j] = std::sqrt(var);
  }
  Rng band_rng(0);  // intervals must not depend on ambient rng state
  Band band = credible_band(preds, s2, 0.95, BandMode::PredictiveBand, band_rng);

  std::ofstream out(out_csv);
  if (!out) throw std::runtime_error("cannot write " + out_csv);
  out << "mean,epistemic_std,pred_lo,pred_hi\n";
  for (int j = 0; j < preds.cols(); ++j)
    out << format_g17(mean[j]) << "," << format_g17(std[j]) << ","
        << format_g17(band.lo[j]) << "," << format_g17(band.hi[j]) << "\n";
}

}  // namespace fpovi
