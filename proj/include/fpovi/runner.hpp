#pragma once

#include <string>

#include "fpovi/bandit.hpp"
#include "fpovi/metrics.hpp"
#include "fpovi/oracles.hpp"

namespace fpovi {

enum class Experiment { Toy1d, ExactGp, Uci, Bandit, HmcRef };
enum class Method {
  Fsvgd, Fwsgld, Fpisgld, Fgfsf,   // function-space POVI
  Wsvgd, Wwsgld, Wpisgld, Wgfsf,   // weight-space POVI
  Ensemble
};

Experiment experiment_from_string(const std::string& s);
Method method_from_string(const std::string& s);
std::string to_string(Experiment e);
std::string to_string(Method m);
bool is_function_space(Method m);
FlowKind method_flow(Method m);

struct RunConfig {
  Experiment experiment = Experiment::Toy1d;
  Method method = Method::Fsvgd;
  KernelChoice kernel = KernelChoice::WeightRbf;  // weight-space POVI only
  std::vector<int> hidden{50};
  int particles = 20;
  std::string optimizer = "adam";  // "adam" | "constant"
  double lr = 0.004;
  int batch = 100;       // B': likelihood mini-batch size (capped at N)
  int batch_prior = 4;   // nu-batch size
  int k_draws = 40;
  int epochs = 500;
  int iterations = 5000;  // exact-gp flow iterations
  unsigned seed = 0;
  double sigma_w2 = 1.4;
  std::string noise = "inferred";  // "fixed" | "inferred"
  double sigma_y2 = 0.01;
  std::string dataset;             // csv path (uci) or empty for fixtures
  std::string target_column;
  double test_fraction = 0.1;
  std::string out = "out";
  double flow_step = 1e-3;  // exact-gp Euler step
  double grid_lo = -0.2, grid_hi = 1.2;
  int grid_points = 141;
  // bandit
  WheelConfig wheel;
  int horizon = 5000;
  int retrain_every = 50;
  int steps_per_retrain = 100;
  // hmc-ref
  double hmc_step = 1e-3;
  int hmc_leapfrog = 20;
  int hmc_samples = 2000;
  int hmc_burn_in = 1000;

  /// Echo as canonical JSON (the form written into artifact headers).
  std::string to_json() const;
};

/// Strict parse: unknown keys, wrong types, and invalid combinations are
/// reported with their field path.
RunConfig parse_config(const std::string& json_text);
RunConfig load_config(const std::string& path);

struct RunResult {
  int exit_code = 0;
  std::string summary_path;
};

/// Execute the configured experiment; writes metrics CSV, checkpoint, and
/// summary.json under cfg.out.
RunResult run(const RunConfig& cfg);

/// Checkpoint: one JSON manifest line, then n x D (+ n if noise inferred)
/// little-endian doubles, one particle per row.
void save_checkpoint(const std::string& path, const ParticleEnsemble& ens,
                     const std::string& config_echo,
                     const std::optional<StandardizeStats>& stats);
struct Checkpoint {
  ParticleEnsemble ens;
  std::string config_echo;
  std::optional<StandardizeStats> stats;
};
Checkpoint load_checkpoint(const std::string& path);

/// Batch prediction: per input row the particle mean, epistemic std, and 95%
/// predictive interval, de-standardized when the checkpoint carries stats.
void predict_csv(const std::string& checkpoint_path, const std::string& input_csv,
                 const std::string& out_csv);

/// %.17g, the float format every artifact uses.
std::string format_g17(double v);

}  // namespace fpovi
