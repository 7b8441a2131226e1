#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "fpovi/runner.hpp"

int main(int argc, char** argv) {
  if (const char* t = std::getenv("FPOVI_THREADS"))
    Eigen::setNbThreads(std::max(1, std::atoi(t)));
  else
    Eigen::setNbThreads(1);  // deterministic by default

  CLI::App app{"particle-optimization variational inference for BNNs"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  long seed = -1;
  auto* run_cmd = app.add_subcommand("run", "execute an experiment from a JSON config");
  run_cmd->add_option("--config", config_path, "config file")->required();
  run_cmd->add_option("--seed", seed, "override the config seed");
  run_cmd->add_option("--out", out_dir, "override the output directory");

  std::string ckpt_path, input_csv, pred_out;
  auto* pred_cmd = app.add_subcommand("predict", "batch predictions from a checkpoint");
  pred_cmd->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  pred_cmd->add_option("--input", input_csv, "feature CSV")->required();
  pred_cmd->add_option("--out", pred_out, "output CSV")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run_cmd->parsed()) {
      fpovi::RunConfig cfg = fpovi::load_config(config_path);
      if (seed >= 0) cfg.seed = static_cast<unsigned>(seed);
      if (!out_dir.empty()) cfg.out = out_dir;
      fpovi::RunResult res = fpovi::run(cfg);
      std::cout << "summary: " << res.summary_path << "\n";
      return res.exit_code;
    }
    fpovi::predict_csv(ckpt_path, input_csv, pred_out);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
