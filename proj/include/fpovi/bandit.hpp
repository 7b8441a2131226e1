#pragma once

#include <memory>

#include "fpovi/function_space.hpp"

namespace fpovi {

/// Wheel environment constants. Only the ordering mu3 > mu1 > mu2 and delta
/// are structural; the magnitudes are configuration.
struct WheelConfig {
  double delta = 0.95;
  double mu1 = 1.2, mu2 = 1.0, mu3 = 50.0;
  double sigma_r = 0.01;
  int horizon = 5000;

  void validate() const {
    if (!(delta > 0.0 && delta < 1.0))
      throw std::invalid_argument("wheel: delta must lie in (0,1)");
    if (!(mu3 > mu1 && mu1 > mu2))
      throw std::invalid_argument("wheel: need mu3 > mu1 > mu2");
    if (sigma_r < 0.0) throw std::invalid_argument("wheel: sigma_r must be >= 0");
  }
};

/// One round of a contextual bandit: the context, the expected reward of each
/// action, and the optimal action (lowest index among maximizers).
struct BanditRound {
  Vector context;
  Vector expected;
  int optimal = 0;
};

class BanditEnv {
 public:
  virtual ~BanditEnv() = default;
  virtual int n_actions() const = 0;
  virtual int context_dim() const = 0;
  virtual BanditRound next(Rng& rng) = 0;
  virtual double realize(const BanditRound& round, int action, Rng& rng) = 0;
};

/// Context uniform on the unit disk; action 0 pays mu1 everywhere, actions
/// 1-4 pay mu2 except that outside radius delta the action matching the
/// context's quadrant (+,+ -> 1; -,+ -> 2; -,- -> 3; +,- -> 4) pays mu3.
/// Rewards are Gaussian with std sigma_r around those means.
BanditRound wheel_step(const WheelConfig& cfg, Rng& rng);

class WheelEnv : public BanditEnv {
 public:
  explicit WheelEnv(WheelConfig cfg) : cfg_(cfg) { cfg_.validate(); }
  int n_actions() const override { return 5; }
  int context_dim() const override { return 2; }
  BanditRound next(Rng& rng) override { return wheel_step(cfg_, rng); }
  double realize(const BanditRound& round, int action, Rng& rng) override;
  const WheelConfig& config() const { return cfg_; }

 private:
  WheelConfig cfg_;
};

/// Reward law for one mushroom: eat (action 1) pays +5 if safe, else +5 or
/// -35 with equal probability; no-eat (action 0) pays 0.
double mushroom_step(bool poisonous, int action, Rng& rng);

/// Mushroom CSV -> one-hot Dataset. Expects a header, a binary poisonous
/// column named "poisonous" (or class labels p/e in the first column), and
/// categorical attribute columns which the loader one-hot encodes into X.
/// Y holds the 0/1 poisonous flag.
Dataset load_mushroom_csv(const std::string& path);

/// Contexts drawn uniformly from the rows of a mushroom dataset.
class MushroomEnv : public BanditEnv {
 public:
  explicit MushroomEnv(Dataset ds);
  int n_actions() const override { return 2; }
  int context_dim() const override { return ds_.input_dim(); }
  BanditRound next(Rng& rng) override;
  double realize(const BanditRound& round, int action, Rng& rng) override;

 private:
  Dataset ds_;
  std::vector<bool> poisonous_;
};

class BanditAgent {
 public:
  virtual ~BanditAgent() = default;
  /// One posterior draw of the reward of every action at this context.
  virtual Vector sample_rewards(const Vector& context, Rng& rng) = 0;
  virtual void update(const Vector& context, int action, double reward) = 0;
  virtual void retrain(Rng& rng) {}
};

/// Thompson baseline that ignores all data: i.i.d. samples, so the greedy
/// action is uniform.
class UniformAgent : public BanditAgent {
 public:
  explicit UniformAgent(int n_actions) : n_(n_actions) {}
  Vector sample_rewards(const Vector&, Rng& rng) override;
  void update(const Vector&, int, double) override {}

 private:
  int n_;
};

enum class AgentMethod { Fpovi, WeightPovi, Ensemble };

struct ParticleAgentConfig {
  AgentMethod method = AgentMethod::Fpovi;
  FlowKind flow = FlowKind::SVGD;
  KernelChoice kernel = KernelChoice::WeightRbf;  // weight-POVI only
  std::vector<int> hidden{100, 100};
  int n_particles = 20;
  double sigma_w2 = 1.4;
  double sigma_y2 = 0.01;  // model noise, in standardized reward units
  double lr = 0.004;
  int steps_per_retrain = 100;
  int batch = 100;     // B' cap; shrinks to the buffer size
  int b_prior = 4;     // nu-batch size for the function-space prior
  int k_draws = 40;
};

/// BNN reward model with one output per action, trained on the replay buffer
/// with the likelihood masked to the chosen actions. Rewards are standardized
/// by buffer statistics at each retrain; posterior sampling picks one
/// particle uniformly per round.
class ParticleBanditAgent : public BanditAgent {
 public:
  ParticleBanditAgent(ParticleAgentConfig cfg, int context_dim, int n_actions, Rng& rng);

  Vector sample_rewards(const Vector& context, Rng& rng) override;
  void update(const Vector& context, int action, double reward) override;
  void retrain(Rng& rng) override;

  const ParticleEnsemble& ensemble() const { return ens_; }
  int buffer_size() const { return static_cast<int>(contexts_.size()); }

 private:
  ParticleAgentConfig cfg_;
  int n_actions_;
  ParticleEnsemble ens_;
  Optimizer opt_;
  std::vector<Vector> contexts_;
  std::vector<int> actions_;
  std::vector<double> rewards_;
  double r_mean_ = 0.0, r_std_ = 1.0;  // buffer reward standardization
};

struct BanditTrace {
  struct Round {
    Vector context;
    int action = 0;
    double reward = 0.0;
    double expected_chosen = 0.0;
    double expected_optimal = 0.0;
  };
  std::vector<Round> rounds;
};

/// Alg.-2 loop: sample rewards, act greedily (ties to the lowest action
/// index), observe, store, retrain every retrain_every rounds.
BanditTrace thompson_loop(BanditAgent& agent, BanditEnv& env, int horizon,
                          int retrain_every, Rng& rng);

/// Sum over rounds of expected-optimal minus expected-chosen reward.
double cumulative_regret(const BanditTrace& trace);

}  // namespace fpovi
