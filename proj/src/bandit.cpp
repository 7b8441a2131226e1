#include "fpovi/bandit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace fpovi {

BanditRound wheel_step(const WheelConfig& cfg, Rng& rng) {
  cfg.validate();
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  double x, y;
  do {
    x = unif(rng);
    y = unif(rng);
  } while (x * x + y * y > 1.0);

  BanditRound round;
  round.context.resize(2);
  round.context << x, y;
  round.expected = Vector::Constant(5, cfg.mu2);
  round.expected[0] = cfg.mu1;
  if (x * x + y * y > cfg.delta * cfg.delta) {
    int quadrant = (y >= 0.0) ? (x >= 0.0 ? 1 : 2) : (x >= 0.0 ? 4 : 3);
    round.expected[quadrant] = cfg.mu3;
  }
  Eigen::Index best;
  round.expected.maxCoeff(&best);
  round.optimal = static_cast<int>(best);
  return round;
}

double WheelEnv::realize(const BanditRound& round, int action, Rng& rng) {
  if (action < 0 || action >= 5) throw std::invalid_argument("wheel: bad action");
  std::normal_distribution<double> gauss(0.0, cfg_.sigma_r);
  return round.expected[action] + gauss(rng);
}

double mushroom_step(bool poisonous, int action, Rng& rng) {
  if (action == 0) return 0.0;
  if (action != 1) throw std::invalid_argument("mushroom: bad action");
  if (!poisonous) return 5.0;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return unif(rng) < 0.5 ? 5.0 : -35.0;
}

Dataset load_mushroom_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  if (rows.empty()) throw std::runtime_error("mushroom csv is empty: " + path);

  // header detection: a "poisonous" column name, else assume headerless UCI
  // layout with the class label first
  int label_col = 0;
  bool has_header = false;
  for (std::size_t c = 0; c < rows[0].size(); ++c) {
    std::string lower = rows[0][c];
    std::transform(lower.begin(), lower.end(), lower.begin(), ::tolower);
    if (lower == "poisonous" || lower == "class") {
      has_header = true;
      label_col = static_cast<int>(c);
    }
  }
  std::size_t first = has_header ? 1 : 0;
  const int n = static_cast<int>(rows.size() - first);
  if (n < 1) throw std::runtime_error("mushroom csv has no data rows");
  const int n_cols = static_cast<int>(rows[first].size());

  Dataset ds;
  ds.Y.resize(n, 1);
  std::vector<std::vector<std::string>> attr_values;  // sorted distinct per column
  for (int c = 0; c < n_cols; ++c) {
    if (c == label_col) {
      attr_values.emplace_back();
      continue;
    }
    std::vector<std::string> vals;
    for (int r = 0; r < n; ++r) {
      if (static_cast<int>(rows[first + r].size()) != n_cols)
        throw std::runtime_error("mushroom csv: ragged row " + std::to_string(r));
      vals.push_back(rows[first + r][c]);
    }
    std::sort(vals.begin(), vals.end());
    vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
    attr_values.push_back(std::move(vals));
  }
  int width = 0;
  for (const auto& v : attr_values) width += static_cast<int>(v.size());
  ds.X = Matrix::Zero(n, width);
  for (int r = 0; r < n; ++r) {
    const auto& row = rows[first + r];
    const std::string& lab = row[label_col];
    if (lab == "p" || lab == "1")
      ds.Y(r, 0) = 1.0;
    else if (lab == "e" || lab == "0")
      ds.Y(r, 0) = 0.0;
    else
      throw std::runtime_error("mushroom csv: unknown class label '" + lab +
                               "' at row " + std::to_string(r));
    int off = 0;
    for (int c = 0; c < n_cols; ++c) {
      const auto& vals = attr_values[c];
      if (c != label_col) {
        auto it = std::lower_bound(vals.begin(), vals.end(), row[c]);
        ds.X(r, off + static_cast<int>(it - vals.begin())) = 1.0;
        off += static_cast<int>(vals.size());
      }
    }
  }
  return ds;
}

MushroomEnv::MushroomEnv(Dataset ds) : ds_(std::move(ds)) {
  if (ds_.size() < 1) throw std::invalid_argument("mushroom env: empty dataset");
  poisonous_.resize(ds_.size());
  for (int i = 0; i < ds_.size(); ++i) poisonous_[i] = ds_.Y(i, 0) > 0.5;
}

BanditRound MushroomEnv::next(Rng& rng) {
  std::uniform_int_distribution<int> pick(0, ds_.size() - 1);
  int row = pick(rng);
  BanditRound round;
  round.context = ds_.X.row(row).transpose();
  round.expected.resize(2);
  round.expected << 0.0, poisonous_[row] ? -15.0 : 5.0;  // E[eat | poisonous] = -15
  round.optimal = poisonous_[row] ? 0 : 1;
  return round;
}

double MushroomEnv::realize(const BanditRound& round, int action, Rng& rng) {
  return mushroom_step(round.expected[1] < 0.0, action, rng);
}

Vector UniformAgent::sample_rewards(const Vector&, Rng& rng) {
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Vector v(n_);
  for (int i = 0; i < n_; ++i) v[i] = unif(rng);
  return v;
}

ParticleBanditAgent::ParticleBanditAgent(ParticleAgentConfig cfg, int context_dim,
                                         int n_actions, Rng& rng)
    : cfg_(cfg), n_actions_(n_actions), opt_(Optimizer::adam(cfg.lr)) {
  std::vector<int> widths;
  widths.push_back(context_dim);
  for (int h : cfg_.hidden) widths.push_back(h);
  widths.push_back(n_actions);
  ens_ = ParticleEnsemble(NetworkSpec(widths), cfg_.n_particles, cfg_.sigma_w2, rng);
}

Vector ParticleBanditAgent::sample_rewards(const Vector& context, Rng& rng) {
  std::uniform_int_distribution<int> pick(0, ens_.n_particles() - 1);
  Matrix x = context.transpose();
  Vector f = ens_.predict(pick(rng), x).row(0).transpose();
  return Vector::Constant(n_actions_, r_mean_) + r_std_ * f;
}

void ParticleBanditAgent::update(const Vector& context, int action, double reward) {
  if (action < 0 || action >= n_actions_)
    throw std::invalid_argument("bandit agent: bad action");
  contexts_.push_back(context);
  actions_.push_back(action);
  rewards_.push_back(reward);
}

void ParticleBanditAgent::retrain(Rng& rng) {
  const int nbuf = buffer_size();
  if (nbuf < 1) return;

  r_mean_ = std::accumulate(rewards_.begin(), rewards_.end(), 0.0) / nbuf;
  double var = 0.0;
  for (double r : rewards_) var += (r - r_mean_) * (r - r_mean_);
  r_std_ = nbuf > 1 ? std::sqrt(var / (nbuf - 1)) : 1.0;
  r_std_ = std::max(r_std_, 1e-8);

  Matrix anchors(nbuf, contexts_[0].size());
  for (int i = 0; i < nbuf; ++i) anchors.row(i) = contexts_[i].transpose();
  KdeSampler nu = KdeSampler::silverman(anchors);

  const NoiseModel noise = NoiseModel::fixed_gaussian(cfg_.sigma_y2);
  const GaussianWeightPrior wprior(cfg_.sigma_w2, true);
  const int B = std::min(cfg_.batch, nbuf);
  std::vector<int> idx(nbuf);

  for (int step = 0; step < cfg_.steps_per_retrain; ++step) {
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < B; ++i) {
      std::uniform_int_distribution<int> pick(i, nbuf - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    Matrix x_b(B, anchors.cols());
    Matrix y_b = Matrix::Zero(B, n_actions_);
    Matrix mask = Matrix::Zero(B, n_actions_);
    for (int i = 0; i < B; ++i) {
      x_b.row(i) = contexts_[idx[i]].transpose();
      y_b(i, actions_[idx[i]]) = (rewards_[idx[i]] - r_mean_) / r_std_;
      mask(i, actions_[idx[i]]) = 1.0;
    }
    const double n_total = nbuf;
    switch (cfg_.method) {
      case AgentMethod::Fpovi: {
        FunctionTarget t;
        Matrix x_tilde = nu.sample(cfg_.b_prior, rng);
        t.x.resize(B + cfg_.b_prior, anchors.cols());
        t.x.topRows(B) = x_b;
        t.x.bottomRows(cfg_.b_prior) = x_tilde;
        t.lik_pos.resize(B);
        std::iota(t.lik_pos.begin(), t.lik_pos.end(), 0);
        t.y = y_b;
        t.y_mask = mask;
        t.prior_pos.resize(cfg_.b_prior);
        std::iota(t.prior_pos.begin(), t.prior_pos.end(), B);
        t.prior = gp_prior_moments(ens_.spec, GaussianWeightPrior(cfg_.sigma_w2, true),
                                   x_tilde, cfg_.k_draws, rng);
        t.lik_scale = n_total / B;
        fpovi_step(ens_, t, cfg_.flow, noise, opt_);
        break;
      }
      case AgentMethod::WeightPovi:
        weight_povi_step(ens_, x_b, y_b, cfg_.flow, cfg_.kernel, wprior, noise, n_total,
                         opt_, nullptr, mask);
        break;
      case AgentMethod::Ensemble:
        ensemble_step(ens_, x_b, y_b, wprior, noise, n_total, opt_, nullptr, mask);
        break;
    }
  }
}

BanditTrace thompson_loop(BanditAgent& agent, BanditEnv& env, int horizon,
                          int retrain_every, Rng& rng) {
  if (horizon < 0) throw std::invalid_argument("thompson_loop: negative horizon");
  BanditTrace trace;
  trace.rounds.reserve(horizon);
  for (int t = 0; t < horizon; ++t) {
    BanditRound round = env.next(rng);
    Vector sampled = agent.sample_rewards(round.context, rng);
    if (sampled.size() != env.n_actions())
      throw std::runtime_error("thompson_loop: agent/env action-count mismatch");
    int action = 0;  // ties broken by the lowest index
    for (int a = 1; a < sampled.size(); ++a)
      if (sampled[a] > sampled[action]) action = a;
    double reward = env.realize(round, action, rng);
    agent.update(round.context, action, reward);
    trace.rounds.push_back({round.context, action, reward, round.expected[action],
                            round.expected[round.optimal]});
    if (retrain_every > 0 && (t + 1) % retrain_every == 0) agent.retrain(rng);
  }
  return trace;
}

double cumulative_regret(const BanditTrace& trace) {
  double total = 0.0;
  for (const auto& r : trace.rounds) total += r.expected_optimal - r.expected_chosen;
  return total;
}

}  // namespace fpovi
