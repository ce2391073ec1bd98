#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "certiflight/mlp.hpp"
#include "certiflight/quad_dynamics.hpp"

namespace cfl {

/// PPO hyperparameters. Defaults are the values used for every training run
/// in this project; change them through the config file, not here.
struct PpoConfig {
  double clip_factor = 0.2;
  double discount = 0.99;
  double gae_factor = 0.95;
  double entropy_weight = 0.4;
  double actor_lr = 1e-3;
  double critic_lr = 1e-2;
  int horizon = 2048;         // environment steps collected per iteration
  int minibatch = 2048;       // equal to horizon: full-batch updates
  int epochs = 4;             // gradient passes over each collected batch
  int iterations = 200;
  double episode_seconds = 10.0;
  double dt = 0.01;
  double ref_radius = 2.0;    // reference positions sampled in this ball
  double alpha_mag = 0.05;    // per-step uniform thrust/torque variation
  double logvar_init = -1.0;  // initial log-variance head bias
  std::uint64_t seed = 0;

  void validate() const;  // throws std::invalid_argument
};

/// Diagonal-Gaussian actor (shared relu trunk, linear mean and log-variance
/// heads) plus a scalar-output critic. The deployable controller is
/// actor_mean(): trunk composed with the mean head, final layer linear.
struct ActorCritic {
  Mlp trunk;           // 12 -> 64 x 5, relu throughout
  MlpLayer mean_head;    // 4 x 64, linear
  MlpLayer logvar_head;  // 4 x 64, linear
  Mlp critic;          // 12 -> 256 -> 256 -> 192 -> 192 -> 1

  Mlp actor_mean() const;
  void validate() const;
};

/// Seeded He-style initialization of the default architecture (heads get a
/// small scale; the log-variance bias starts at cfg.logvar_init).
ActorCritic make_actor_critic(const PpoConfig& cfg);

/// Shaped tracking reward on the reference-shifted state: position and yaw
/// terms always, plus a velocity term once within 0.3 m of the reference.
/// Always in (0, 1].
double reward(const Vec12& s_err);

/// Generalized advantage estimation over one contiguous episode segment.
/// bootstrap is the value estimate of the state after the last transition
/// (0 for terminal states). returns_out = advantages + values.
void gae(const std::vector<double>& rewards, const std::vector<double>& values,
         double bootstrap, double discount, double gae_factor,
         std::vector<double>* advantages, std::vector<double>* returns_out);

/// Flat experience batch, one column per transition.
struct RolloutBuffer {
  MatrixXd states;     // 12 x N, reference-shifted coordinates
  MatrixXd actions;    // 4 x N
  VectorXd logprob;    // behavior-policy log-density of the taken action
  VectorXd advantage;  // GAE, normalized
  VectorXd value_target;
  // Per-episode statistics over the episodes touching this rollout.
  double mean_reward = 0.0;
  double mean_ep_len = 0.0;
  int faults = 0;

  int size() const { return static_cast<int>(states.cols()); }
};

/// Runs seeded episodes (origin start, reference uniform in the 2 m ball,
/// per-step uniform alpha) until `horizon` transitions are collected; the
/// final partial episode is bootstrapped with the critic. Deterministic for
/// a fixed seed.
RolloutBuffer collect_rollout(const ActorCritic& ac, const QuadParams& p,
                              const NominalGains& g, const PpoConfig& cfg,
                              int horizon, std::uint64_t seed);

/// Parameter-shaped gradients for one Mlp.
struct MlpGrads {
  std::vector<MatrixXd> dW;
  std::vector<VectorXd> db;
};

struct ActorGrads {
  MlpGrads trunk;
  MatrixXd dW_mean, dW_logvar;
  VectorXd db_mean, db_logvar;
};

/// Clipped-surrogate PPO loss (negated objective, to minimize) with entropy
/// bonus; mean over the batch. grads may be null for loss-only evaluation.
double actor_loss(const ActorCritic& ac, const RolloutBuffer& buf,
                  const PpoConfig& cfg, ActorGrads* grads = nullptr);

/// Mean squared error of the critic against value targets.
double critic_loss(const Mlp& critic, const MatrixXd& states,
                   const VectorXd& targets, MlpGrads* grads = nullptr);

/// Mean per-sample entropy of the diagonal-Gaussian policy over a batch.
double policy_entropy(const ActorCritic& ac, const MatrixXd& states);

/// Log-density of a diagonal Gaussian N(mean, diag(exp(logvar))) at u.
double gaussian_logprob(const VectorXd& u, const VectorXd& mean,
                        const VectorXd& logvar);

struct TrainStats {
  int iter = 0;
  double mean_reward = 0.0;
  double mean_ep_len = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  double entropy = 0.0;
};

/// Full PPO loop: collect -> GAE -> clipped update, cfg.iterations times.
/// Deterministic for a fixed cfg.seed. When curve_csv is nonempty, writes
/// `iter,mean_reward,mean_ep_len,actor_loss,critic_loss,entropy` rows.
ActorCritic train(const PpoConfig& cfg, const QuadParams& p,
                  const NominalGains& g, const std::string& curve_csv = "",
                  std::vector<TrainStats>* stats = nullptr);

}  // namespace cfl
