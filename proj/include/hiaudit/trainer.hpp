#pragma once

// Actor-critic training loop: replay memory, twin critics with a min
// combination, entropy-regularised actor objective and soft target updates.

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "hiaudit/actor.hpp"
#include "hiaudit/baselines.hpp"
#include "hiaudit/cost.hpp"
#include "hiaudit/env.hpp"
#include "hiaudit/net.hpp"

namespace hiaudit {

struct Transition {
  Belief belief;
  std::uint32_t action = 0;
  Belief next_belief;
  double reward = 0.0;
  bool done = false;
};

// FIFO ring buffer of transitions.
class ReplayMemory {
 public:
  explicit ReplayMemory(std::size_t capacity);

  void push(Transition t);
  std::size_t size() const { return items_.size(); }
  std::size_t capacity() const { return capacity_; }
  // i = 0 is the oldest stored transition.
  const Transition& at(std::size_t i) const { return items_.at(i); }

  // Uniform draw of min(batch, size) distinct transitions.
  std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Transition> items_;
};

struct TrainerConfig {
  double gamma = 0.95;
  double alpha = 0.05;   // entropy temperature
  double iota = 0.005;   // soft-update rate
  int batch_size = 64;
  int capacity = 100000;
  int warmup = 500;      // transitions collected before the first update
  int updates_per_episode = 1;
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  int max_steps = 10000; // training episodes
  int eval_every = 0;    // 0 disables periodic evaluation
  int episodes_per_eval = 100;
  std::vector<int> critic_hidden = {256, 256};
  bool target_entropy_term = false;  // soft value target (standard discrete SAC)
  bool sample_from_prior = true;     // training episodes draw the true hypothesis uniformly
  double divergence_limit = 1e6;
  bool record_wall_time = false;     // wall_ms column stays 0 unless set, keeping logs reproducible

  // Throws ConfigError.
  void validate() const;
};

Matrix critic_min(const Matrix& q1, const Matrix& q2);

struct ActorObjective {
  double loss = 0.0;
  Matrix probs_grad;  // d loss / d probs
};

// -mean_b [ pi_b . Q_b + alpha * H(pi_b) ]
ActorObjective actor_objective(const Matrix& probs, const Matrix& q, double alpha);

struct ActorLoss {
  double loss = 0.0;
  double entropy = 0.0;  // batch mean
  Gradients grads;       // actor parameters only
};

// Gradient of the actor objective through the actor; critics stay frozen.
ActorLoss actor_loss(const Matrix& beliefs, const Actor& actor, const DenseNet& q1, const DenseNet& q2,
                     double alpha, Rng& rng);

// Value targets y = r + gamma * pi_hat(O')^T min(Q1_hat, Q2_hat)(O'); terminal rows use y = r.
std::vector<double> td_targets(std::span<const Transition* const> batch, const Actor& target_actor,
                               const DenseNet& q1_target, const DenseNet& q2_target, double gamma, Rng& rng,
                               double alpha = 0.0, bool entropy_term = false);
double td_target(const Transition& t, const Actor& target_actor, const DenseNet& q1_target,
                 const DenseNet& q2_target, double gamma, Rng& rng);

struct CriticLoss {
  double loss = 0.0;  // loss_q1 + loss_q2
  double loss_q1 = 0.0;
  double loss_q2 = 0.0;
  Gradients grads_q1;
  Gradients grads_q2;
};

// Mean squared TD error on the taken action, for each critic independently.
CriticLoss critic_loss(const Matrix& beliefs, std::span<const std::uint32_t> actions, std::span<const double> targets,
                       const DenseNet& q1, const DenseNet& q2);

struct TrainLogRow {
  long step = 0;
  double episode_reward = 0.0;
  std::optional<double> actor_loss;
  std::optional<double> critic_loss;
  std::optional<double> eval_misjudgment;
  std::optional<double> eval_overhead;
  double wall_ms = 0.0;
};

struct EvalSummary {
  double misjudgment_rate = 0.0;
  double mean_overhead = 0.0;
  double mean_reward = 0.0;
  double mean_steps = 0.0;
};

// Runs `episodes` fresh hiaudit episodes with categorical sampling.
EvalSummary evaluate_policy(const Policy& policy, const EnvConfig& env, const CostParams& costs, int episodes,
                            std::uint64_t seed);

class Trainer {
 public:
  Trainer(EnvConfig env, TrainerConfig config, CostParams costs, std::unique_ptr<Actor> actor, std::uint64_t seed);

  // One pass of the outer loop: roll an episode into replay, then update.
  TrainLogRow train_step();
  // Runs config.max_steps training steps, reporting each row.
  void train(const std::function<void(const TrainLogRow&)>& on_row = {});

  struct UpdateStats {
    double actor_loss = 0.0;
    double critic_loss = 0.0;
  };
  // One gradient update on a replay batch. Throws TrainingError on divergence.
  UpdateStats update();

  const Actor& actor() const { return *actor_; }
  const Actor& target_actor() const { return *target_actor_; }
  const DenseNet& q1() const { return q1_; }
  const DenseNet& q2() const { return q2_; }
  const DenseNet& q1_target() const { return q1_target_; }
  const DenseNet& q2_target() const { return q2_target_; }
  const ReplayMemory& replay() const { return replay_; }
  long steps_done() const { return steps_; }
  const TrainerConfig& config() const { return config_; }

  nlohmann::json checkpoint() const;

 private:
  EnvConfig env_;
  EnvConfig train_env_;
  TrainerConfig config_;
  CostParams costs_;
  std::uint64_t seed_;
  std::unique_ptr<Actor> actor_;
  std::unique_ptr<Actor> target_actor_;
  DenseNet q1_, q2_, q1_target_, q2_target_;
  Adam actor_opt_, q1_opt_, q2_opt_;
  ReplayMemory replay_;
  Rng env_rng_, policy_rng_, replay_rng_, update_rng_;
  long steps_ = 0;
};

}  // namespace hiaudit
