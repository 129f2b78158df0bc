#include "hiaudit/trainer.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include "hiaudit/errors.hpp"

namespace hiaudit {

ReplayMemory::ReplayMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

void ReplayMemory::push(Transition t) {
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(t));
}

std::vector<const Transition*> ReplayMemory::sample(std::size_t batch, Rng& rng) const {
  const std::size_t n = items_.size();
  const std::size_t k = std::min(batch, n);
  // Partial Fisher-Yates over indices.
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<const Transition*> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.uniform_int(n - i);
    std::swap(idx[i], idx[j]);
    out.push_back(&items_[idx[i]]);
  }
  return out;
}

void TrainerConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must lie in [0, 1)");
  if (!(alpha >= 0.0)) throw ConfigError("alpha must be >= 0");
  if (!(iota > 0.0 && iota <= 1.0)) throw ConfigError("iota must lie in (0, 1]");
  if (batch_size < 1 || capacity < 1 || batch_size > capacity) throw ConfigError("need 1 <= batch_size <= capacity");
  if (warmup < 0 || updates_per_episode < 0 || max_steps < 0) throw ConfigError("counts must be nonnegative");
  if (!(actor_lr >= 0.0 && critic_lr >= 0.0)) throw ConfigError("learning rates must be nonnegative");
  if (eval_every < 0 || episodes_per_eval < 1) throw ConfigError("invalid evaluation schedule");
  if (critic_hidden.empty()) throw ConfigError("critics need at least one hidden layer");
}

Matrix critic_min(const Matrix& q1, const Matrix& q2) {
  if (q1.rows() != q2.rows() || q1.cols() != q2.cols()) throw ShapeError("critic outputs differ in shape");
  if (!q1.allFinite() || !q2.allFinite()) throw TrainingError("non-finite critic output");
  return q1.cwiseMin(q2);
}

ActorObjective actor_objective(const Matrix& probs, const Matrix& q, double alpha) {
  if (probs.rows() != q.rows() || probs.cols() != q.cols()) throw ShapeError("policy and critic shapes differ");
  const auto batch = static_cast<double>(probs.cols());
  const Eigen::ArrayXXd logp = probs.array().max(1e-300).log();
  const double value = (probs.array() * q.array()).sum();
  const double entropy = -(probs.array() * logp).sum();
  ActorObjective out;
  out.loss = -(value + alpha * entropy) / batch;
  // d/dp [p.Q - alpha * sum p log p] = Q - alpha (log p + 1)
  out.probs_grad = (-(q.array() - alpha * (logp + 1.0)) / batch).matrix();
  return out;
}

ActorLoss actor_loss(const Matrix& beliefs, const Actor& actor, const DenseNet& q1, const DenseNet& q2,
                     double alpha, Rng& rng) {
  if (beliefs.cols() == 0) throw std::invalid_argument("actor loss needs a nonempty batch");
  ActorTrace trace;
  actor.forward(beliefs, rng, &trace);
  const Matrix q = critic_min(q1.forward(beliefs), q2.forward(beliefs));
  const auto obj = actor_objective(trace.probs, q, alpha);
  if (!std::isfinite(obj.loss)) throw TrainingError("actor loss is not finite");
  ActorLoss out;
  out.loss = obj.loss;
  out.entropy = -(trace.probs.array() * trace.probs.array().max(1e-300).log()).sum() /
                static_cast<double>(beliefs.cols());
  out.grads = actor.net().zero_gradients();
  actor.backward(trace, softmax_backward(trace.probs, obj.probs_grad), out.grads);
  return out;
}

std::vector<double> td_targets(std::span<const Transition* const> batch, const Actor& target_actor,
                               const DenseNet& q1_target, const DenseNet& q2_target, double gamma, Rng& rng,
                               double alpha, bool entropy_term) {
  std::vector<Belief> next;
  next.reserve(batch.size());
  for (const auto* t : batch) next.push_back(t->next_belief);
  const Matrix beliefs = beliefs_to_matrix(next);
  const Matrix pi = target_actor.forward(beliefs, rng, nullptr);
  const Matrix q = critic_min(q1_target.forward(beliefs), q2_target.forward(beliefs));
  Eigen::ArrayXXd v = pi.array() * q.array();
  if (entropy_term) v -= alpha * pi.array() * pi.array().max(1e-300).log();
  const Eigen::RowVectorXd value = v.colwise().sum().matrix();

  std::vector<double> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    y[i] = batch[i]->reward + (batch[i]->done ? 0.0 : gamma * value(static_cast<Eigen::Index>(i)));
  return y;
}

double td_target(const Transition& t, const Actor& target_actor, const DenseNet& q1_target,
                 const DenseNet& q2_target, double gamma, Rng& rng) {
  const Transition* one[] = {&t};
  return td_targets(one, target_actor, q1_target, q2_target, gamma, rng).front();
}

CriticLoss critic_loss(const Matrix& beliefs, std::span<const std::uint32_t> actions, std::span<const double> targets,
                       const DenseNet& q1, const DenseNet& q2) {
  const auto batch = beliefs.cols();
  if (batch == 0) throw std::invalid_argument("critic loss needs a nonempty batch");
  if (static_cast<Eigen::Index>(actions.size()) != batch || static_cast<Eigen::Index>(targets.size()) != batch)
    throw ShapeError("actions/targets do not match the batch");

  CriticLoss out;
  auto one = [&](const DenseNet& q, double& loss, Gradients& grads) {
    DenseNet::Cache cache;
    const Matrix values = q.forward(beliefs, &cache);
    Matrix grad = Matrix::Zero(values.rows(), values.cols());
    loss = 0.0;
    for (Eigen::Index b = 0; b < batch; ++b) {
      const auto a = static_cast<Eigen::Index>(actions[b]);
      if (a >= values.rows()) throw std::out_of_range("action outside the critic's output");
      const double err = values(a, b) - targets[b];
      loss += err * err;
      grad(a, b) = 2.0 * err / static_cast<double>(batch);
    }
    loss /= static_cast<double>(batch);
    grads = q.zero_gradients();
    q.backward(cache, grad, grads);
  };
  one(q1, out.loss_q1, out.grads_q1);
  one(q2, out.loss_q2, out.grads_q2);
  out.loss = out.loss_q1 + out.loss_q2;
  if (!std::isfinite(out.loss)) throw TrainingError("critic loss is not finite");
  return out;
}

EvalSummary evaluate_policy(const Policy& policy, const EnvConfig& env, const CostParams& costs, int episodes,
                            std::uint64_t seed) {
  if (episodes < 1) throw std::invalid_argument("evaluation needs at least one episode");
  EvalSummary s;
  long errors = 0;
  for (int e = 0; e < episodes; ++e) {
    Rng env_rng(derive_seed(seed, streams::kEnv, static_cast<std::uint64_t>(e)));
    Rng policy_rng(derive_seed(seed, streams::kPolicy, static_cast<std::uint64_t>(e)));
    const auto trace = run_episode(policy, MechanismKind::kHiAudit, env, costs, env_rng, policy_rng);
    errors += trace.result.misjudged ? 1 : 0;
    s.mean_overhead += trace.result.c_total;
    s.mean_reward += trace.total_reward;
    s.mean_steps += trace.steps;
  }
  s.misjudgment_rate = misjudgment_rate(errors, episodes);
  s.mean_overhead /= episodes;
  s.mean_reward /= episodes;
  s.mean_steps /= episodes;
  return s;
}

namespace {

DenseNet make_critic(int num_clients, const std::vector<int>& hidden, Rng& rng) {
  const int a = static_cast<int>(hypothesis_count(num_clients));
  std::vector<int> dims{a};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(a);
  std::vector<Activation> acts(hidden.size(), Activation::kMish);
  acts.push_back(Activation::kIdentity);
  return DenseNet(dims, acts, rng);
}

}  // namespace

Trainer::Trainer(EnvConfig env, TrainerConfig config, CostParams costs, std::unique_ptr<Actor> actor,
                 std::uint64_t seed)
    : env_(std::move(env)),
      train_env_(env_),
      config_(std::move(config)),
      costs_(std::move(costs)),
      seed_(seed),
      actor_(std::move(actor)),
      replay_(static_cast<std::size_t>(config_.capacity)),
      env_rng_(derive_seed(seed, streams::kEnv, 0)),
      policy_rng_(derive_seed(seed, streams::kPolicy, 0)),
      replay_rng_(derive_seed(seed, streams::kReplay, 0)),
      update_rng_(derive_seed(seed, streams::kTrain, 0)) {
  env_.validate();
  config_.validate();
  costs_.validate(env_.num_clients);
  if (!actor_) throw ConfigError("trainer needs an actor");
  if (actor_->action_dim() != static_cast<int>(hypothesis_count(env_.num_clients)))
    throw ShapeError("actor action space does not match the environment");
  if (config_.sample_from_prior) {
    // Uniform prior over hypotheses == each client malicious with probability 1/2.
    train_env_.malicious_count.reset();
    train_env_.malicious_fraction = 0.5;
  }
  Rng critic_rng(derive_seed(seed, streams::kInit, 1));
  q1_ = make_critic(env_.num_clients, config_.critic_hidden, critic_rng);
  q2_ = make_critic(env_.num_clients, config_.critic_hidden, critic_rng);
  q1_target_ = q1_;
  q2_target_ = q2_;
  target_actor_ = actor_->clone();
  actor_opt_ = Adam(actor_->net(), {config_.actor_lr});
  q1_opt_ = Adam(q1_, {config_.critic_lr});
  q2_opt_ = Adam(q2_, {config_.critic_lr});
}

Trainer::UpdateStats Trainer::update() {
  const auto batch = replay_.sample(static_cast<std::size_t>(config_.batch_size), replay_rng_);
  std::vector<Belief> beliefs;
  std::vector<std::uint32_t> actions;
  beliefs.reserve(batch.size());
  for (const auto* t : batch) {
    beliefs.push_back(t->belief);
    actions.push_back(t->action);
  }
  const Matrix b = beliefs_to_matrix(beliefs);

  const auto targets = td_targets(batch, *target_actor_, q1_target_, q2_target_, config_.gamma, update_rng_,
                                  config_.alpha, config_.target_entropy_term);
  const auto closs = critic_loss(b, actions, targets, q1_, q2_);
  if (std::abs(closs.loss) > config_.divergence_limit)
    throw TrainingError("critic loss diverged (" + std::to_string(closs.loss) + ")");
  q1_opt_.step(q1_, closs.grads_q1);
  q2_opt_.step(q2_, closs.grads_q2);

  const auto aloss = actor_loss(b, *actor_, q1_, q2_, config_.alpha, update_rng_);
  if (std::abs(aloss.loss) > config_.divergence_limit)
    throw TrainingError("actor loss diverged (" + std::to_string(aloss.loss) + ")");
  actor_opt_.step(actor_->mutable_net(), aloss.grads);

  soft_update(actor_->net(), target_actor_->mutable_net(), config_.iota);
  soft_update(q1_, q1_target_, config_.iota);
  soft_update(q2_, q2_target_, config_.iota);
  return {aloss.loss, closs.loss};
}

TrainLogRow Trainer::train_step() {
  const auto start = std::chrono::steady_clock::now();
  TrainLogRow row;
  row.step = ++steps_;

  EnvState state = reset(train_env_, env_rng_);
  while (!state.done) {
    const Belief before = state.belief;
    const auto probs = actor_->distribution(before, policy_rng_);
    const auto action = sample_action(probs, policy_rng_);
    const auto out = step(state, AuditSelection(action, env_.num_clients), train_env_, costs_, env_rng_);
    row.episode_reward += out.reward;
    // Truncation at L is a time limit, not a terminal state, so it keeps its bootstrap.
    replay_.push({before, action, out.next_belief, out.reward, out.info.blocked});
  }

  const auto ready = static_cast<std::size_t>(std::max(config_.warmup, config_.batch_size));
  if (replay_.size() >= ready && config_.updates_per_episode > 0) {
    double a = 0.0, c = 0.0;
    for (int u = 0; u < config_.updates_per_episode; ++u) {
      const auto stats = update();
      a += stats.actor_loss;
      c += stats.critic_loss;
    }
    row.actor_loss = a / config_.updates_per_episode;
    row.critic_loss = c / config_.updates_per_episode;
  }

  if (config_.eval_every > 0 && row.step % config_.eval_every == 0) {
    const auto eval = evaluate_policy(*actor_, env_, costs_, config_.episodes_per_eval,
                                      derive_seed(seed_, streams::kEval, static_cast<std::uint64_t>(row.step)));
    row.eval_misjudgment = eval.misjudgment_rate;
    row.eval_overhead = eval.mean_overhead;
  }
  if (config_.record_wall_time)
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return row;
}

void Trainer::train(const std::function<void(const TrainLogRow&)>& on_row) {
  while (steps_ < config_.max_steps) {
    const auto row = train_step();
    if (on_row) on_row(row);
  }
}

nlohmann::json Trainer::checkpoint() const {
  return {{"actor", actor_->to_json()},
          {"target_actor", target_actor_->to_json()},
          {"critics",
           {{"q1", q1_.to_json()}, {"q2", q2_.to_json()}, {"q1_target", q1_target_.to_json()},
            {"q2_target", q2_target_.to_json()}}},
          {"optimizers", {{"actor", actor_opt_.to_json()}, {"q1", q1_opt_.to_json()}, {"q2", q2_opt_.to_json()}}},
          {"steps", steps_}};
}

}  // namespace hiaudit
