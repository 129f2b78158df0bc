#pragma once

// Comparison policies and the alternative audit mechanisms.

#include <memory>
#include <string>

#include "hiaudit/actor.hpp"
#include "hiaudit/env.hpp"

namespace hiaudit {

enum class PolicyKind { kDrlAss, kSacCategorical, kRandom, kAuditAll, kAuditNone };
enum class MechanismKind { kHiAudit, kOnlyModel, kOnlyParam };

std::string to_string(PolicyKind k);
std::string to_string(MechanismKind k);
// Throw ConfigError on unknown tags.
PolicyKind policy_from_string(const std::string& s);
MechanismKind mechanism_from_string(const std::string& s);

inline bool is_trainable(PolicyKind k) { return k == PolicyKind::kDrlAss || k == PolicyKind::kSacCategorical; }

// Uniform over all 2^N actions, or over the nonempty ones.
class RandomPolicy : public Policy {
 public:
  explicit RandomPolicy(int num_clients, bool exclude_empty = false)
      : num_clients_(num_clients), exclude_empty_(exclude_empty) {}
  std::string name() const override { return "random"; }
  int action_dim() const override { return static_cast<int>(hypothesis_count(num_clients_)); }
  std::vector<double> distribution(std::span<const double> belief, Rng& rng) const override;

 private:
  int num_clients_;
  bool exclude_empty_;
};

// Always the same action: audit everyone, or nobody.
class FixedActionPolicy : public Policy {
 public:
  FixedActionPolicy(std::string name, int num_clients, std::uint32_t action)
      : name_(std::move(name)), num_clients_(num_clients), action_(action) {}
  static FixedActionPolicy audit_all(int num_clients) {
    return {"audit_all", num_clients, hypothesis_count(num_clients) - 1};
  }
  static FixedActionPolicy audit_none(int num_clients) { return {"audit_none", num_clients, 0}; }

  std::string name() const override { return name_; }
  int action_dim() const override { return static_cast<int>(hypothesis_count(num_clients_)); }
  std::vector<double> distribution(std::span<const double> belief, Rng& rng) const override;

 private:
  std::string name_;
  int num_clients_;
  std::uint32_t action_;
};

// Categorical actor-critic baseline: softmax over an MLP of the belief.
class SoftmaxActor : public Actor {
 public:
  SoftmaxActor(int num_clients, std::vector<int> hidden, Rng& init_rng);
  explicit SoftmaxActor(DenseNet net);

  std::string name() const override { return "sac_categorical"; }
  int action_dim() const override { return net_.output_dim(); }

  Matrix forward(const Matrix& beliefs, Rng& rng, ActorTrace* trace) const override;
  void backward(const ActorTrace& trace, const Matrix& logits_grad, Gradients& grads) const override;

  const DenseNet& net() const override { return net_; }
  DenseNet& mutable_net() override { return net_; }
  std::unique_ptr<Actor> clone() const override { return std::make_unique<SoftmaxActor>(*this); }
  nlohmann::json to_json() const override;
  static SoftmaxActor from_json(const nlohmann::json& j);

 private:
  DenseNet net_;
};

// Eliminates the MAP-flagged clients without a parameter audit.
EpisodeResult only_model_audit_finalize(const EnvState& state, const EnvConfig& config, const CostParams& costs);

// Parameter-audits every client in the first round; no model audits at all.
EpisodeResult only_param_audit_finalize(const EnvState& fresh_state, const EnvConfig& config,
                                        const CostParams& costs);

struct EpisodeTrace {
  EpisodeResult result;
  double total_reward = 0.0;
  int steps = 0;
};

// Plays one full audit episode. The environment and the policy draw from
// separate streams so mechanisms can be compared on identical client states.
EpisodeTrace run_episode(const Policy& policy, MechanismKind mechanism, const EnvConfig& config,
                         const CostParams& costs, Rng& env_rng, Rng& policy_rng, bool greedy = false);

}  // namespace hiaudit
