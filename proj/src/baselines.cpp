#include "hiaudit/baselines.hpp"

#include <algorithm>

#include "hiaudit/errors.hpp"

namespace hiaudit {

std::string to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::kDrlAss: return "drl_ass";
    case PolicyKind::kSacCategorical: return "sac_categorical";
    case PolicyKind::kRandom: return "random";
    case PolicyKind::kAuditAll: return "audit_all";
    case PolicyKind::kAuditNone: return "audit_none";
  }
  return "?";
}

std::string to_string(MechanismKind k) {
  switch (k) {
    case MechanismKind::kHiAudit: return "hiaudit";
    case MechanismKind::kOnlyModel: return "only_model";
    case MechanismKind::kOnlyParam: return "only_param";
  }
  return "?";
}

PolicyKind policy_from_string(const std::string& s) {
  for (auto k : {PolicyKind::kDrlAss, PolicyKind::kSacCategorical, PolicyKind::kRandom, PolicyKind::kAuditAll,
                 PolicyKind::kAuditNone})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown policy '" + s + "'");
}

MechanismKind mechanism_from_string(const std::string& s) {
  for (auto k : {MechanismKind::kHiAudit, MechanismKind::kOnlyModel, MechanismKind::kOnlyParam})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown mechanism '" + s + "'");
}

std::vector<double> RandomPolicy::distribution(std::span<const double>, Rng&) const {
  const auto h = hypothesis_count(num_clients_);
  if (!exclude_empty_) return std::vector<double>(h, 1.0 / static_cast<double>(h));
  std::vector<double> p(h, 1.0 / static_cast<double>(h - 1));
  p[0] = 0.0;
  return p;
}

std::vector<double> FixedActionPolicy::distribution(std::span<const double>, Rng&) const {
  std::vector<double> p(hypothesis_count(num_clients_), 0.0);
  p.at(action_) = 1.0;
  return p;
}

SoftmaxActor::SoftmaxActor(int num_clients, std::vector<int> hidden, Rng& init_rng) {
  const int a = static_cast<int>(hypothesis_count(num_clients));
  std::vector<int> dims{a};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(a);
  std::vector<Activation> acts(hidden.size(), Activation::kMish);
  acts.push_back(Activation::kIdentity);
  net_ = DenseNet(dims, acts, init_rng);
}

SoftmaxActor::SoftmaxActor(DenseNet net) : net_(std::move(net)) {
  if (net_.input_dim() != net_.output_dim()) throw ShapeError("softmax actor maps beliefs to same-size logits");
}

Matrix SoftmaxActor::forward(const Matrix& beliefs, Rng&, ActorTrace* trace) const {
  if (trace) trace->caches.assign(1, {});
  Matrix logits = net_.forward(beliefs, trace ? &trace->caches[0] : nullptr);
  Matrix probs = softmax_columns(logits);
  if (trace) {
    trace->logits = std::move(logits);
    trace->probs = probs;
  }
  return probs;
}

void SoftmaxActor::backward(const ActorTrace& trace, const Matrix& logits_grad, Gradients& grads) const {
  if (trace.caches.size() != 1) throw UsageError("trace was not recorded by a softmax actor");
  net_.backward(trace.caches[0], logits_grad, grads);
}

nlohmann::json SoftmaxActor::to_json() const { return {{"kind", "softmax"}, {"net", net_.to_json()}}; }

SoftmaxActor SoftmaxActor::from_json(const nlohmann::json& j) { return SoftmaxActor(DenseNet::from_json(j.at("net"))); }

EpisodeResult only_model_audit_finalize(const EnvState& state, const EnvConfig& config, const CostParams& costs) {
  if (!state.done) throw UsageError("finalize() called before the episode finished");
  const int n = config.num_clients;
  const ClientState accused = bin_n(map_hypothesis(state.belief), n);

  EpisodeResult r;
  r.blocked = state.blocked;
  r.t_stop = state.round;
  r.ledger = state.ledger;
  for (int i = 0; i < n; ++i) {
    const bool malicious = state.true_state[i] != 0;
    r.malicious_total += malicious ? 1 : 0;
    if (!accused[i]) continue;
    r.flagged.push_back(i);
    r.eliminated.push_back(i);  // no second opinion: accused clients are removed
    if (!malicious) r.honest_flagged = r.honest_eliminated = true;
  }
  r.survivors = 0;
  for (int i = 0; i < n; ++i)
    if (state.true_state[i] && !accused[i]) ++r.survivors;
  r.misjudged = r.honest_eliminated || r.survivors > 0;

  for (int t = 0; t < config.post_rounds; ++t) r.ledger.n_history.push_back(r.survivors);
  r.ledger.n_final = r.survivors;
  r.ledger.c_para = 0.0;
  r.ledger.c_mal = retention_cost(costs.rho_reward, r.ledger.n_history, r.ledger.n_final, costs.k_ip);
  r.c_total = r.ledger.total(costs);
  return r;
}

EpisodeResult only_param_audit_finalize(const EnvState& fresh_state, const EnvConfig& config,
                                        const CostParams& costs) {
  const int n = config.num_clients;
  EpisodeResult r;
  r.blocked = true;
  r.t_stop = 1;
  for (int i = 0; i < n; ++i) {
    r.flagged.push_back(i);
    if (fresh_state.true_state[i]) {
      r.eliminated.push_back(i);
      ++r.malicious_total;
    }
  }
  r.survivors = 0;
  r.misjudged = false;
  r.ledger.n_history.push_back(r.malicious_total);  // attackers are paid for the first round
  for (int t = 0; t < config.post_rounds; ++t) r.ledger.n_history.push_back(0);
  r.ledger.n_final = 0;
  r.ledger.c_model = 0.0;
  r.ledger.c_para = param_audit_cost(costs.varrho, costs.d, r.flagged);
  r.ledger.c_mal = retention_cost(costs.rho_reward, r.ledger.n_history, 0, costs.k_ip);
  r.c_total = r.ledger.total(costs);
  return r;
}

EpisodeTrace run_episode(const Policy& policy, MechanismKind mechanism, const EnvConfig& config,
                         const CostParams& costs, Rng& env_rng, Rng& policy_rng, bool greedy) {
  EpisodeTrace trace;
  EnvState state = reset(config, env_rng);
  if (mechanism == MechanismKind::kOnlyParam) {
    trace.result = only_param_audit_finalize(state, config, costs);
    return trace;
  }
  while (!state.done) {
    const auto probs = policy.distribution(state.belief, policy_rng);
    const auto action = greedy ? argmax_action(probs) : sample_action(probs, policy_rng);
    const auto out = step(state, AuditSelection(action, config.num_clients), config, costs, env_rng);
    trace.total_reward += out.reward;
    ++trace.steps;
  }
  trace.result = mechanism == MechanismKind::kHiAudit ? finalize(state, config, costs)
                                                      : only_model_audit_finalize(state, config, costs);
  return trace;
}

}  // namespace hiaudit
