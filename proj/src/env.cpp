#include "hiaudit/env.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hiaudit/errors.hpp"

namespace hiaudit {

void EnvConfig::validate() const {
  if (num_clients < 1 || num_clients > kMaxClients)
    throw ConfigError("num_clients must be in [1, " + std::to_string(kMaxClients) + "]");
  if (!(q > 0.0 && q < 0.5)) throw ConfigError("q must lie in (0, 0.5)");
  const double floor = 1.0 / static_cast<double>(hypothesis_count(num_clients));
  if (!(eta_th > floor && eta_th < 1.0)) throw ConfigError("eta_th must lie in (1/2^N, 1)");
  if (max_rounds < 1) throw ConfigError("max_rounds must be >= 1");
  if (!(xi >= 0.0 && xi <= 1.0)) throw ConfigError("xi must lie in [0, 1]");
  if (!(eps_clamp > 0.0 && eps_clamp <= 1e-3)) throw ConfigError("eps_clamp must lie in (0, 1e-3]");
  if (!(malicious_fraction >= 0.0 && malicious_fraction <= 1.0))
    throw ConfigError("malicious_fraction must lie in [0, 1]");
  if (malicious_count && (*malicious_count < 0 || *malicious_count > num_clients))
    throw ConfigError("malicious_count must lie in [0, num_clients]");
  if (post_rounds < 0) throw ConfigError("post_rounds must be >= 0");
}

EnvState reset(const EnvConfig& config, Rng& rng) {
  config.validate();
  const int n = config.num_clients;
  EnvState state;
  state.true_state.assign(n, 0);
  if (config.malicious_count) {
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (int i = 0; i < *config.malicious_count; ++i) {
      const auto pick = i + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(n - i)));
      std::swap(order[i], order[pick]);
      state.true_state[order[i]] = 1;
    }
  } else {
    for (int i = 0; i < n; ++i) state.true_state[i] = rng.bernoulli(config.malicious_fraction) ? 1 : 0;
  }
  state.belief = uniform_belief(n);
  return state;
}

Observation observe(std::span<const std::uint8_t> true_state, const AuditSelection& sel, double q, Rng& rng) {
  const int n = static_cast<int>(true_state.size());
  if (sel.num_clients() != n) throw ShapeError("selection and state disagree on the client count");
  Observation obs(n);
  for (int i = 0; i < n; ++i) {
    if (!sel.contains(i)) continue;
    const bool truth = true_state[i] != 0;
    obs.record(i, rng.bernoulli(q) ? !truth : truth);
  }
  return obs;
}

double abllr(std::span<const double> belief, double eps_clamp) {
  double sum = 0.0;
  for (double p : belief) {
    const double c = std::clamp(p, eps_clamp, 1.0 - eps_clamp);
    sum += c * std::log(c / (1.0 - c));
  }
  return sum;
}

double reward(std::span<const double> prev_belief, std::span<const double> next_belief,
              const AuditSelection& sel, double xi, double eps_clamp) {
  const double info = abllr(next_belief, eps_clamp) - abllr(prev_belief, eps_clamp);
  return xi * info - (1.0 - xi) * static_cast<double>(sel.size());
}

StepOutcome step(EnvState& state, const AuditSelection& action, const EnvConfig& config,
                 const CostParams& costs, Rng& rng) {
  if (state.done) throw UsageError("step() called on a finished episode");
  if (action.num_clients() != config.num_clients)
    throw ShapeError("action encodes the wrong number of clients");

  StepOutcome out;
  out.observation = observe(state.true_state, action, config.q, rng);
  out.next_belief = posterior_update(state.belief, out.observation, config.q);

  const double before = abllr(state.belief, config.eps_clamp);
  const double after = abllr(out.next_belief, config.eps_clamp);
  out.reward = config.xi * (after - before) - (1.0 - config.xi) * static_cast<double>(action.size());

  state.round += 1;
  state.ledger.audited_counts.push_back(action.size());
  state.ledger.n_history.push_back(
      static_cast<int>(std::count(state.true_state.begin(), state.true_state.end(), 1)));
  state.ledger.c_model = model_audit_cost(costs.nu, state.ledger.audited_counts);
  state.belief = out.next_belief;

  const bool blocked = should_block(state.belief, config.eta_th);
  const bool truncated = !blocked && state.round >= config.max_rounds;
  state.done = blocked || truncated;
  state.blocked = blocked;

  out.done = state.done;
  out.info = {state.round, after - before, action.size(), blocked, truncated};
  return out;
}

EpisodeResult finalize(const EnvState& state, const EnvConfig& config, const CostParams& costs) {
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
    // The parameter audit reveals the truth: confirmed attackers go, honest clients stay.
    if (malicious)
      r.eliminated.push_back(i);
    else
      r.honest_flagged = true;
  }
  r.survivors = r.malicious_total - static_cast<int>(r.eliminated.size());
  r.misjudged = r.survivors > 0;

  for (int t = 0; t < config.post_rounds; ++t) r.ledger.n_history.push_back(r.survivors);
  r.ledger.n_final = r.survivors;
  r.ledger.c_para = param_audit_cost(costs.varrho, costs.d, r.flagged);
  r.ledger.c_mal = retention_cost(costs.rho_reward, r.ledger.n_history, r.ledger.n_final, costs.k_ip);
  r.c_total = r.ledger.total(costs);
  return r;
}

}  // namespace hiaudit
