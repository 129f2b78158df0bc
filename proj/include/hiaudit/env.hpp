#pragma once

// The audit-selection POMDP. The hidden client states are fixed for an
// episode; the agent only ever sees the posterior belief.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hiaudit/belief.hpp"
#include "hiaudit/cost.hpp"
#include "hiaudit/rng.hpp"

namespace hiaudit {

struct EnvConfig {
  int num_clients = 5;
  double q = 0.2;              // model-audit flip probability
  double eta_th = 0.8;         // blocking threshold on max belief
  int max_rounds = 20;         // L
  double xi = 0.4;             // information vs audit-count weight in the reward
  double eps_clamp = 1e-6;     // belief clamp inside the log-ratio
  double malicious_fraction = 0.5;
  std::optional<int> malicious_count;  // exact count placed uniformly when set
  int post_rounds = 0;         // retention horizon after the elimination wave
  std::uint64_t seed = 0;

  // Throws ConfigError.
  void validate() const;
};

struct EnvState {
  ClientState true_state;
  Belief belief;
  int round = 0;
  bool done = false;
  bool blocked = false;  // done through the blocking rule rather than truncation
  CostLedger ledger;
};

struct StepInfo {
  int round = 0;
  double abllr_delta = 0.0;
  int audited_count = 0;
  bool blocked = false;
  bool truncated = false;
};

struct StepOutcome {
  Belief next_belief;
  double reward = 0.0;
  bool done = false;
  Observation observation;
  StepInfo info;
};

struct EpisodeResult {
  std::vector<int> flagged;     // clients sent to parameter audit (or eliminated outright)
  std::vector<int> eliminated;
  int malicious_total = 0;
  int survivors = 0;            // malicious clients still present at the end
  bool honest_flagged = false;  // MAP hypothesis accused at least one honest client
  bool honest_eliminated = false;
  bool misjudged = false;
  bool blocked = false;
  int t_stop = 0;
  CostLedger ledger;
  double c_total = 0.0;
};

EnvState reset(const EnvConfig& config, Rng& rng);

// Noisy model audit: each audited bit flips independently with probability q.
Observation observe(std::span<const std::uint8_t> true_state, const AuditSelection& sel, double q, Rng& rng);

// sum_i p_i log(p_i / (1 - p_i)) over the clamped belief.
double abllr(std::span<const double> belief, double eps_clamp);

double reward(std::span<const double> prev_belief, std::span<const double> next_belief,
              const AuditSelection& sel, double xi, double eps_clamp = 1e-6);

// Advances one audit round in place. Throws UsageError on a finished episode.
StepOutcome step(EnvState& state, const AuditSelection& action, const EnvConfig& config,
                 const CostParams& costs, Rng& rng);

// Parameter-audits the MAP-flagged clients with a perfect oracle and settles the
// episode's costs. Throws UsageError before the episode is done.
EpisodeResult finalize(const EnvState& state, const EnvConfig& config, const CostParams& costs);

}  // namespace hiaudit
