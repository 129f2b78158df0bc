#pragma once

// Exact Bayesian bookkeeping over the 2^N joint honest/malicious hypotheses.
//
// Clients are indexed 0..N-1 in code. Client 0 is the most significant bit of a
// hypothesis index, so hypothesis 3 at N = 5 ("00011") marks the last two
// clients as malicious.

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace hiaudit {

inline constexpr int kMaxClients = 10;

using Hypothesis = std::uint32_t;
using Belief = std::vector<double>;
// One entry per client: 0 = honest, 1 = malicious.
using ClientState = std::vector<std::uint8_t>;

inline std::uint32_t hypothesis_count(int num_clients) { return 1u << num_clients; }

// Bit of `client` inside a hypothesis/action index.
inline std::uint32_t client_bit(int client, int num_clients) {
  return 1u << (num_clients - 1 - client);
}

// N-bit big-endian expansion of j. Throws std::out_of_range when j >= 2^N.
ClientState bin_n(Hypothesis j, int num_clients);

// Inverse of bin_n.
Hypothesis hypothesis_of(std::span<const std::uint8_t> state);

// Number of clients implied by a belief of size 2^N. Throws on non powers of two.
int clients_for_belief(std::span<const double> belief);

// A subset of clients to model-audit, encoded as an action in [0, 2^N).
class AuditSelection {
 public:
  AuditSelection(std::uint32_t action, int num_clients);

  static AuditSelection none(int num_clients) { return {0, num_clients}; }
  static AuditSelection all(int num_clients) { return {hypothesis_count(num_clients) - 1, num_clients}; }
  static AuditSelection of_clients(std::span<const int> clients, int num_clients);

  std::uint32_t action() const { return action_; }
  int num_clients() const { return num_clients_; }
  int size() const;
  bool empty() const { return action_ == 0; }
  bool contains(int client) const { return (action_ & client_bit(client, num_clients_)) != 0; }
  std::vector<int> clients() const;

 private:
  std::uint32_t action_;
  int num_clients_;
};

// Binary model-audit results for the audited clients of one round.
class Observation {
 public:
  explicit Observation(int num_clients = 0) : num_clients_(num_clients) {}

  void record(int client, bool flagged_malicious);

  int num_clients() const { return num_clients_; }
  // Audited clients as a hypothesis-space bitmask, and their results in the same positions.
  std::uint32_t mask() const { return mask_; }
  std::uint32_t bits() const { return bits_; }
  int size() const;
  bool empty() const { return mask_ == 0; }
  std::optional<bool> value(int client) const;
  // (client, result) pairs in ascending client order.
  std::vector<std::pair<int, bool>> entries() const;

 private:
  int num_clients_;
  std::uint32_t mask_ = 0;
  std::uint32_t bits_ = 0;
};

Belief uniform_belief(int num_clients);

// P(obs | H_j) for a binary channel that flips each audited bit with probability q.
double likelihood(const Observation& obs, Hypothesis j, double q);

// One Bayes step under the quasi-static state model. Empty observations return the prior.
Belief posterior_update(std::span<const double> prior, const Observation& obs, double q);

// Blocking rule: strictly greater than the threshold.
bool should_block(std::span<const double> belief, double eta_th);

// argmax, lowest index on ties.
Hypothesis map_hypothesis(std::span<const double> belief);

// Per-client posterior probability of being malicious.
std::vector<double> marginal_malicious(std::span<const double> belief);

}  // namespace hiaudit
