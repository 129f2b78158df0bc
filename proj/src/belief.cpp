#include "hiaudit/belief.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>
#include <string>

namespace hiaudit {

namespace {

void check_clients(int num_clients) {
  if (num_clients < 1 || num_clients > kMaxClients)
    throw std::out_of_range("client count must be in [1, " + std::to_string(kMaxClients) +
                            "], got " + std::to_string(num_clients));
}

void check_client(int client, int num_clients) {
  if (client < 0 || client >= num_clients)
    throw std::out_of_range("client index " + std::to_string(client) + " outside [0, " +
                            std::to_string(num_clients) + ")");
}

}  // namespace

ClientState bin_n(Hypothesis j, int num_clients) {
  check_clients(num_clients);
  if (j >= hypothesis_count(num_clients))
    throw std::out_of_range("hypothesis " + std::to_string(j) + " needs more than " +
                            std::to_string(num_clients) + " bits");
  ClientState state(num_clients);
  for (int i = 0; i < num_clients; ++i) state[i] = (j & client_bit(i, num_clients)) ? 1 : 0;
  return state;
}

Hypothesis hypothesis_of(std::span<const std::uint8_t> state) {
  const int n = static_cast<int>(state.size());
  check_clients(n);
  Hypothesis j = 0;
  for (int i = 0; i < n; ++i)
    if (state[i]) j |= client_bit(i, n);
  return j;
}

int clients_for_belief(std::span<const double> belief) {
  const auto h = belief.size();
  if (h < 2 || !std::has_single_bit(h))
    throw std::invalid_argument("belief size " + std::to_string(h) + " is not 2^N with N >= 1");
  const int n = std::countr_zero(h);
  check_clients(n);
  return n;
}

AuditSelection::AuditSelection(std::uint32_t action, int num_clients)
    : action_(action), num_clients_(num_clients) {
  check_clients(num_clients);
  if (action >= hypothesis_count(num_clients))
    throw std::out_of_range("action " + std::to_string(action) + " outside [0, 2^" +
                            std::to_string(num_clients) + ")");
}

AuditSelection AuditSelection::of_clients(std::span<const int> clients, int num_clients) {
  check_clients(num_clients);
  std::uint32_t action = 0;
  for (int c : clients) {
    check_client(c, num_clients);
    action |= client_bit(c, num_clients);
  }
  return {action, num_clients};
}

int AuditSelection::size() const { return std::popcount(action_); }

std::vector<int> AuditSelection::clients() const {
  std::vector<int> out;
  for (int i = 0; i < num_clients_; ++i)
    if (contains(i)) out.push_back(i);
  return out;
}

void Observation::record(int client, bool flagged_malicious) {
  check_client(client, num_clients_);
  const auto bit = client_bit(client, num_clients_);
  mask_ |= bit;
  if (flagged_malicious)
    bits_ |= bit;
  else
    bits_ &= ~bit;
}

int Observation::size() const { return std::popcount(mask_); }

std::optional<bool> Observation::value(int client) const {
  check_client(client, num_clients_);
  const auto bit = client_bit(client, num_clients_);
  if (!(mask_ & bit)) return std::nullopt;
  return (bits_ & bit) != 0;
}

std::vector<std::pair<int, bool>> Observation::entries() const {
  std::vector<std::pair<int, bool>> out;
  for (int i = 0; i < num_clients_; ++i)
    if (auto v = value(i)) out.emplace_back(i, *v);
  return out;
}

Belief uniform_belief(int num_clients) {
  check_clients(num_clients);
  const auto h = hypothesis_count(num_clients);
  return Belief(h, 1.0 / static_cast<double>(h));
}

double likelihood(const Observation& obs, Hypothesis j, double q) {
  if (!(q > 0.0 && q < 1.0))
    throw std::invalid_argument("audit error probability must lie in (0, 1), got " + std::to_string(q));
  if (obs.empty()) return 1.0;
  const int mismatches = std::popcount((obs.bits() ^ j) & obs.mask());
  const int matches = obs.size() - mismatches;
  return std::pow(q, mismatches) * std::pow(1.0 - q, matches);
}

Belief posterior_update(std::span<const double> prior, const Observation& obs, double q) {
  if (!(q > 0.0 && q < 1.0))
    throw std::invalid_argument("audit error probability must lie in (0, 1), got " + std::to_string(q));
  if (!obs.empty() && prior.size() != hypothesis_count(obs.num_clients()))
    throw std::invalid_argument("belief size does not match the observation's client count");
  Belief next(prior.begin(), prior.end());
  if (obs.empty()) return next;

  // Only mismatch counts 0..k occur, so tabulate the likelihood once per count.
  const int k = obs.size();
  std::vector<double> table(k + 1);
  for (int m = 0; m <= k; ++m) table[m] = std::pow(q, m) * std::pow(1.0 - q, k - m);

  double total = 0.0;
  for (Hypothesis j = 0; j < next.size(); ++j) {
    next[j] *= table[std::popcount((obs.bits() ^ j) & obs.mask())];
    total += next[j];
  }
  if (!(total > 0.0) || !std::isfinite(total))
    throw std::logic_error("posterior normaliser is not positive; prior was invalid");
  for (double& p : next) p /= total;
  return next;
}

bool should_block(std::span<const double> belief, double eta_th) {
  return !belief.empty() && *std::max_element(belief.begin(), belief.end()) > eta_th;
}

Hypothesis map_hypothesis(std::span<const double> belief) {
  if (belief.empty()) throw std::invalid_argument("empty belief");
  // max_element returns the first maximum, which is the lowest-index tie-break.
  return static_cast<Hypothesis>(std::max_element(belief.begin(), belief.end()) - belief.begin());
}

std::vector<double> marginal_malicious(std::span<const double> belief) {
  const int n = clients_for_belief(belief);
  std::vector<double> out(n, 0.0);
  for (Hypothesis j = 0; j < belief.size(); ++j)
    for (int i = 0; i < n; ++i)
      if (j & client_bit(i, n)) out[i] += belief[j];
  return out;
}

}  // namespace hiaudit
