#include "hiaudit/cost.hpp"

#include <numeric>
#include <stdexcept>
#include <string>

#include "hiaudit/errors.hpp"

namespace hiaudit {

void CostParams::validate(int num_clients) const {
  if (nu < 0 || varrho < 0 || rho_reward < 0 || k_ip < 0)
    throw ConfigError("cost parameters must be nonnegative");
  if (w_model < 0 || w_para < 0 || w_mal < 0) throw ConfigError("cost weights must be nonnegative");
  if (static_cast<int>(d.size()) != num_clients)
    throw ConfigError("expected " + std::to_string(num_clients) + " sample counts, got " +
                      std::to_string(d.size()));
  for (double di : d)
    if (!(di > 0)) throw ConfigError("declared sample counts must be positive");
}

CostParams sample_cost_params(int num_clients, Rng& rng, double samples_per_client) {
  CostParams p;
  p.nu = rng.uniform(1.0e2, 2.0e2);
  p.varrho = rng.uniform(1.0e4, 4.0e4);
  p.d.assign(num_clients, samples_per_client);
  return p;
}

double model_audit_cost(double nu, std::span<const int> audited_counts) {
  long total = 0;
  for (int c : audited_counts) {
    if (c < 0) throw std::invalid_argument("negative audited count");
    total += c;
  }
  return nu * static_cast<double>(total);
}

double param_audit_cost(double varrho, std::span<const double> d, std::span<const int> clients) {
  double total = 0.0;
  for (int i : clients) {
    if (i < 0 || i >= static_cast<int>(d.size())) throw std::out_of_range("client outside sample table");
    total += varrho * d[i];
  }
  return total;
}

double retention_cost(double rho_reward, std::span<const int> n_history, int n_final, double k_ip) {
  const long rounds = std::accumulate(n_history.begin(), n_history.end(), 0L);
  return rho_reward * static_cast<double>(rounds) + static_cast<double>(n_final) * k_ip;
}

double misjudgment_rate(long error_count, long trials) {
  if (trials <= 0) throw std::invalid_argument("misjudgment rate needs at least one trial");
  return static_cast<double>(error_count) / static_cast<double>(trials);
}

}  // namespace hiaudit
