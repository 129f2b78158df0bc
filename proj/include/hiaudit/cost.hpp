#pragma once

// Overhead accounting for the hierarchical audit.
//
// Units are kept apart: model and parameter audits are measured in CPU cycles,
// retention of malicious clients in reward units. Totals are a weighted sum
// with unit weights by default.

#include <span>
#include <vector>

#include "hiaudit/rng.hpp"

namespace hiaudit {

struct CostParams {
  double nu = 150.0;          // cycles per model audit
  double varrho = 2.5e4;      // cycles per data sample replayed by a parameter audit
  std::vector<double> d;      // declared sample count per client
  double rho_reward = 500.0;  // reward paid to each client per round
  double k_ip = 5000.0;       // IP loss per malicious client that survives
  double w_model = 1.0;
  double w_para = 1.0;
  double w_mal = 1.0;

  // Throws ConfigError on negative values, non-positive d_i or a size mismatch.
  void validate(int num_clients) const;
};

// nu ~ U[1,2]e2, varrho ~ U[1,4]e4, d_i = samples_per_client. Drawn once per experiment.
CostParams sample_cost_params(int num_clients, Rng& rng, double samples_per_client = 100.0);

struct CostLedger {
  double c_model = 0.0;
  double c_para = 0.0;
  double c_mal = 0.0;
  std::vector<int> audited_counts;  // chi_t per model-audit round
  std::vector<int> n_history;       // malicious clients present at each round t = 1..T
  int n_final = 0;                  // malicious clients left at T

  double total(const CostParams& p) const {
    return p.w_model * c_model + p.w_para * c_para + p.w_mal * c_mal;
  }
};

double model_audit_cost(double nu, std::span<const int> audited_counts);

// clients are 0-based indices into d.
double param_audit_cost(double varrho, std::span<const double> d, std::span<const int> clients);

double retention_cost(double rho_reward, std::span<const int> n_history, int n_final, double k_ip);

// error_count / trials. Throws std::invalid_argument when trials == 0.
double misjudgment_rate(long error_count, long trials);

}  // namespace hiaudit
