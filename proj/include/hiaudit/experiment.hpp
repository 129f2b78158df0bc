#pragma once

// Reproducible experiment runs: configuration, seeding, metric rows and the
// train / evaluate / sweep / compare drivers behind the CLI.
//
// Seeding: every random stream is derived from the master seed with
// derive_seed(master, stream, index), so results depend only on
// (config, seed). Episode e of an evaluation cell plays with
//   env stream    derive_seed(cell_seed, kEnv, e)
//   policy stream derive_seed(cell_seed, kPolicy, e)
// With paired seeds every cell shares cell_seed = derive_seed(master, kEval, 0),
// otherwise cell k uses derive_seed(master, kEval, k + 1).

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hiaudit/baselines.hpp"
#include "hiaudit/diffusion.hpp"
#include "hiaudit/trainer.hpp"
#include "json.hpp"

namespace hiaudit {

inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kToolVersion = "1.0.0";

struct ExperimentConfig {
  EnvConfig env;
  TrainerConfig trainer;
  std::optional<CostParams> costs;  // drawn from the master seed when absent
  PolicyKind policy = PolicyKind::kDrlAss;
  MechanismKind mechanism = MechanismKind::kHiAudit;
  int tests = 100;
  std::vector<double> eta_th_list;
  std::vector<double> malicious_list;
  bool exact_malicious_count = true;  // a fraction f places round(f * N) attackers
  bool paired_seeds = true;
  bool greedy_eval = false;
  bool random_exclude_empty = false;
  int diffusion_steps = 5;
  DiffusionOptions diffusion;
  std::vector<int> sac_hidden = {256, 256};
  std::filesystem::path out_dir = "runs/default";
  std::uint64_t seed = 1;
  std::optional<std::filesystem::path> checkpoint;

  // Throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);

CostParams resolve_costs(const ExperimentConfig& c);

struct MetricsRow {
  std::string policy;
  std::string mechanism;
  double eta_th = 0.0;
  double malicious_fraction = 0.0;
  std::uint64_t seed = 0;
  double misjudgment_rate = 0.0;
  double c_model = 0.0;
  double c_para = 0.0;
  double c_mal = 0.0;
  double c_total = 0.0;
  double mean_t_stop = 0.0;
  int episodes = 0;
};

std::string metrics_csv_header();
std::string to_csv_line(const MetricsRow& r);
std::string training_log_header();
std::string to_csv_line(const TrainLogRow& r);
// Shortest round-trip-stable text for CSV cells.
std::string format_number(double v);

// Fresh (untrained) actor of the configured kind, initialised from the master seed.
std::unique_ptr<Actor> make_actor(const ExperimentConfig& c);
// Policy for evaluation; trained kinds load their actor from the checkpoint.
std::unique_ptr<Policy> make_policy(const ExperimentConfig& c, const nlohmann::json* checkpoint);

nlohmann::json load_checkpoint(const std::filesystem::path& path);

// Env config for one (eta_th, malicious fraction) cell.
EnvConfig cell_env(const ExperimentConfig& c, double eta_th, double malicious_fraction);
std::uint64_t cell_seed(const ExperimentConfig& c, std::size_t cell_index);

MetricsRow evaluate_cell(const Policy& policy, MechanismKind mechanism, const ExperimentConfig& c,
                         const CostParams& costs, double eta_th, double malicious_fraction, std::uint64_t seed);

struct TrainOutcome {
  std::filesystem::path run_dir;
  nlohmann::json checkpoint;
  long steps = 0;
};

// Each command writes its outputs (plus the resolved config) into c.out_dir.
TrainOutcome cmd_train(const ExperimentConfig& c);
std::vector<MetricsRow> cmd_evaluate(const ExperimentConfig& c);
std::vector<MetricsRow> cmd_sweep(const ExperimentConfig& c);
std::vector<MetricsRow> cmd_compare(const ExperimentConfig& c);

}  // namespace hiaudit
