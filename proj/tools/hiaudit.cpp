// hiaudit: train, evaluate, sweep and compare audit-selection policies.
//
//   hiaudit train    --config cfg.json --out runs/ass
//   hiaudit evaluate --policy drl_ass --checkpoint runs/ass/checkpoint.json --malicious 0.2,0.4
//   hiaudit sweep    --policy audit_all --eta-th 0.6,0.7,0.8,0.9 --malicious 0.2,0.4
//   hiaudit compare  --policy drl_ass --checkpoint runs/ass/checkpoint.json
//
// Exit codes: 0 ok, 2 configuration error, 3 training divergence.

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hiaudit/errors.hpp"
#include "hiaudit/experiment.hpp"

namespace {

std::vector<double> parse_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw hiaudit::ConfigError(std::string("bad number '") + item + "' in " + flag);
    }
  }
  return out;
}

struct Overrides {
  std::string config;
  std::optional<std::string> policy, mechanism, out, eta_th, malicious, checkpoint;
  std::optional<std::uint64_t> seed;
  std::optional<int> tests, steps;
};

hiaudit::ExperimentConfig resolve(const Overrides& o) {
  hiaudit::ExperimentConfig c = o.config.empty() ? hiaudit::ExperimentConfig{} : hiaudit::load_config(o.config);
  if (o.policy) c.policy = hiaudit::policy_from_string(*o.policy);
  if (o.mechanism) c.mechanism = hiaudit::mechanism_from_string(*o.mechanism);
  if (o.seed) c.seed = *o.seed;
  if (o.out) c.out_dir = *o.out;
  if (o.tests) c.tests = *o.tests;
  if (o.steps) c.trainer.max_steps = *o.steps;
  if (o.eta_th) c.eta_th_list = parse_list(*o.eta_th, "--eta-th");
  if (o.malicious) c.malicious_list = parse_list(*o.malicious, "--malicious");
  if (o.checkpoint) c.checkpoint = *o.checkpoint;
  return c;
}

void print_rows(const std::vector<hiaudit::MetricsRow>& rows) {
  std::cout << hiaudit::metrics_csv_header() << '\n';
  for (const auto& r : rows) std::cout << hiaudit::to_csv_line(r) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"HiAudit audit-selection simulator and trainer"};
  app.require_subcommand(1);
  Overrides o;

  auto add_common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "JSON config file; flags override its fields");
    sub->add_option("--policy", o.policy, "drl_ass | sac_categorical | random | audit_all | audit_none");
    sub->add_option("--mechanism", o.mechanism, "hiaudit | only_model | only_param");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--out", o.out, "run directory");
    sub->add_option("--tests", o.tests, "episodes per evaluation cell");
    sub->add_option("--eta-th", o.eta_th, "comma-separated blocking thresholds");
    sub->add_option("--malicious", o.malicious, "comma-separated malicious fractions");
    sub->add_option("--checkpoint", o.checkpoint, "checkpoint.json of a trained policy");
  };

  auto* train = app.add_subcommand("train", "train a policy and write its checkpoint");
  auto* evaluate = app.add_subcommand("evaluate", "evaluate a policy per (eta_th, malicious) cell");
  auto* sweep = app.add_subcommand("sweep", "evaluate over the eta_th x malicious grid");
  auto* compare = app.add_subcommand("compare", "compare audit mechanisms on shared seeds");
  for (auto* sub : {train, evaluate, sweep, compare}) add_common(sub);
  train->add_option("--steps", o.steps, "training episodes (overrides trainer.max_steps)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const auto c = resolve(o);
    if (train->parsed()) {
      const auto out = hiaudit::cmd_train(c);
      std::cout << "trained " << out.steps << " steps; wrote " << (out.run_dir / "checkpoint.json").string() << '\n';
    } else if (evaluate->parsed()) {
      print_rows(hiaudit::cmd_evaluate(c));
    } else if (sweep->parsed()) {
      print_rows(hiaudit::cmd_sweep(c));
    } else {
      print_rows(hiaudit::cmd_compare(c));
    }
  } catch (const hiaudit::TrainingError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return 3;
  } catch (const std::invalid_argument& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
