#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hiaudit/errors.hpp"
#include "hiaudit/experiment.hpp"

using namespace hiaudit;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("hiaudit_test_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig small_config(const std::string& name) {
  ExperimentConfig c;
  c.env.num_clients = 2;
  c.tests = 30;
  c.out_dir = scratch(name);
  c.trainer.max_steps = 200;
  c.trainer.warmup = 64;
  c.trainer.critic_hidden = {32, 32};
  c.diffusion.hidden = {16, 32, 32};
  c.seed = 5;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HIAUDIT_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config json round trip") {
  ExperimentConfig c;
  c.env.q = 0.3;
  c.env.malicious_count = 2;
  c.trainer.alpha = 0.1;
  c.policy = PolicyKind::kSacCategorical;
  c.mechanism = MechanismKind::kOnlyModel;
  c.eta_th_list = {0.6, 0.9};
  c.diffusion.variance = VarianceConvention::kStandard;
  c.diffusion_steps = 3;
  c.costs = CostParams{};
  c.costs->d.assign(5, 50.0);
  c.checkpoint = "runs/x/checkpoint.json";
  const auto back = experiment_from_json(nlohmann::json::parse(to_json(c).dump()));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.env.malicious_count == 2);
  CHECK(back.costs->d == std::vector<double>(5, 50.0));
}

TEST_CASE("config parsing rejects typos and bad values") {
  CHECK_THROWS_AS(experiment_from_json({{"tset", 3}}), ConfigError);
  CHECK_THROWS_AS(experiment_from_json({{"env", {{"N", 5}}}}), ConfigError);
  CHECK_THROWS_AS(experiment_from_json({{"policy", "greedy"}}), ConfigError);
  CHECK_THROWS_AS(experiment_from_json({{"tests", "many"}}), ConfigError);
  const auto partial = experiment_from_json({{"env", {{"q", 0.1}}}});
  CHECK(partial.env.q == 0.1);
  CHECK(partial.env.num_clients == 5);
  ExperimentConfig bad;
  bad.tests = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("csv formatting") {
  CHECK(metrics_csv_header() ==
        "policy,mechanism,eta_th,malicious_fraction,seed,misjudgment_rate,c_model,c_para,c_mal,c_total,mean_t_stop,"
        "episodes");
  MetricsRow r{"random", "hiaudit", 0.8, 0.2, 17, 0.05, 100, 2e6, 1500, 2001600, 3.5, 100};
  CHECK(to_csv_line(r) == "random,hiaudit,0.8,0.2,17,0.05,100,2000000,1500,2001600,3.5,100");
  TrainLogRow t;
  t.step = 3;
  t.episode_reward = -1.25;
  CHECK(to_csv_line(t) == "3,-1.25,,,,,0");
  CHECK(training_log_header() == "step,episode_reward,actor_loss,critic_loss,eval_misjudgment,eval_overhead,wall_ms");
}

TEST_CASE("cells place exact attacker counts and fan out seeds") {
  ExperimentConfig c;
  CHECK(cell_env(c, 0.8, 0.2).malicious_count == 1);
  CHECK(cell_env(c, 0.8, 0.6).malicious_count == 3);
  c.exact_malicious_count = false;
  CHECK_FALSE(cell_env(c, 0.8, 0.6).malicious_count.has_value());
  CHECK(cell_seed(c, 0) == cell_seed(c, 3));
  c.paired_seeds = false;
  CHECK(cell_seed(c, 0) != cell_seed(c, 1));
}

TEST_CASE("costs are drawn from the master seed unless given") {
  ExperimentConfig c;
  const auto a = resolve_costs(c);
  CHECK(a.nu >= 100);
  CHECK(resolve_costs(c).nu == a.nu);
  c.seed = 2;
  CHECK(resolve_costs(c).nu != a.nu);
  c.costs = CostParams{};
  c.costs->d.assign(5, 1.0);
  CHECK(resolve_costs(c).nu == 150.0);
}

TEST_CASE("evaluate writes metrics, summary and the resolved config") {
  auto c = small_config("evaluate");
  c.policy = PolicyKind::kAuditNone;
  c.malicious_list = {0.5, 1.0};
  const auto rows = cmd_evaluate(c);
  REQUIRE(rows.size() == 2);
  for (const auto& r : rows) {
    CHECK(r.mean_t_stop == c.env.max_rounds);
    CHECK(r.misjudgment_rate == 1.0);
    CHECK(r.c_total == doctest::Approx(r.c_model + r.c_para + r.c_mal));
  }
  CHECK(fs::exists(c.out_dir / "metrics.csv"));
  CHECK(fs::exists(c.out_dir / "summary.json"));
  const auto saved = load_config(c.out_dir / "config.json");
  CHECK(saved.policy == PolicyKind::kAuditNone);
  CHECK(saved.costs.has_value());
  const auto csv = slurp(c.out_dir / "metrics.csv");
  CHECK(csv.find('\r') == std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
}

TEST_CASE("only-param evaluation never misjudges") {
  auto c = small_config("only_param");
  c.policy = PolicyKind::kRandom;
  c.mechanism = MechanismKind::kOnlyParam;
  for (const auto& r : cmd_evaluate(c)) {
    CHECK(r.misjudgment_rate == 0.0);
    CHECK(r.c_model == 0.0);
  }
}

TEST_CASE("sweep covers the grid and rejects an empty one") {
  auto c = small_config("sweep");
  c.policy = PolicyKind::kAuditAll;
  c.eta_th_list = {0.6, 0.7, 0.8};
  c.malicious_list = {0.5, 1.0};
  const auto rows = cmd_sweep(c);
  CHECK(rows.size() == 6);
  CHECK(rows[0].eta_th == 0.6);
  CHECK(rows[1].malicious_fraction == 1.0);
  c.eta_th_list.clear();
  CHECK_THROWS_AS(cmd_sweep(c), ConfigError);
}

TEST_CASE("compare runs all three mechanisms per fraction") {
  auto c = small_config("compare");
  c.env.num_clients = 5;
  c.policy = PolicyKind::kAuditAll;
  const auto rows = cmd_compare(c);
  REQUIRE(rows.size() == 12);
  for (const auto& r : rows) {
    if (r.mechanism == "only_param") CHECK(r.c_model == 0.0);
    if (r.mechanism == "only_model") CHECK(r.c_para == 0.0);
  }
}

TEST_CASE("reruns produce byte-identical csv") {
  auto c = small_config("determinism_a");
  c.policy = PolicyKind::kRandom;
  c.eta_th_list = {0.7, 0.9};
  c.malicious_list = {0.5};
  cmd_sweep(c);
  const auto first = slurp(c.out_dir / "metrics.csv");
  c.out_dir = scratch("determinism_b");
  cmd_sweep(c);
  CHECK(slurp(c.out_dir / "metrics.csv") == first);
}

TEST_CASE("training refuses untrainable policies") {
  auto c = small_config("train_random");
  c.policy = PolicyKind::kRandom;
  CHECK_THROWS_AS(cmd_train(c), ConfigError);
}

TEST_CASE("smoke training run is fast, reproducible and evaluable") {
  auto c = small_config("train_a");
  const auto start = std::chrono::steady_clock::now();
  const auto out = cmd_train(c);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  MESSAGE("smoke training took " << seconds << " s");
  CHECK(seconds < 60.0);
  CHECK(out.steps == 200);
  const auto log = slurp(c.out_dir / "training_log.csv");
  CHECK(std::count(log.begin(), log.end(), '\n') == 201);

  const auto ckpt = slurp(c.out_dir / "checkpoint.json");
  cmd_train(c);
  CHECK(slurp(c.out_dir / "training_log.csv") == log);
  CHECK(slurp(c.out_dir / "checkpoint.json") == ckpt);

  auto eval = c;
  eval.out_dir = scratch("train_eval");
  eval.checkpoint = c.out_dir / "checkpoint.json";
  CHECK(cmd_evaluate(eval).size() == 1);
  eval.checkpoint.reset();
  CHECK_THROWS_AS(cmd_evaluate(eval), ConfigError);
  eval.checkpoint = c.out_dir / "checkpoint.json";
  eval.policy = PolicyKind::kSacCategorical;
  CHECK_THROWS_AS(cmd_evaluate(eval), ConfigError);
}

TEST_CASE("cli exit codes") {
  const auto dir = scratch("cli");
  CHECK(run_cli("train --policy random --out " + dir.string()) == 2);
  CHECK(run_cli("evaluate --policy audit_none --tests 5 --out " + dir.string()) == 0);
  CHECK(fs::exists(dir / "metrics.csv"));
  CHECK(run_cli("sweep --policy audit_all --out " + dir.string()) == 2);
  CHECK(run_cli("evaluate --policy nonsense --out " + dir.string()) == 2);
  CHECK(run_cli("evaluate --config /nonexistent/cfg.json") == 2);
  CHECK(run_cli("evaluate --malicious 0.2,abc --policy random --out " + dir.string()) == 2);
  CHECK(run_cli("") == 2);
}
