#include "hiaudit/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "hiaudit/errors.hpp"

namespace hiaudit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Rejects typos in config files instead of silently ignoring them.
void check_keys(const json& j, const char* section, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(section) + " must be a JSON object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : j.items())
    if (!ok.count(key)) throw ConfigError("unknown key '" + key + "' in " + section);
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

json env_to_json(const EnvConfig& e) {
  json j = {{"num_clients", e.num_clients}, {"q", e.q},
            {"eta_th", e.eta_th},           {"max_rounds", e.max_rounds},
            {"xi", e.xi},                   {"eps_clamp", e.eps_clamp},
            {"malicious_fraction", e.malicious_fraction}, {"post_rounds", e.post_rounds},
            {"seed", e.seed}};
  j["malicious_count"] = e.malicious_count ? json(*e.malicious_count) : json(nullptr);
  return j;
}

EnvConfig env_from_json(const json& j) {
  check_keys(j, "env",
             {"num_clients", "q", "eta_th", "max_rounds", "xi", "eps_clamp", "malicious_fraction",
              "malicious_count", "post_rounds", "seed"});
  EnvConfig e;
  read(j, "num_clients", e.num_clients);
  read(j, "q", e.q);
  read(j, "eta_th", e.eta_th);
  read(j, "max_rounds", e.max_rounds);
  read(j, "xi", e.xi);
  read(j, "eps_clamp", e.eps_clamp);
  read(j, "malicious_fraction", e.malicious_fraction);
  read(j, "post_rounds", e.post_rounds);
  read(j, "seed", e.seed);
  if (j.contains("malicious_count") && !j.at("malicious_count").is_null()) {
    int k = 0;
    read(j, "malicious_count", k);
    e.malicious_count = k;
  }
  return e;
}

json trainer_to_json(const TrainerConfig& t) {
  return {{"gamma", t.gamma},
          {"alpha", t.alpha},
          {"iota", t.iota},
          {"batch_size", t.batch_size},
          {"capacity", t.capacity},
          {"warmup", t.warmup},
          {"updates_per_episode", t.updates_per_episode},
          {"actor_lr", t.actor_lr},
          {"critic_lr", t.critic_lr},
          {"max_steps", t.max_steps},
          {"eval_every", t.eval_every},
          {"episodes_per_eval", t.episodes_per_eval},
          {"critic_hidden", t.critic_hidden},
          {"target_entropy_term", t.target_entropy_term},
          {"sample_from_prior", t.sample_from_prior},
          {"divergence_limit", t.divergence_limit},
          {"record_wall_time", t.record_wall_time}};
}

TrainerConfig trainer_from_json(const json& j) {
  check_keys(j, "trainer",
             {"gamma", "alpha", "iota", "batch_size", "capacity", "warmup", "updates_per_episode", "actor_lr",
              "critic_lr", "max_steps", "eval_every", "episodes_per_eval", "critic_hidden", "target_entropy_term",
              "sample_from_prior", "divergence_limit", "record_wall_time"});
  TrainerConfig t;
  read(j, "gamma", t.gamma);
  read(j, "alpha", t.alpha);
  read(j, "iota", t.iota);
  read(j, "batch_size", t.batch_size);
  read(j, "capacity", t.capacity);
  read(j, "warmup", t.warmup);
  read(j, "updates_per_episode", t.updates_per_episode);
  read(j, "actor_lr", t.actor_lr);
  read(j, "critic_lr", t.critic_lr);
  read(j, "max_steps", t.max_steps);
  read(j, "eval_every", t.eval_every);
  read(j, "episodes_per_eval", t.episodes_per_eval);
  read(j, "critic_hidden", t.critic_hidden);
  read(j, "target_entropy_term", t.target_entropy_term);
  read(j, "sample_from_prior", t.sample_from_prior);
  read(j, "divergence_limit", t.divergence_limit);
  read(j, "record_wall_time", t.record_wall_time);
  return t;
}

json costs_to_json(const CostParams& p) {
  return {{"nu", p.nu},           {"varrho", p.varrho},   {"d", p.d},
          {"rho_reward", p.rho_reward}, {"k_ip", p.k_ip}, {"w_model", p.w_model},
          {"w_para", p.w_para},   {"w_mal", p.w_mal}};
}

CostParams costs_from_json(const json& j) {
  check_keys(j, "costs", {"nu", "varrho", "d", "rho_reward", "k_ip", "w_model", "w_para", "w_mal"});
  CostParams p;
  read(j, "nu", p.nu);
  read(j, "varrho", p.varrho);
  read(j, "d", p.d);
  read(j, "rho_reward", p.rho_reward);
  read(j, "k_ip", p.k_ip);
  read(j, "w_model", p.w_model);
  read(j, "w_para", p.w_para);
  read(j, "w_mal", p.w_mal);
  return p;
}

json diffusion_to_json(const DiffusionOptions& d, int steps) {
  return {{"steps", steps},
          {"embed_dim", d.embed_dim},
          {"hidden", d.hidden},
          {"beta_min", d.beta_min},
          {"beta_max", d.beta_max},
          {"variance", to_string(d.variance)},
          {"noise_at_final_step", d.noise_at_final_step}};
}

void diffusion_from_json(const json& j, DiffusionOptions& d, int& steps) {
  check_keys(j, "diffusion", {"steps", "embed_dim", "hidden", "beta_min", "beta_max", "variance",
                              "noise_at_final_step"});
  read(j, "steps", steps);
  read(j, "embed_dim", d.embed_dim);
  read(j, "hidden", d.hidden);
  read(j, "beta_min", d.beta_min);
  read(j, "beta_max", d.beta_max);
  read(j, "noise_at_final_step", d.noise_at_final_step);
  if (j.contains("variance")) {
    std::string v;
    read(j, "variance", v);
    try {
      d.variance = variance_from_string(v);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("write failed for " + path.string());
}

void prepare_run_dir(const ExperimentConfig& c, const CostParams& costs, const char* command) {
  std::error_code ec;
  fs::create_directories(c.out_dir, ec);
  if (ec) throw ConfigError("cannot create output directory " + c.out_dir.string() + ": " + ec.message());
  json j = to_json(c);
  j["costs"] = costs_to_json(costs);
  j["command"] = command;
  j["tool_version"] = kToolVersion;
  write_text(c.out_dir / "config.json", j.dump(2) + "\n");
}

std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string s = metrics_csv_header() + "\n";
  for (const auto& r : rows) s += to_csv_line(r) + "\n";
  return s;
}

json summary_json(const std::vector<MetricsRow>& rows, const ExperimentConfig& c, const char* command) {
  json cells = json::array();
  for (const auto& r : rows)
    cells.push_back({{"policy", r.policy},
                     {"mechanism", r.mechanism},
                     {"eta_th", r.eta_th},
                     {"malicious_fraction", r.malicious_fraction},
                     {"seed", r.seed},
                     {"misjudgment_rate", r.misjudgment_rate},
                     {"c_model", r.c_model},
                     {"c_para", r.c_para},
                     {"c_mal", r.c_mal},
                     {"c_total", r.c_total},
                     {"mean_t_stop", r.mean_t_stop},
                     {"episodes", r.episodes}});
  return {{"command", command}, {"master_seed", c.seed}, {"tool_version", kToolVersion}, {"cells", cells}};
}

std::vector<double> or_default(const std::vector<double>& list, double fallback) {
  return list.empty() ? std::vector<double>{fallback} : list;
}

std::unique_ptr<Policy> policy_for_run(const ExperimentConfig& c) {
  if (!is_trainable(c.policy)) return make_policy(c, nullptr);
  if (!c.checkpoint) throw ConfigError("policy " + to_string(c.policy) + " needs --checkpoint");
  const json ckpt = load_checkpoint(*c.checkpoint);
  return make_policy(c, &ckpt);
}

std::vector<MetricsRow> run_grid(const Policy& policy, MechanismKind mechanism, const ExperimentConfig& c,
                                 const CostParams& costs, const std::vector<double>& etas,
                                 const std::vector<double>& fractions) {
  std::vector<MetricsRow> rows;
  std::size_t cell = 0;
  for (double eta : etas)
    for (double f : fractions) rows.push_back(evaluate_cell(policy, mechanism, c, costs, eta, f, cell_seed(c, cell++)));
  return rows;
}

}  // namespace

void ExperimentConfig::validate() const {
  env.validate();
  trainer.validate();
  if (costs) costs->validate(env.num_clients);
  if (tests < 1) throw ConfigError("tests must be at least 1");
  for (double eta : eta_th_list)
    if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("eta_th values must lie in (0, 1)");
  for (double f : malicious_list)
    if (!(f >= 0.0 && f <= 1.0)) throw ConfigError("malicious fractions must lie in [0, 1]");
  if (diffusion_steps < 1) throw ConfigError("diffusion steps must be at least 1");
  if (diffusion.embed_dim < 2 || diffusion.embed_dim % 2 != 0) throw ConfigError("embed_dim must be even and >= 2");
  if (diffusion.hidden.empty() || sac_hidden.empty()) throw ConfigError("networks need at least one hidden layer");
  for (int w : diffusion.hidden)
    if (w < 1) throw ConfigError("hidden widths must be positive");
  for (int w : sac_hidden)
    if (w < 1) throw ConfigError("hidden widths must be positive");
  if (!(diffusion.beta_min > 0.0 && diffusion.beta_min <= diffusion.beta_max && diffusion.beta_max < 1.0))
    throw ConfigError("beta schedule must satisfy 0 < beta_min <= beta_max < 1");
}

json to_json(const ExperimentConfig& c) {
  json j = {{"env", env_to_json(c.env)},
            {"trainer", trainer_to_json(c.trainer)},
            {"policy", to_string(c.policy)},
            {"mechanism", to_string(c.mechanism)},
            {"tests", c.tests},
            {"eta_th_list", c.eta_th_list},
            {"malicious_list", c.malicious_list},
            {"exact_malicious_count", c.exact_malicious_count},
            {"paired_seeds", c.paired_seeds},
            {"greedy_eval", c.greedy_eval},
            {"random_exclude_empty", c.random_exclude_empty},
            {"diffusion", diffusion_to_json(c.diffusion, c.diffusion_steps)},
            {"sac_hidden", c.sac_hidden},
            {"out_dir", c.out_dir.generic_string()},
            {"seed", c.seed}};
  j["costs"] = c.costs ? costs_to_json(*c.costs) : json(nullptr);
  j["checkpoint"] = c.checkpoint ? json(c.checkpoint->generic_string()) : json(nullptr);
  return j;
}

ExperimentConfig experiment_from_json(const json& j) {
  check_keys(j, "config",
             {"env", "trainer", "costs", "policy", "mechanism", "tests", "eta_th_list", "malicious_list",
              "exact_malicious_count", "paired_seeds", "greedy_eval", "random_exclude_empty", "diffusion",
              "sac_hidden", "out_dir", "seed", "checkpoint", "command", "tool_version"});
  ExperimentConfig c;
  if (j.contains("env")) c.env = env_from_json(j.at("env"));
  if (j.contains("trainer")) c.trainer = trainer_from_json(j.at("trainer"));
  if (j.contains("costs") && !j.at("costs").is_null()) c.costs = costs_from_json(j.at("costs"));
  if (j.contains("policy")) c.policy = policy_from_string(j.at("policy").get<std::string>());
  if (j.contains("mechanism")) c.mechanism = mechanism_from_string(j.at("mechanism").get<std::string>());
  read(j, "tests", c.tests);
  read(j, "eta_th_list", c.eta_th_list);
  read(j, "malicious_list", c.malicious_list);
  read(j, "exact_malicious_count", c.exact_malicious_count);
  read(j, "paired_seeds", c.paired_seeds);
  read(j, "greedy_eval", c.greedy_eval);
  read(j, "random_exclude_empty", c.random_exclude_empty);
  if (j.contains("diffusion")) diffusion_from_json(j.at("diffusion"), c.diffusion, c.diffusion_steps);
  read(j, "sac_hidden", c.sac_hidden);
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  read(j, "seed", c.seed);
  if (j.contains("checkpoint") && !j.at("checkpoint").is_null()) c.checkpoint = j.at("checkpoint").get<std::string>();
  return c;
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_from_json(j);
}

CostParams resolve_costs(const ExperimentConfig& c) {
  if (c.costs) return *c.costs;
  Rng rng(derive_seed(c.seed, streams::kCosts, 0));
  return sample_cost_params(c.env.num_clients, rng);
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (v == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::string metrics_csv_header() {
  return "policy,mechanism,eta_th,malicious_fraction,seed,misjudgment_rate,c_model,c_para,c_mal,c_total,"
         "mean_t_stop,episodes";
}

std::string to_csv_line(const MetricsRow& r) {
  std::ostringstream s;
  s << r.policy << ',' << r.mechanism << ',' << format_number(r.eta_th) << ',' << format_number(r.malicious_fraction)
    << ',' << r.seed << ',' << format_number(r.misjudgment_rate) << ',' << format_number(r.c_model) << ','
    << format_number(r.c_para) << ',' << format_number(r.c_mal) << ',' << format_number(r.c_total) << ','
    << format_number(r.mean_t_stop) << ',' << r.episodes;
  return s.str();
}

std::string training_log_header() {
  return "step,episode_reward,actor_loss,critic_loss,eval_misjudgment,eval_overhead,wall_ms";
}

std::string to_csv_line(const TrainLogRow& r) {
  auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string(); };
  std::ostringstream s;
  s << r.step << ',' << format_number(r.episode_reward) << ',' << opt(r.actor_loss) << ',' << opt(r.critic_loss)
    << ',' << opt(r.eval_misjudgment) << ',' << opt(r.eval_overhead) << ',' << format_number(r.wall_ms);
  return s.str();
}

std::unique_ptr<Actor> make_actor(const ExperimentConfig& c) {
  Rng init(derive_seed(c.seed, streams::kInit, 0));
  switch (c.policy) {
    case PolicyKind::kDrlAss:
      return std::make_unique<AssPolicy>(c.env.num_clients, c.diffusion_steps, c.diffusion, init);
    case PolicyKind::kSacCategorical:
      return std::make_unique<SoftmaxActor>(c.env.num_clients, c.sac_hidden, init);
    default:
      throw ConfigError("policy " + to_string(c.policy) + " has nothing to train");
  }
}

std::unique_ptr<Policy> make_policy(const ExperimentConfig& c, const json* checkpoint) {
  const int n = c.env.num_clients;
  switch (c.policy) {
    case PolicyKind::kRandom: return std::make_unique<RandomPolicy>(n, c.random_exclude_empty);
    case PolicyKind::kAuditAll: return std::make_unique<FixedActionPolicy>(FixedActionPolicy::audit_all(n));
    case PolicyKind::kAuditNone: return std::make_unique<FixedActionPolicy>(FixedActionPolicy::audit_none(n));
    default: break;
  }
  if (!checkpoint) throw ConfigError("policy " + to_string(c.policy) + " needs a checkpoint");
  std::unique_ptr<Actor> actor;
  try {
    actor = actor_from_json(checkpoint->at("actor"));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed checkpoint: ") + e.what());
  }
  if (actor->name() != to_string(c.policy))
    throw ConfigError("checkpoint holds a " + actor->name() + " actor, expected " + to_string(c.policy));
  if (actor->action_dim() != static_cast<int>(hypothesis_count(n)))
    throw ConfigError("checkpoint was trained for a different number of clients");
  return actor;
}

json load_checkpoint(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!j.contains("version") || j.at("version") != kCheckpointVersion)
    throw ConfigError("checkpoint " + path.string() + " has an unsupported version");
  return j;
}

EnvConfig cell_env(const ExperimentConfig& c, double eta_th, double malicious_fraction) {
  EnvConfig e = c.env;
  e.eta_th = eta_th;
  e.malicious_fraction = malicious_fraction;
  if (c.exact_malicious_count)
    e.malicious_count = static_cast<int>(std::lround(malicious_fraction * e.num_clients));
  else
    e.malicious_count.reset();
  e.validate();
  return e;
}

std::uint64_t cell_seed(const ExperimentConfig& c, std::size_t cell_index) {
  return derive_seed(c.seed, streams::kEval, c.paired_seeds ? 0 : cell_index + 1);
}

MetricsRow evaluate_cell(const Policy& policy, MechanismKind mechanism, const ExperimentConfig& c,
                         const CostParams& costs, double eta_th, double malicious_fraction, std::uint64_t seed) {
  const EnvConfig env = cell_env(c, eta_th, malicious_fraction);
  MetricsRow row;
  row.policy = mechanism == MechanismKind::kOnlyParam ? "none" : policy.name();
  row.mechanism = to_string(mechanism);
  row.eta_th = eta_th;
  row.malicious_fraction = malicious_fraction;
  row.seed = seed;
  row.episodes = c.tests;
  long errors = 0;
  for (int e = 0; e < c.tests; ++e) {
    Rng env_rng(derive_seed(seed, streams::kEnv, static_cast<std::uint64_t>(e)));
    Rng policy_rng(derive_seed(seed, streams::kPolicy, static_cast<std::uint64_t>(e)));
    const auto trace = run_episode(policy, mechanism, env, costs, env_rng, policy_rng, c.greedy_eval);
    const auto& r = trace.result;
    errors += r.misjudged ? 1 : 0;
    row.c_model += r.ledger.c_model;
    row.c_para += r.ledger.c_para;
    row.c_mal += r.ledger.c_mal;
    row.c_total += r.c_total;
    row.mean_t_stop += r.t_stop;
  }
  const double n = c.tests;
  row.misjudgment_rate = misjudgment_rate(errors, c.tests);
  row.c_model /= n;
  row.c_para /= n;
  row.c_mal /= n;
  row.c_total /= n;
  row.mean_t_stop /= n;
  return row;
}

TrainOutcome cmd_train(const ExperimentConfig& c) {
  c.validate();
  if (!is_trainable(c.policy)) throw ConfigError("policy " + to_string(c.policy) + " has nothing to train");
  const CostParams costs = resolve_costs(c);
  TrainerConfig tc = c.trainer;
  if (c.policy == PolicyKind::kSacCategorical) tc.target_entropy_term = true;
  prepare_run_dir(c, costs, "train");

  Trainer trainer(c.env, tc, costs, make_actor(c), derive_seed(c.seed, streams::kTrain, 0));
  std::ofstream log(c.out_dir / "training_log.csv", std::ios::binary | std::ios::trunc);
  if (!log) throw ConfigError("cannot write training log in " + c.out_dir.string());
  log << training_log_header() << '\n';
  trainer.train([&](const TrainLogRow& row) { log << to_csv_line(row) << '\n'; });
  log.close();

  TrainOutcome out;
  out.run_dir = c.out_dir;
  out.steps = trainer.steps_done();
  out.checkpoint = trainer.checkpoint();
  out.checkpoint["version"] = kCheckpointVersion;
  out.checkpoint["tool_version"] = kToolVersion;
  out.checkpoint["policy"] = to_string(c.policy);
  json cfg = to_json(c);
  cfg["costs"] = costs_to_json(costs);
  out.checkpoint["config"] = cfg;
  write_text(c.out_dir / "checkpoint.json", out.checkpoint.dump() + "\n");
  return out;
}

std::vector<MetricsRow> cmd_evaluate(const ExperimentConfig& c) {
  c.validate();
  const CostParams costs = resolve_costs(c);
  const auto policy = policy_for_run(c);
  prepare_run_dir(c, costs, "evaluate");
  const auto rows = run_grid(*policy, c.mechanism, c, costs, or_default(c.eta_th_list, c.env.eta_th),
                             or_default(c.malicious_list, c.env.malicious_fraction));
  write_text(c.out_dir / "metrics.csv", metrics_csv(rows));
  write_text(c.out_dir / "summary.json", summary_json(rows, c, "evaluate").dump(2) + "\n");
  return rows;
}

std::vector<MetricsRow> cmd_sweep(const ExperimentConfig& c) {
  c.validate();
  if (c.eta_th_list.empty() || c.malicious_list.empty())
    throw ConfigError("sweep needs nonempty eta_th and malicious lists");
  const CostParams costs = resolve_costs(c);
  const auto policy = policy_for_run(c);
  prepare_run_dir(c, costs, "sweep");
  const auto rows = run_grid(*policy, c.mechanism, c, costs, c.eta_th_list, c.malicious_list);
  write_text(c.out_dir / "metrics.csv", metrics_csv(rows));
  write_text(c.out_dir / "summary.json", summary_json(rows, c, "sweep").dump(2) + "\n");
  return rows;
}

std::vector<MetricsRow> cmd_compare(const ExperimentConfig& c) {
  c.validate();
  const CostParams costs = resolve_costs(c);
  const auto policy = policy_for_run(c);
  prepare_run_dir(c, costs, "compare");
  const auto fractions = c.malicious_list.empty() ? std::vector<double>{0.2, 0.4, 0.6, 0.8} : c.malicious_list;
  std::vector<MetricsRow> rows;
  std::size_t cell = 0;
  for (double f : fractions) {
    // All three mechanisms of a cell replay the same seed streams.
    const auto seed = cell_seed(c, cell++);
    for (auto m : {MechanismKind::kHiAudit, MechanismKind::kOnlyModel, MechanismKind::kOnlyParam})
      rows.push_back(evaluate_cell(*policy, m, c, costs, c.env.eta_th, f, seed));
  }
  write_text(c.out_dir / "metrics.csv", metrics_csv(rows));
  write_text(c.out_dir / "summary.json", summary_json(rows, c, "compare").dump(2) + "\n");
  return rows;
}

}  // namespace hiaudit
