#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "hiaudit/diffusion.hpp"
#include "hiaudit/errors.hpp"
#include "hiaudit/trainer.hpp"

using namespace hiaudit;

namespace {

DenseNet small_critic(int actions, Rng& rng) {
  return DenseNet({actions, 6, actions}, {Activation::kMish, Activation::kIdentity}, rng);
}

DiffusionOptions small_diffusion() {
  DiffusionOptions o;
  o.embed_dim = 4;
  o.hidden = {6, 6};
  return o;
}

double rel_err(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); }

std::vector<double> flat_grads(const Gradients& g) {
  std::vector<double> out;
  for (std::size_t l = 0; l < g.weight.size(); ++l) {
    out.insert(out.end(), g.weight[l].data(), g.weight[l].data() + g.weight[l].size());
    out.insert(out.end(), g.bias[l].data(), g.bias[l].data() + g.bias[l].size());
  }
  return out;
}

Matrix random_beliefs(int actions, int batch, Rng& rng) {
  Matrix b(actions, batch);
  for (int c = 0; c < batch; ++c) {
    double z = 0;
    for (int r = 0; r < actions; ++r) z += b(r, c) = rng.uniform(0.01, 1.0);
    b.col(c) /= z;
  }
  return b;
}

}  // namespace

TEST_CASE("replay memory is a bounded FIFO") {
  ReplayMemory m(3);
  for (int i = 0; i < 5; ++i) m.push({{}, static_cast<std::uint32_t>(i), {}, 0.0, false});
  CHECK(m.size() == 3);
  CHECK(m.at(0).action == 2);
  CHECK(m.at(2).action == 4);
  Rng rng(1);
  const auto s = m.sample(10, rng);
  CHECK(s.size() == 3);
  std::set<const Transition*> distinct(s.begin(), s.end());
  CHECK(distinct.size() == 3);
  CHECK_THROWS_AS(ReplayMemory(0), ConfigError);
}

TEST_CASE("replay sampling is uniform") {
  ReplayMemory m(10);
  for (int i = 0; i < 10; ++i) m.push({{}, static_cast<std::uint32_t>(i), {}, 0.0, false});
  Rng rng(2);
  std::vector<int> hits(10, 0);
  for (int k = 0; k < 20000; ++k)
    for (const auto* t : m.sample(3, rng)) ++hits[t->action];
  for (int h : hits) CHECK(std::abs(h - 6000) < 300);
}

TEST_CASE("critic_min is elementwise") {
  Matrix a(2, 2), b(2, 2);
  a << 1, 5, -2, 0;
  b << 3, 4, -1, 0;
  Matrix expect(2, 2);
  expect << 1, 4, -2, 0;
  CHECK(critic_min(a, b) == expect);
  a(0, 0) = std::nan("");
  CHECK_THROWS_AS(critic_min(a, b), TrainingError);
}

TEST_CASE("actor objective value and gradient") {
  Matrix p(2, 1), q(2, 1);
  p << 0.25, 0.75;
  q << 1.0, 2.0;
  const double alpha = 0.05;
  const double h = -(0.25 * std::log(0.25) + 0.75 * std::log(0.75));
  const auto obj = actor_objective(p, q, alpha);
  CHECK(obj.loss == doctest::Approx(-(0.25 + 1.5 + alpha * h)));
  for (int i = 0; i < 2; ++i) {
    Matrix up = p, down = p;
    up(i, 0) += 1e-7;
    down(i, 0) -= 1e-7;
    const double fd = (actor_objective(up, q, alpha).loss - actor_objective(down, q, alpha).loss) / 2e-7;
    CHECK(obj.probs_grad(i, 0) == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("td targets against a hand expectation") {
  Rng init(3), rng(4);
  const SoftmaxActor actor(1, {4}, init);
  const DenseNet q1 = small_critic(2, init), q2 = small_critic(2, init);
  const Transition live{{0.5, 0.5}, 1, {0.3, 0.7}, -0.6, false};
  const Transition terminal{{0.5, 0.5}, 1, {0.1, 0.9}, 1.25, true};

  Rng dummy(0);
  const auto pi = actor.distribution(live.next_belief, dummy);
  const Vector b = Eigen::Map<const Vector>(live.next_belief.data(), 2);
  const Vector v1 = q1.forward(b), v2 = q2.forward(b);
  const double expect = -0.6 + 0.95 * (pi[0] * std::min(v1(0), v2(0)) + pi[1] * std::min(v1(1), v2(1)));
  CHECK(td_target(live, actor, q1, q2, 0.95, rng) == doctest::Approx(expect).epsilon(1e-12));
  CHECK(td_target(terminal, actor, q1, q2, 0.95, rng) == 1.25);

  const Transition* batch[] = {&live, &terminal};
  const auto soft = td_targets(batch, actor, q1, q2, 0.95, rng, 0.1, true);
  const double h = -(pi[0] * std::log(pi[0]) + pi[1] * std::log(pi[1]));
  CHECK(soft[0] == doctest::Approx(expect + 0.95 * 0.1 * h).epsilon(1e-12));
  CHECK(soft[1] == 1.25);
}

TEST_CASE("identical critics give identical losses and gradients") {
  Rng rng(5);
  const DenseNet q = small_critic(4, rng);
  const Matrix b = random_beliefs(4, 5, rng);
  const std::vector<std::uint32_t> actions{0, 3, 1, 2, 3};
  const std::vector<double> targets{0.5, -1, 2, 0, 1};
  const auto l = critic_loss(b, actions, targets, q, q);
  CHECK(l.loss_q1 == l.loss_q2);
  CHECK(flat_grads(l.grads_q1) == flat_grads(l.grads_q2));
}

TEST_CASE("critic loss gradient matches central differences") {
  Rng rng(6);
  const DenseNet q1 = small_critic(4, rng), q2 = small_critic(4, rng);
  const Matrix b = random_beliefs(4, 6, rng);
  const std::vector<std::uint32_t> actions{0, 3, 1, 2, 3, 0};
  const std::vector<double> targets{0.5, -1, 2, 0, 1, 0.3};
  const auto l = critic_loss(b, actions, targets, q1, q2);
  const auto analytic = flat_grads(l.grads_q1);
  const auto flat = q1.flatten();
  DenseNet probe = q1;
  for (std::size_t k = 0; k < flat.size(); ++k) {
    auto p = flat;
    p[k] += 1e-6;
    probe.assign(p);
    const double up = critic_loss(b, actions, targets, probe, q2).loss_q1;
    p[k] -= 2e-6;
    probe.assign(p);
    const double down = critic_loss(b, actions, targets, probe, q2).loss_q1;
    CHECK(rel_err(analytic[k], (up - down) / 2e-6) < 1e-6);
  }
}

TEST_CASE("diffusion actor loss gradient matches central differences") {
  Rng init(7), rng(8);
  const AssPolicy actor(2, 5, small_diffusion(), init);
  const DenseNet q1 = small_critic(4, init), q2 = small_critic(4, init);
  const Matrix b = random_beliefs(4, 4, rng);
  const Rng noise_seed(99);

  Rng r0 = noise_seed;
  const auto l = actor_loss(b, actor, q1, q2, 0.05, r0);
  const auto analytic = flat_grads(l.grads);
  AssPolicy probe = actor;
  const auto flat = actor.net().flatten();
  double worst = 0;
  for (std::size_t k = 0; k < flat.size(); ++k) {
    auto p = flat;
    p[k] += 1e-6;
    probe.mutable_net().assign(p);
    Rng r1 = noise_seed;
    const double up = actor_loss(b, probe, q1, q2, 0.05, r1).loss;
    p[k] -= 2e-6;
    probe.mutable_net().assign(p);
    Rng r2 = noise_seed;
    const double down = actor_loss(b, probe, q1, q2, 0.05, r2).loss;
    worst = std::max(worst, rel_err(analytic[k], (up - down) / 2e-6));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("trainer config validation") {
  TrainerConfig c;
  CHECK_NOTHROW(c.validate());
  c.gamma = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.iota = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("training is reproducible from the seed") {
  EnvConfig env;
  env.num_clients = 2;
  TrainerConfig tc;
  tc.warmup = 32;
  tc.batch_size = 16;
  tc.critic_hidden = {8};
  CostParams costs;
  costs.d = {100, 100};
  auto run = [&] {
    Rng init(1);
    Trainer t(env, tc, costs, std::make_unique<AssPolicy>(2, 5, small_diffusion(), init), 42);
    std::vector<double> rewards;
    for (int i = 0; i < 30; ++i) rewards.push_back(t.train_step().episode_reward);
    return std::make_pair(rewards, t.checkpoint().dump());
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("updates start once replay holds a warmup's worth") {
  EnvConfig env;
  env.num_clients = 1;
  TrainerConfig tc;
  tc.warmup = 40;
  tc.batch_size = 8;
  tc.critic_hidden = {8};
  CostParams costs;
  costs.d = {100};
  Rng init(2);
  Trainer t(env, tc, costs, std::make_unique<SoftmaxActor>(1, std::vector<int>{8}, init), 3);
  bool updated = false;
  while (t.steps_done() < 200) {
    const auto row = t.train_step();
    CHECK(row.actor_loss.has_value() == (t.replay().size() >= 40));
    updated = updated || row.actor_loss.has_value();
  }
  CHECK(updated);
  CHECK(t.replay().size() >= 200);
}

TEST_CASE("a degenerate single-client task is learned") {
  EnvConfig env;
  env.num_clients = 1;
  env.q = 0.1;
  env.eta_th = 0.9;
  TrainerConfig tc;
  tc.max_steps = 2000;
  CostParams costs;
  costs.d = {100};
  Rng init(11);
  Trainer t(env, tc, costs, std::make_unique<AssPolicy>(1, 5, DiffusionOptions{}, init), 12);
  t.train();
  const auto eval = evaluate_policy(t.actor(), env, costs, 200, 13);
  MESSAGE("misjudgment " << eval.misjudgment_rate << ", mean length " << eval.mean_steps);
  CHECK(eval.misjudgment_rate <= 0.1);
  CHECK(eval.mean_steps < env.max_rounds);
}
