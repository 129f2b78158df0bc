#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "hiaudit/env.hpp"
#include "hiaudit/errors.hpp"

using namespace hiaudit;

namespace {

CostParams unit_costs(int n) {
  CostParams p;
  p.nu = 100;
  p.varrho = 1e4;
  p.d.assign(n, 100.0);
  return p;
}

EnvState state_with(const ClientState& truth, const Belief& belief) {
  EnvState s;
  s.true_state = truth;
  s.belief = belief;
  s.done = true;
  s.round = 1;
  return s;
}

}  // namespace

TEST_CASE("config validation") {
  EnvConfig c;
  CHECK_NOTHROW(c.validate());
  c.num_clients = 11;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.q = 0.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.eta_th = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.malicious_count = 6;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("reset starts from the uniform belief") {
  EnvConfig c;
  Rng rng(4);
  const auto s = reset(c, rng);
  CHECK(s.belief == uniform_belief(5));
  CHECK(s.round == 0);
  CHECK_FALSE(s.done);
  CHECK(s.ledger.audited_counts.empty());
}

TEST_CASE("reset with an exact count places that many attackers") {
  EnvConfig c;
  c.malicious_count = 2;
  Rng rng(9);
  std::vector<int> per_client(5, 0);
  for (int e = 0; e < 5000; ++e) {
    const auto s = reset(c, rng);
    int k = 0;
    for (int i = 0; i < 5; ++i) {
      k += s.true_state[i];
      per_client[i] += s.true_state[i];
    }
    REQUIRE(k == 2);
  }
  for (int v : per_client) CHECK(std::abs(v - 2000) < 150);
}

TEST_CASE("reset is a pure function of the seed") {
  EnvConfig c;
  c.malicious_count = 1;
  Rng a(123), b(123);
  for (int e = 0; e < 20; ++e) CHECK(reset(c, a).true_state == reset(c, b).true_state);
}

TEST_CASE("observe flips bits with probability q") {
  Rng rng(77);
  const ClientState honest{0};
  long ones = 0;
  for (int i = 0; i < 100000; ++i) ones += observe(honest, AuditSelection::all(1), 0.2, rng).value(0).value() ? 1 : 0;
  CHECK(ones / 1e5 == doctest::Approx(0.2).epsilon(0.05));

  const ClientState truth{1, 0, 1};
  const auto exact = observe(truth, AuditSelection::all(3), 1e-12, rng);
  for (int i = 0; i < 3; ++i) CHECK(*exact.value(i) == (truth[i] == 1));
  CHECK(observe(truth, AuditSelection::none(3), 0.2, rng).empty());
}

TEST_CASE("abllr examples") {
  CHECK(abllr(Belief{0.5, 0.5}, 1e-6) == doctest::Approx(0.0));
  CHECK(abllr(uniform_belief(2), 1e-6) == doctest::Approx(std::log(1.0 / 3.0)));
  const double eps = 1e-6;
  const double v = abllr(Belief{1.0, 0.0, 0.0, 0.0}, eps);
  CHECK(std::isfinite(v));
  CHECK(v > 10.0);
  CHECK(v <= std::log((1 - eps) / eps));
}

TEST_CASE("reward examples") {
  const Belief b{0.3, 0.7};
  CHECK(reward(b, b, AuditSelection::none(1), 0.4) == 0.0);
  CHECK(reward(b, b, AuditSelection::all(1), 1.0) == 0.0);
  // An ABLLR gain of exactly 1 on two audited clients: 0.4 - 0.6 * 2.
  const Belief prev{0.5, 0.5};
  // Solve p log(p/(1-p)) + (1-p) log((1-p)/p) = 1 by bisection.
  double lo = 0.5, hi = 1 - 1e-9;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    ((2 * mid - 1) * std::log(mid / (1 - mid)) < 1.0 ? lo : hi) = mid;
  }
  const Belief next{lo, 1 - lo};
  CHECK(reward(prev, next, AuditSelection(3, 2), 0.4) == doctest::Approx(-0.8));
}

TEST_CASE("step examples") {
  EnvConfig c;
  c.num_clients = 1;
  c.eta_th = 0.9;
  const auto costs = unit_costs(1);
  Rng rng(5);

  auto s = reset(c, rng);
  const auto idle = step(s, AuditSelection::none(1), c, costs, rng);
  CHECK(idle.next_belief == uniform_belief(1));
  CHECK(idle.reward == 0.0);
  CHECK(s.ledger.c_model == 0.0);

  s = reset(c, rng);
  s.true_state = {1};
  // The observation is random; replay from copies until a flagged result appears.
  Rng obs_rng(6);
  for (int tries = 0; tries < 100; ++tries) {
    auto trial = s;
    const auto out = step(trial, AuditSelection::all(1), c, costs, obs_rng);
    if (!*out.observation.value(0)) continue;
    CHECK(out.next_belief[0] == doctest::Approx(0.2));
    CHECK(out.next_belief[1] == doctest::Approx(0.8));
    CHECK(trial.ledger.c_model == 100.0);
    CHECK_FALSE(out.done);  // 0.8 is not above 0.9
    break;
  }
}

TEST_CASE("blocking happens iff the updated max exceeds the threshold") {
  EnvConfig c;
  c.num_clients = 2;
  const auto costs = unit_costs(2);
  Rng rng(10);
  for (int trial = 0; trial < 200; ++trial) {
    auto s = reset(c, rng);
    s.belief = {0.9, 0.05, 0.03, 0.02};
    const auto out = step(s, AuditSelection(static_cast<std::uint32_t>(rng.uniform_int(4)), 2), c, costs, rng);
    CHECK(out.done == (*std::max_element(out.next_belief.begin(), out.next_belief.end()) > 0.8));
  }
}

TEST_CASE("episodes terminate within L and costs stay additive") {
  EnvConfig c;
  c.max_rounds = 7;
  const auto costs = unit_costs(5);
  Rng rng(12);
  for (int e = 0; e < 100; ++e) {
    auto s = reset(c, rng);
    long audited = 0;
    double telescoped = 0.0;
    const double start = abllr(s.belief, c.eps_clamp);
    while (!s.done) {
      const AuditSelection a(static_cast<std::uint32_t>(rng.uniform_int(32)), 5);
      const auto out = step(s, a, c, costs, rng);
      audited += a.size();
      telescoped += out.reward + (1 - c.xi) * a.size();
    }
    CHECK(s.round <= 7);
    CHECK(s.ledger.c_model == costs.nu * audited);
    if (*std::max_element(s.belief.begin(), s.belief.end()) <= 1 - c.eps_clamp)
      CHECK(telescoped == doctest::Approx(c.xi * (abllr(s.belief, c.eps_clamp) - start)));
  }
  auto s = reset(c, rng);
  s.done = true;
  CHECK_THROWS_AS(step(s, AuditSelection::none(5), c, costs, rng), UsageError);
}

TEST_CASE("finalize examples") {
  EnvConfig c;
  const auto costs = unit_costs(5);

  const auto clean = finalize(state_with({0, 0, 0, 0, 0}, Belief(32, 0.0)), c, costs);
  CHECK(clean.flagged.empty());
  CHECK(clean.ledger.c_para == 0.0);
  CHECK_FALSE(clean.misjudged);

  Belief on3(32, 0.0);
  on3[3] = 1.0;
  const auto hit = finalize(state_with({0, 0, 0, 1, 1}, on3), c, costs);
  CHECK(hit.flagged == std::vector<int>{3, 4});
  CHECK(hit.eliminated == std::vector<int>{3, 4});
  CHECK(hit.ledger.n_final == 0);
  CHECK(hit.ledger.c_para == 2e6);
  CHECK_FALSE(hit.misjudged);

  Belief on0(32, 0.0);
  on0[0] = 1.0;
  const auto miss = finalize(state_with({1, 0, 0, 0, 0}, on0), c, costs);
  CHECK(miss.flagged.empty());
  CHECK(miss.ledger.n_final == 1);
  CHECK(miss.misjudged);

  // An honest client accused by the MAP hypothesis is cleared by the parameter audit.
  const auto cleared = finalize(state_with({0, 0, 0, 1, 0}, on3), c, costs);
  CHECK(cleared.honest_flagged);
  CHECK(cleared.eliminated == std::vector<int>{3});
  CHECK_FALSE(cleared.honest_eliminated);
  CHECK_FALSE(cleared.misjudged);

  auto running = state_with({0, 0, 0, 0, 0}, on0);
  running.done = false;
  CHECK_THROWS_AS(finalize(running, c, costs), UsageError);
}

TEST_CASE("retention cost follows the malicious count per round") {
  EnvConfig c;
  c.post_rounds = 3;
  const auto costs = unit_costs(5);
  auto s = state_with({1, 1, 0, 0, 0}, Belief(32, 0.0));
  s.belief[16] = 1.0;  // accuses client 0 only
  s.ledger.n_history = {2, 2};
  s.round = 2;
  const auto r = finalize(s, c, costs);
  CHECK(r.survivors == 1);
  CHECK(r.ledger.n_history == std::vector<int>{2, 2, 1, 1, 1});
  CHECK(r.ledger.c_mal == 500.0 * 7 + 5000.0);
  CHECK(r.c_total == r.ledger.c_model + r.ledger.c_para + r.ledger.c_mal);
}

TEST_CASE("auditing everyone blocks on the truth as often as the belief claims") {
  // With the truth drawn from the uniform prior, P(MAP correct | stop) equals the
  // stopping belief's maximum, so the hit rate must track its mean.
  EnvConfig c;
  const auto costs = unit_costs(5);
  Rng rng(2);
  const int episodes = 4000;
  int correct = 0;
  double claimed = 0.0;
  for (int e = 0; e < episodes; ++e) {
    auto s = reset(c, rng);
    while (!s.done) step(s, AuditSelection::all(5), c, costs, rng);
    correct += (s.blocked && map_hypothesis(s.belief) == hypothesis_of(s.true_state)) ? 1 : 0;
    claimed += *std::max_element(s.belief.begin(), s.belief.end());
  }
  const double rate = static_cast<double>(correct) / episodes;
  MESSAGE("hit rate " << rate << ", mean stopping belief " << claimed / episodes);
  CHECK(std::abs(rate - claimed / episodes) < 0.02);
  CHECK(rate > 0.85);
}
