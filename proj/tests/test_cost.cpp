#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hiaudit/cost.hpp"
#include "hiaudit/errors.hpp"

using namespace hiaudit;

TEST_CASE("model audit cost") {
  CHECK(model_audit_cost(100, std::vector<int>{2, 3}) == 500.0);
  CHECK(model_audit_cost(100, std::vector<int>{0, 0, 0}) == 0.0);
  CHECK(model_audit_cost(150, std::vector<int>(10, 5)) == 7500.0);
}

TEST_CASE("parameter audit cost") {
  const std::vector<double> d{100, 100, 100};
  CHECK(param_audit_cost(1e4, d, std::vector<int>{0, 2}) == 2e6);
  CHECK(param_audit_cost(1e4, d, std::vector<int>{}) == 0.0);
  CHECK(param_audit_cost(4e4, std::vector<double>{100, 50}, std::vector<int>{0, 1}) == 6e6);
}

TEST_CASE("retention cost") {
  CHECK(retention_cost(500, std::vector<int>(10, 2), 1, 5000) == 15000.0);
  CHECK(retention_cost(500, std::vector<int>(10, 0), 0, 5000) == 0.0);
  CHECK(retention_cost(500, std::vector<int>{3, 3}, 0, 5000) == 3000.0);
}

TEST_CASE("misjudgment rate") {
  CHECK(misjudgment_rate(5, 100) == doctest::Approx(0.05));
  CHECK(misjudgment_rate(0, 100) == 0.0);
  CHECK(misjudgment_rate(8, 100) == doctest::Approx(0.08));
  CHECK_THROWS_AS(misjudgment_rate(1, 0), std::invalid_argument);
}

TEST_CASE("ledger total is the weighted sum") {
  CostParams p;
  CostLedger l;
  l.c_model = 10;
  l.c_para = 20;
  l.c_mal = 30;
  CHECK(l.total(p) == 60.0);
  p.w_para = 0.5;
  CHECK(l.total(p) == 50.0);
}

TEST_CASE("sampled cost parameters stay in range") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const auto p = sample_cost_params(5, rng);
    CHECK(p.nu >= 100.0);
    CHECK(p.nu <= 200.0);
    CHECK(p.varrho >= 1e4);
    CHECK(p.varrho <= 4e4);
    CHECK(p.d == std::vector<double>(5, 100.0));
    CHECK_NOTHROW(p.validate(5));
  }
}

TEST_CASE("validation rejects bad parameters") {
  CostParams p;
  p.d = {100, 100};
  CHECK_THROWS_AS(p.validate(3), ConfigError);
  p.d = {100, 0};
  CHECK_THROWS_AS(p.validate(2), ConfigError);
  p.d = {100, 100};
  p.nu = -1;
  CHECK_THROWS_AS(p.validate(2), ConfigError);
}
