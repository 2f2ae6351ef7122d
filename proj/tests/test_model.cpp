#include <doctest.h>

#include <cmath>
#include <random>

#include "mckv/errors.hpp"
#include "mckv/model.hpp"

using namespace mckv;

TEST_CASE("satmr at the origin") {
  const ModelSpec m = make_model("satmr");
  const EmpiricalMeasure mu = EmpiricalMeasure::dirac1d(0.0);
  const Eigen::VectorXd u = Eigen::VectorXd::Zero(1);
  const auto [b, s] = evaluate_dynamics(m, Eigen::VectorXd::Zero(1), mu, u);
  CHECK(b(0) == doctest::Approx(0.0).epsilon(1e-15));
  // sigma(0) = sigma0 + sigma1/(1+0) with defaults 0.4 + 0.2.
  CHECK(s(0, 0) == doctest::Approx(0.6).epsilon(1e-15));
}

TEST_CASE("satmr mean-field term evaluates the tanh statistic") {
  const ModelSpec m = make_model("satmr", {{"theta2", 1.0}});
  const EmpiricalMeasure mu = EmpiricalMeasure::dirac1d(10.0);
  const Eigen::VectorXd b =
      m.drift(Eigen::VectorXd::Zero(1), mu, Eigen::VectorXd::Zero(1));
  CHECK(b(0) == doctest::Approx(std::tanh(10.0)).epsilon(1e-15));
}

TEST_CASE("dynamics respect the declared bound on random admissible inputs") {
  const ModelSpec m = make_model("satmr");
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> box(-10.0, 10.0);
  std::uniform_real_distribution<double> act(-0.5, 0.5);
  for (int t = 0; t < 10000; ++t) {
    Eigen::VectorXd x(1), u(1);
    x << box(rng);
    u << act(rng);
    const EmpiricalMeasure mu = EmpiricalMeasure::dirac1d(box(rng));
    const auto [b, s] = evaluate_dynamics(m, x, mu, u);
    CHECK(b.norm() + s.norm() <= m.C2 + 1e-12);
    CHECK(std::abs(m.running_cost(x, mu, u)) + std::abs(m.terminal_cost(x, mu)) <=
          m.C4 + 1e-12);
  }
}

TEST_CASE("evaluate_dynamics is deterministic") {
  const ModelSpec m = make_model("satmr");
  Eigen::VectorXd x(1), u(1);
  x << 0.37;
  u << -0.21;
  const EmpiricalMeasure mu = EmpiricalMeasure::dirac1d(-1.3);
  const auto [b1, s1] = evaluate_dynamics(m, x, mu, u);
  const auto [b2, s2] = evaluate_dynamics(m, x, mu, u);
  CHECK(b1(0) == b2(0));
  CHECK(s1(0, 0) == s2(0, 0));
}

TEST_CASE("evaluate_dynamics rejects bad inputs") {
  const ModelSpec m = make_model("satmr");
  Eigen::VectorXd u(1);
  u << 2.0;  // outside [-0.5, 0.5]
  CHECK_THROWS_AS(evaluate_dynamics(m, Eigen::VectorXd::Zero(1),
                                    EmpiricalMeasure::dirac1d(0.0), u),
                  ConfigError);
  CHECK_THROWS_AS(make_model("nosuch"), ConfigError);
}

TEST_CASE("audit of a constant model reports zero ratios") {
  const ModelSpec m = make_model("constant", {{"b0", 0.0}, {"s0", 0.0}});
  const AuditReport rep = validate_model(m, 500, 3);
  CHECK(rep.lip_b == 0.0);
  CHECK(rep.max_b == 0.0);
  CHECK_FALSE(rep.violation);
}

TEST_CASE("audit accepts the analytic constants of satmr") {
  const ModelSpec m = make_model("satmr");
  const AuditReport rep = validate_model(m, 20000, 12);
  CHECK_FALSE(rep.violation);
  CHECK(rep.lip_b <= m.C1 + 1e-9);
}

TEST_CASE("audit flags a deliberate misdeclaration") {
  const ModelSpec m = make_model("constant", {{"s0", 1.0}, {"C2", 0.0}});
  const AuditReport rep = validate_model(m, 200, 4);
  CHECK(rep.violation);
  CHECK_FALSE(rep.messages.empty());
}

TEST_CASE("action set quantization includes interval endpoints") {
  const ActionSet a = ActionSet::interval(-0.5, 0.5, 3);
  const auto pts = a.finite_actions();
  REQUIRE(pts.size() == 3);
  CHECK(pts.front()(0) == doctest::Approx(-0.5));
  CHECK(pts.back()(0) == doctest::Approx(0.5));
  CHECK(a.contains(pts[1]));
  CHECK_FALSE(a.contains(Eigen::VectorXd::Constant(1, 0.6)));
}
