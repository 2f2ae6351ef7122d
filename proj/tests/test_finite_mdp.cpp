#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "mckv/errors.hpp"
#include "mckv/finite_mdp.hpp"
#include "mckv/measure.hpp"
#include "mckv/model.hpp"

using namespace mckv;

namespace {

FiniteModel small_model(const ModelSpec& m, double half, int cells, int n,
                        double h) {
  FiniteModel fm = make_finite_model(m, StateGrid::uniform(1, half, cells), n, h);
  build_transition(fm);
  return fm;
}

int dirac_index(const FiniteModel& fm, double x) {
  const QuantizedMeasure q =
      quantize(EmpiricalMeasure::dirac1d(x), fm.grid, fm.denominator);
  for (int i = 0; i < fm.measure_count(); ++i)
    if (fm.measures[size_t(i)].counts == q.counts) return i;
  REQUIRE(false);
  return -1;
}

}  // namespace

TEST_CASE("kernel splits a centered Gaussian evenly around the origin") {
  const ModelSpec m =
      make_model("constant", {{"b0", 0.0}, {"s0", 1.0}, {"quantization", 2}});
  const FiniteModel fm = small_model(m, 4.0, 4, 2, 1.0);
  const Eigen::VectorXd row =
      kernel_row(fm, Eigen::VectorXd::Zero(1), fm.actions.front(),
                 fm.dequantized.front());
  CHECK(row.sum() == doctest::Approx(1.0).epsilon(1e-12));
  // Cells are [-4,-2),[-2,0),[0,2),[2,4); N(0,1) is symmetric about 0.
  CHECK(row(0) + row(1) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(row(0) == doctest::Approx(row(3)).epsilon(1e-12));
  CHECK(row(1) == doctest::Approx(row(2)).epsilon(1e-12));
  CHECK(row(1) == doctest::Approx(0.4772498680518208).epsilon(1e-9));
}

TEST_CASE("wider noise pushes more mass into the boundary cells") {
  double prev = 0.0;
  for (double s0 : {0.5, 1.0, 2.0, 4.0}) {
    const ModelSpec m =
        make_model("constant", {{"b0", 0.0}, {"s0", s0}, {"quantization", 2}});
    const FiniteModel fm = small_model(m, 2.0, 4, 2, 1.0);
    const Eigen::VectorXd row =
        kernel_row(fm, Eigen::VectorXd::Zero(1), fm.actions.front(),
                   fm.dequantized.front());
    const double edge = row(0) + row(3);
    CHECK(edge > prev);
    prev = edge;
  }
  CHECK(prev > 0.6);
}

TEST_CASE("near-zero noise collapses the kernel to a point mass") {
  const ModelSpec m =
      make_model("constant", {{"b0", 1.0}, {"s0", 0.0}, {"quantization", 2}});
  FiniteModel fm = make_finite_model(m, StateGrid::uniform(1, 2.0, 4), 2, 0.5);
  const Eigen::VectorXd row =
      kernel_row(fm, Eigen::VectorXd::Constant(1, -0.4), fm.actions.front(),
                 fm.dequantized.front());
  // Mean moves to -0.4 + 1*0.5 = 0.1, inside cell [0,1).
  CHECK(row(2) == 1.0);
  CHECK(row.sum() == 1.0);
}

TEST_CASE("kernel cell masses match a large Monte Carlo histogram") {
  const ModelSpec m = make_model("satmr");
  FiniteModel fm = make_finite_model(m, StateGrid::uniform(1, 4.0, 16), 4, 0.1);
  const Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.5);
  const Eigen::VectorXd u = Eigen::VectorXd::Constant(1, 0.2);
  const EmpiricalMeasure mu = EmpiricalMeasure::dirac1d(0.0);
  const Eigen::VectorXd row = kernel_row(fm, x, u, mu);

  const double b = m.drift(x, mu, u)(0);
  const double s = m.diffusion(x, mu)(0, 0);
  const int trials = 1000000;
  std::mt19937_64 gen(42);
  std::normal_distribution<double> normal(x(0) + b * 0.1, s * std::sqrt(0.1));
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(16);
  for (int t = 0; t < trials; ++t)
    counts(fm.grid.cell_of(Eigen::VectorXd::Constant(1, normal(gen)))) += 1.0;
  for (int i = 0; i < 16; ++i) {
    const double p = row(i);
    const double se = std::sqrt(std::max(p * (1.0 - p), 1e-12) / trials);
    CHECK(std::abs(counts(i) / trials - p) <= 3.0 * se + 1e-9);
  }
}

TEST_CASE("every cached transition row is a probability vector") {
  const ModelSpec m = make_model("satmr");
  const FiniteModel fm = small_model(m, 2.0, 4, 3, 0.25);
  for (int c = 0; c < fm.cells(); ++c)
    for (int a = 0; a < fm.action_count(); ++a)
      for (int mu = 0; mu < fm.measure_count(); ++mu) {
        const Eigen::VectorXd& row = fm.transition_row(c, a, mu);
        CHECK(row.size() == fm.cells());
        CHECK(row.minCoeff() >= 0.0);
        CHECK(row.sum() == doctest::Approx(1.0).epsilon(1e-10));
      }
}

TEST_CASE("two-dimensional kernel factorizes over coordinates") {
  const ModelSpec m =
      make_model("constant", {{"dim", 2}, {"b0", 0.0}, {"s0", 1.0},
                              {"quantization", 2}});
  FiniteModel fm = make_finite_model(m, StateGrid::uniform(2, 2.0, 3), 2, 1.0);
  const Eigen::VectorXd row =
      kernel_row(fm, Eigen::VectorXd::Zero(2), fm.actions.front(),
                 dequantize(fm.measures.front(), fm.grid));
  CHECK(row.size() == 9);
  CHECK(row.sum() == doctest::Approx(1.0).epsilon(1e-12));
  // Product structure: p(i,j) = p1(i) p1(j) with symmetric marginals.
  Eigen::VectorXd marg = Eigen::VectorXd::Zero(3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) marg(i) += row(i * 3 + j);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(row(i * 3 + j) == doctest::Approx(marg(i) * marg(j)).epsilon(1e-9));
}

TEST_CASE("dimensions above two are rejected") {
  const ModelSpec m = make_model("constant", {{"dim", 3}, {"quantization", 2}});
  CHECK_THROWS_AS(make_finite_model(m, StateGrid::uniform(3, 2.0, 2), 2, 0.5),
                  ConfigError);
}

TEST_CASE("decision rules enumerate in mixed-radix order") {
  const ModelSpec m = make_model("satmr", {{"quantization", 2}});
  const FiniteModel fm = small_model(m, 2.0, 3, 2, 0.25);
  CHECK(decision_rule_count(fm) == 8);
  const DecisionRule first = decision_rule_at(fm, 0);
  CHECK(first == DecisionRule{0, 0, 0});
  CHECK(decision_rule_at(fm, 1) == DecisionRule{0, 0, 1});
  CHECK(decision_rule_at(fm, 7) == DecisionRule{1, 1, 1});
}

TEST_CASE("a frozen lifted step leaves the measure untouched") {
  const ModelSpec m =
      make_model("constant", {{"b0", 0.0}, {"s0", 1e-3}, {"quantization", 2}});
  const FiniteModel fm = small_model(m, 2.0, 4, 4, 1e-4);
  for (int mu = 0; mu < fm.measure_count(); ++mu) {
    const LiftResult r = lift_step(fm, mu, DecisionRule(4, 0));
    CHECK(r.next_index == mu);
  }
}

TEST_CASE("unit running cost makes every stage cost exactly h") {
  const ModelSpec m =
      make_model("constant", {{"c0", 1.0}, {"s0", 0.5}, {"quantization", 2}});
  const FiniteModel fm = small_model(m, 2.0, 3, 3, 0.25);
  for (int mu = 0; mu < fm.measure_count(); ++mu)
    for (std::int64_t r = 0; r < decision_rule_count(fm); ++r)
      CHECK(stage_cost(fm, mu, decision_rule_at(fm, r)) ==
            doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("lifted step reproduces a hand-computed two-cell fixture") {
  const ModelSpec m =
      make_model("constant", {{"b0", 0.0}, {"s0", 1.0}, {"c0", 1.0},
                              {"quantization", 2}});
  FiniteModel fm = make_finite_model(m, StateGrid::uniform(1, 1.0, 2), 2, 1.0);
  build_transition(fm);
  // Cells [-1,0),[0,1), centers -0.5 and 0.5; measures (2,0),(1,1),(0,2).
  REQUIRE(fm.measure_count() == 3);
  const double q = 0.5 * std::erfc(0.5 / std::sqrt(2.0));  // P(N(-.5,1) >= 0)
  const DecisionRule rule{0, 0};
  // From (2,0): next mass on cell 1 is q; nearest quantized measure.
  const LiftResult r = lift_step(fm, 0, rule);
  Eigen::VectorXd masses = propagate(fm, 0, rule);
  CHECK(masses(1) == doctest::Approx(q).epsilon(1e-12));
  // q ~ 0.3085: closer to 1/2 than to 0, so the projection is (1,1).
  CHECK(r.next_index == 1);
  CHECK(r.cost == doctest::Approx(1.0).epsilon(1e-12));  // h * c0
  CHECK(project_to_quantized(fm, masses) == r.next_index);
}

TEST_CASE("terminal value averages the terminal cost over the support") {
  const ModelSpec m = make_model("satmr");
  const FiniteModel fm = small_model(m, 2.0, 3, 2, 0.25);
  for (int mu = 0; mu < fm.measure_count(); ++mu) {
    const EmpiricalMeasure emp = fm.dequantized[size_t(mu)];
    double expect = 0.0;
    for (int i = 0; i < emp.atoms.rows(); ++i)
      expect += emp.weights(i) *
                m.terminal_cost(emp.atoms.row(i).transpose(), emp);
    CHECK(terminal_value(fm, mu) == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("zero stages solve returns the terminal table unchanged") {
  const ModelSpec m = make_model("satmr");
  const FiniteModel fm = small_model(m, 2.0, 3, 2, 0.25);
  const FiniteSolution sol = solve_finite_horizon(fm, 0);
  REQUIRE(sol.values.stages.size() == 1);
  for (int mu = 0; mu < fm.measure_count(); ++mu)
    CHECK(sol.value_at(mu) == terminal_value(fm, mu));
}

TEST_CASE("zero costs give a zero value table") {
  const ModelSpec m = make_model("constant", {{"s0", 0.5}, {"quantization", 2}});
  const FiniteModel fm = small_model(m, 2.0, 3, 2, 0.25);
  const FiniteSolution sol = solve_finite_horizon(fm, 3);
  for (const auto& stage : sol.values.stages) CHECK(stage.isZero(0.0));
}

TEST_CASE("backward induction matches brute force over rule sequences") {
  const ModelSpec m = make_model("satmr", {{"quantization", 2}});
  const FiniteModel fm = small_model(m, 2.0, 2, 2, 0.25);
  const int stages = 2;
  const FiniteSolution sol = solve_finite_horizon(fm, stages);

  const std::int64_t R = decision_rule_count(fm);
  for (int mu0 = 0; mu0 < fm.measure_count(); ++mu0) {
    double best = std::numeric_limits<double>::infinity();
    for (std::int64_t r0 = 0; r0 < R; ++r0)
      for (std::int64_t r1 = 0; r1 < R; ++r1) {
        const LiftResult s0 = lift_step(fm, mu0, decision_rule_at(fm, r0));
        const LiftResult s1 =
            lift_step(fm, s0.next_index, decision_rule_at(fm, r1));
        best = std::min(best, s0.cost + s1.cost +
                                  terminal_value(fm, s1.next_index));
      }
    CHECK(sol.value_at(mu0) == doctest::Approx(best).epsilon(1e-10));
  }

  // The extracted policy replays to the same value.
  for (int mu0 = 0; mu0 < fm.measure_count(); ++mu0) {
    int mu = mu0;
    double total = 0.0;
    for (int k = 0; k < stages; ++k) {
      DecisionRule rule(size_t(fm.cells()));
      for (int c = 0; c < fm.cells(); ++c) {
        const Eigen::VectorXd u = sol.policy.action_at(k, fm.grid.center(c), mu);
        int a = 0;
        while ((fm.actions[size_t(a)] - u).norm() > 1e-12) ++a;
        rule[size_t(c)] = a;
      }
      const LiftResult r = lift_step(fm, mu, rule);
      total += r.cost;
      mu = r.next_index;
    }
    total += terminal_value(fm, mu);
    CHECK(total == doctest::Approx(sol.value_at(mu0)).epsilon(1e-10));
  }
}

TEST_CASE("discounted value of a constant cost is h over one minus beta") {
  const ModelSpec m =
      make_model("constant", {{"c0", 1.0}, {"s0", 0.5}, {"quantization", 2}});
  const FiniteModel fm = small_model(m, 2.0, 3, 2, 0.25);
  const double alpha = 1.0, tol = 1e-8;
  const FiniteSolution sol = solve_discounted(fm, alpha, tol);
  const double beta = std::exp(-alpha * 0.25);
  for (int mu = 0; mu < fm.measure_count(); ++mu)
    CHECK(sol.values.final_stage()(mu) ==
          doctest::Approx(0.25 / (1.0 - beta)).epsilon(1e-6));
}

TEST_CASE("value iteration residuals contract at rate beta") {
  const ModelSpec m = make_model("satmr", {{"quantization", 2}});
  const FiniteModel fm = small_model(m, 2.0, 3, 2, 0.25);
  const double beta = std::exp(-0.25);
  const FiniteSolution sol = solve_discounted(fm, 1.0, 1e-7);
  const auto& res = sol.values.residuals;
  REQUIRE(res.size() >= 3);
  for (size_t k = 1; k < res.size(); ++k)
    CHECK(res[k] <= beta * res[k - 1] + 1e-12);
  CHECK(res.back() <= 1e-7 * (1.0 - beta) / (2.0 * beta));
}

TEST_CASE("value iteration matches exact policy-wise linear solves") {
  const ModelSpec m = make_model("satmr", {{"quantization", 2}});
  const FiniteModel fm = small_model(m, 2.0, 2, 2, 0.25);
  const double alpha = 1.0, beta = std::exp(-alpha * 0.25);
  const FiniteSolution sol = solve_discounted(fm, alpha, 1e-10);

  // The lifted system is deterministic, so each stationary rule sequence
  // sigma: mu -> rule induces V_sigma = c_sigma + beta P_sigma V_sigma with
  // P_sigma a permutation-like 0/1 matrix; the optimal value is the pointwise
  // minimum over all sigma.
  const int M = fm.measure_count();
  const std::int64_t R = decision_rule_count(fm);
  std::int64_t total = 1;
  for (int i = 0; i < M; ++i) total *= R;
  REQUIRE(total == 64);  // R=4 rules, M=3 measures

  Eigen::VectorXd best = Eigen::VectorXd::Constant(M, 1e300);
  for (std::int64_t code = 0; code < total; ++code) {
    std::int64_t c = code;
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(M, M);
    Eigen::VectorXd rhs(M);
    for (int mu = 0; mu < M; ++mu) {
      const LiftResult r = lift_step(fm, mu, decision_rule_at(fm, c % R));
      c /= R;
      A(mu, r.next_index) -= beta;
      rhs(mu) = r.cost;
    }
    const Eigen::VectorXd v = A.fullPivLu().solve(rhs);
    best = best.cwiseMin(v);
  }
  for (int mu = 0; mu < M; ++mu)
    CHECK(sol.values.final_stage()(mu) ==
          doctest::Approx(best(mu)).epsilon(1e-7));
}

TEST_CASE("cost shifts move values by the exact horizon-weighted amount") {
  const double delta = 0.3, h = 0.25;
  const ModelSpec m0 =
      make_model("constant", {{"c0", 0.2}, {"s0", 0.6}, {"quantization", 2}});
  const ModelSpec m1 =
      make_model("constant", {{"c0", 0.5}, {"s0", 0.6}, {"quantization", 2}});
  const FiniteModel f0 = small_model(m0, 2.0, 3, 2, h);
  const FiniteModel f1 = small_model(m1, 2.0, 3, 2, h);

  const int stages = 4;
  const FiniteSolution a = solve_finite_horizon(f0, stages);
  const FiniteSolution b = solve_finite_horizon(f1, stages);
  for (int mu = 0; mu < f0.measure_count(); ++mu)
    CHECK(b.value_at(mu) - a.value_at(mu) ==
          doctest::Approx(delta * stages * h).epsilon(1e-10));

  const double beta = std::exp(-h);
  const FiniteSolution da = solve_discounted(f0, 1.0, 1e-9);
  const FiniteSolution db = solve_discounted(f1, 1.0, 1e-9);
  for (int mu = 0; mu < f0.measure_count(); ++mu)
    CHECK(db.values.final_stage()(mu) - da.values.final_stage()(mu) ==
          doctest::Approx(delta * h / (1.0 - beta)).epsilon(1e-6));
}

TEST_CASE("rule caps and measure caps raise size errors") {
  const ModelSpec m = make_model("satmr");
  FiniteModel fm = small_model(m, 2.0, 4, 4, 0.25);
  CHECK_THROWS_AS(solve_finite_horizon(fm, 2, /*rule_cap=*/10), SizeError);
  CHECK_THROWS_AS(
      make_finite_model(m, StateGrid::uniform(1, 2.0, 12), 24, 0.25, 1000),
      SizeError);
}

TEST_CASE("initial dirac measures map to the expected enumerated index") {
  const ModelSpec m = make_model("satmr");
  const FiniteModel fm = small_model(m, 2.0, 5, 6, 0.125);
  const int idx = dirac_index(fm, 0.5);
  // x0 = 0.5 sits in cell [0.4, 1.2), index 3 of [-2,2) split into 5 cells.
  CHECK(fm.measures[size_t(idx)].counts(3) == 6);
}
