#include <doctest.h>

#include <cmath>
#include <vector>

#include "mckv/em.hpp"
#include "mckv/errors.hpp"
#include "mckv/measure.hpp"
#include "mckv/policy.hpp"
#include "mckv/rng.hpp"

using namespace mckv;

namespace {

// A small stationary Markov policy over m cells and the full enumerated
// measure set, with table entries u(cell, mu) = levels[(cell + mu) % len].
Policy sample_markov(const StateGrid& grid, int n,
                     const std::vector<double>& levels, int stages) {
  const auto measures = enumerate_quantized(grid, n);
  const int m = grid.cell_count(), M = int(measures.size());
  std::vector<Eigen::VectorXd> table(size_t(stages) * size_t(m) * size_t(M));
  for (int k = 0; k < stages; ++k)
    for (int cell = 0; cell < m; ++cell)
      for (int mu = 0; mu < M; ++mu)
        table[(size_t(k) * size_t(m) + size_t(cell)) * size_t(M) + size_t(mu)] =
            Eigen::VectorXd::Constant(
                1, levels[size_t(cell + mu + k) % levels.size()]);
  return stages == 1 ? Policy::stationary_markov(grid, n, measures, table)
                     : Policy::markov(grid, n, measures, stages, table);
}

}  // namespace

TEST_CASE("open-loop policies index by step with repeat-last for constants") {
  std::vector<Eigen::VectorXd> steps{Eigen::VectorXd::Constant(1, 0.1),
                                     Eigen::VectorXd::Constant(1, -0.2)};
  const Policy p = Policy::open_loop(steps);
  const EmpiricalMeasure mu = EmpiricalMeasure::dirac1d(0.0);
  CHECK(p.action(0, Eigen::VectorXd::Zero(1), mu)(0) == 0.1);
  CHECK(p.action(1, Eigen::VectorXd::Zero(1), mu)(0) == -0.2);
  CHECK_THROWS_AS(p.action(2, Eigen::VectorXd::Zero(1), mu), ConfigError);
  const Policy c = Policy::constant(Eigen::VectorXd::Constant(1, 0.3));
  CHECK(c.action(100, Eigen::VectorXd::Zero(1), mu)(0) == 0.3);
}

TEST_CASE("markov lookup resolves off-grid states and measures") {
  const StateGrid grid = StateGrid::uniform(1, 2.0, 3);
  const Policy p = sample_markov(grid, 2, {-0.5, 0.0, 0.5}, 1);
  // A far-out state clamps to the boundary cell; any measure resolves to the
  // W1-nearest enumerated one.
  const EmpiricalMeasure mu = EmpiricalMeasure::dirac1d(100.0);
  const Eigen::VectorXd u = p.action(0, Eigen::VectorXd::Constant(1, 100.0), mu);
  CHECK(std::isfinite(u(0)));
  const int idx = p.measure_index(mu);
  CHECK(idx >= 0);
  // delta at +100 clamps into the last cell, nearest measure is (0,0,2).
  const auto measures = enumerate_quantized(grid, 2);
  CHECK(measures[size_t(idx)].counts(2) == 2);
}

TEST_CASE("nearest-measure ties resolve to the lowest index") {
  const StateGrid grid = StateGrid::uniform(1, 1.5, 3);
  const Policy p = sample_markov(grid, 1, {0.0, 1.0}, 1);
  // delta at 0 = center cell; measures delta_{c0}, delta_{c1}, delta_{c2}
  // with centers -1, 0, 1: the middle one is the unique nearest.
  CHECK(p.measure_index(EmpiricalMeasure::dirac1d(0.0)) == 1);
  // Equidistant between cell centers 0 and 1: tie goes to the lower index,
  // which is delta_{c1} (index 1) rather than delta_{c2} (index 2).
  CHECK(p.measure_index(EmpiricalMeasure::dirac1d(0.5)) == 1);
}

TEST_CASE("policy JSON round trip preserves every lookup") {
  const StateGrid grid = StateGrid::uniform(1, 2.0, 3);
  const Policy p = sample_markov(grid, 2, {-0.4, 0.1, 0.3}, 2);
  const Policy q = Policy::from_json(p.to_json());
  const auto measures = enumerate_quantized(grid, 2);
  for (int k = 0; k < 2; ++k)
    for (int cell = 0; cell < 3; ++cell)
      for (size_t m = 0; m < measures.size(); ++m) {
        const Eigen::VectorXd x = grid.center(cell);
        const EmpiricalMeasure mu = dequantize(measures[m], grid);
        CHECK(p.action(k, x, mu) == q.action(k, x, mu));
      }
  const Policy ol = Policy::open_loop({Eigen::VectorXd::Constant(1, 0.7)});
  CHECK(Policy::from_json(ol.to_json())
            .action(0, Eigen::VectorXd::Zero(1),
                    EmpiricalMeasure::dirac1d(0.0))(0) == 0.7);
}

TEST_CASE("zero cost model evaluates to exactly zero") {
  const ModelSpec m = make_model("constant", {{"b0", 0.1}, {"s0", 0.3}});
  const CostEstimate est = evaluate_finite_horizon(
      m, TimeGrid{0.25, 1.0}, Policy::constant(Eigen::VectorXd::Zero(1)), 16,
      8, 3);
  CHECK(est.mean == 0.0);
  CHECK(est.std_error == 0.0);
}

TEST_CASE("unit running cost integrates to N_T * h") {
  const ModelSpec m = make_model("constant", {{"c0", 1.0}, {"s0", 0.1}});
  const CostEstimate est = evaluate_finite_horizon(
      m, TimeGrid{0.25, 1.0}, Policy::constant(Eigen::VectorXd::Zero(1)), 8,
      5, 3);
  CHECK(est.mean == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(est.std_error == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(est.criterion == "finite_horizon");
}

TEST_CASE("finite-horizon estimate matches a straight-loop evaluator") {
  const ModelSpec m = make_model("satmr");
  const double h = 1.0 / 64.0;
  const TimeGrid grid{h, 1.0};
  const Policy pol = Policy::constant(Eigen::VectorXd::Zero(1));
  const int N = 128, reps = 16;
  const std::uint64_t seed = 17;
  const CostEstimate est =
      evaluate_finite_horizon(m, grid, pol, N, reps, seed);

  // Independent re-derivation from the scheme definition.
  double grand = 0.0;
  for (int r = 0; r < reps; ++r) {
    std::vector<double> x(size_t(N), 0.5);
    double total = 0.0;
    for (int k = 0; k < grid.steps(); ++k) {
      double stat = 0.0;
      for (double xi : x) stat += std::tanh(xi);
      stat /= N;
      std::vector<double> nx(static_cast<size_t>(N));
      for (int i = 0; i < N; ++i) {
        const double xi = x[size_t(i)];
        const double b = -0.5 * std::tanh(xi) + 0.5 * stat;
        const double s = 0.4 + 0.2 / (1.0 + xi * xi);
        const double dw =
            std::sqrt(h) * counter_normal(seed, std::uint64_t(r),
                                          std::uint64_t(i), std::uint64_t(k), 0);
        nx[size_t(i)] = xi + b * h + s * dw;
        total += (xi * xi / (1.0 + xi * xi) + 0.5 * stat * stat) * h;
      }
      x = nx;
    }
    for (double xi : x) total += xi * xi / (1.0 + xi * xi);
    grand += total / N;
  }
  grand /= reps;
  CHECK(est.mean == doctest::Approx(grand).epsilon(1e-12));
}

TEST_CASE("discounted evaluation of unit cost matches the geometric sum") {
  const ModelSpec m = make_model("constant", {{"c0", 1.0}, {"s0", 0.1}});
  const double h = 0.1, alpha = 1.0, tol = 1e-6;
  const CostEstimate est = evaluate_discounted(
      m, h, alpha, Policy::constant(Eigen::VectorXd::Zero(1)), 4, 3, 1, tol);
  const double beta = std::exp(-alpha * h);
  CHECK(beta == doctest::Approx(0.9048374180359595).epsilon(1e-14));
  const int K = est.truncation_steps;
  CHECK(std::pow(beta, K) <= tol + 1e-15);
  const double expected = h * (1.0 - std::pow(beta, K)) / (1.0 - beta);
  CHECK(est.mean == doctest::Approx(expected).epsilon(1e-10));
  CHECK(est.tail_bound <= tol * m.C4 / (1.0 - beta) + 1e-12);
  CHECK(est.criterion == "discounted");
}

TEST_CASE("discounted estimate equals the beta-weighted trajectory sum") {
  const ModelSpec m = make_model("satmr");
  const double h = 0.125, alpha = 0.5;
  const Policy pol = Policy::constant(Eigen::VectorXd::Zero(1));
  const CostEstimate est =
      evaluate_discounted(m, h, alpha, pol, 32, 1, 9, 1e-4);
  const double beta = std::exp(-alpha * h);
  const int K = est.truncation_steps;
  const TrajectoryBundle bundle =
      simulate(m, TimeGrid{h, K * h}, pol, 32, 9);
  double expected = 0.0;
  for (int k = 0; k < K; ++k)
    expected += std::pow(beta, k) * bundle.step_costs[size_t(k)].mean();
  CHECK(est.mean == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("cost shifts move the estimates by the exact deterministic amount") {
  const Policy pol = Policy::constant(Eigen::VectorXd::Zero(1));
  const double delta = 0.75;
  const ModelSpec m0 = make_model("constant", {{"c0", 0.4}, {"s0", 0.2}});
  const ModelSpec m1 =
      make_model("constant", {{"c0", 0.4 + delta}, {"s0", 0.2}});
  const TimeGrid grid{0.25, 1.5};
  const CostEstimate a = evaluate_finite_horizon(m0, grid, pol, 8, 4, 2);
  const CostEstimate b = evaluate_finite_horizon(m1, grid, pol, 8, 4, 2);
  CHECK(b.mean - a.mean ==
        doctest::Approx(delta * grid.steps() * grid.h).epsilon(1e-12));

  const CostEstimate da = evaluate_discounted(m0, 0.25, 1.0, pol, 8, 4, 2);
  const CostEstimate db = evaluate_discounted(m1, 0.25, 1.0, pol, 8, 4, 2);
  const double beta = std::exp(-0.25);
  const double shift = delta * 0.25 *
                       (1.0 - std::pow(beta, da.truncation_steps)) /
                       (1.0 - beta);
  CHECK(db.mean - da.mean == doctest::Approx(shift).epsilon(1e-10));
}

TEST_CASE("discounted truncation failure raises a configuration error") {
  const ModelSpec m = make_model("constant", {{"c0", 1.0}});
  CHECK_THROWS_AS(
      evaluate_discounted(m, 0.01, 0.001, Policy::constant(Eigen::VectorXd::Zero(1)),
                          2, 2, 1, 1e-8, 100),
      ConfigError);
}

TEST_CASE("interpolated deployment follows the right-continuous convention") {
  const TimeGrid grid{0.5, 1.0};
  std::vector<Eigen::VectorXd> steps{Eigen::VectorXd::Constant(1, 1.0),
                                     Eigen::VectorXd::Constant(1, -1.0)};
  const Policy p = Policy::open_loop(steps);
  const PiecewiseControl ctrl = deploy_interpolated(p, grid);
  const EmpiricalMeasure mu = EmpiricalMeasure::dirac1d(0.0);
  CHECK(ctrl.action(0.0, Eigen::VectorXd::Zero(1), mu)(0) == 1.0);
  CHECK(ctrl.action(0.5, Eigen::VectorXd::Zero(1), mu)(0) == -1.0);
  CHECK(ctrl.action(0.75, Eigen::VectorXd::Zero(1), mu)(0) == -1.0);
  CHECK_THROWS_AS(ctrl.action(1.5, Eigen::VectorXd::Zero(1), mu), ConfigError);

  const Policy c = Policy::constant(Eigen::VectorXd::Constant(1, 0.2));
  const PiecewiseControl cc = deploy_interpolated(c, grid);
  for (double t : {0.0, 0.3, 0.5, 0.99})
    CHECK(cc.action(t, Eigen::VectorXd::Zero(1), mu)(0) == 0.2);
}

TEST_CASE("policy lookups stay inside the action set over a full rollout") {
  const ModelSpec m = make_model("satmr");
  const StateGrid grid = StateGrid::uniform(1, 2.0, 3);
  const Policy p = sample_markov(grid, 2, {-0.5, 0.0, 0.5}, 1);
  const TrajectoryBundle bundle = simulate(m, TimeGrid{0.125, 1.0}, p, 32, 4);
  for (int k = 0; k <= bundle.steps(); ++k) {
    const EmpiricalMeasure mu = bundle.measure_at(k);
    const int idx = p.measure_index(mu);
    for (int i = 0; i < 32; ++i) {
      const Eigen::VectorXd u =
          p.action_at(k, bundle.snapshots[size_t(k)].row(i).transpose(), idx);
      CHECK(m.action_set.contains(u));
    }
  }
}
