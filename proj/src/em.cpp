#include "mckv/em.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "mckv/errors.hpp"
#include "mckv/parallel.hpp"
#include "mckv/policy.hpp"

namespace mckv {

int TimeGrid::steps() const {
  // sup{n : nh <= T}, tolerant of T being an exact multiple of h in floating
  // point.
  return int(std::floor(T / h + 1e-9));
}

void TimeGrid::validate() const {
  if (!(h > 0.0)) throw ConfigError("time grid: h > 0 required");
  if (!(T >= 0.0)) throw ConfigError("time grid: T >= 0 required");
}

Eigen::VectorXd TrajectoryBundle::particle_totals() const {
  Eigen::VectorXd total = terminal_costs;
  for (const auto& sc : step_costs) total += sc;
  return total;
}

void TrajectoryBundle::to_csv(std::ostream& os) const {
  const int d = int(snapshots.front().cols());
  os << "step,particle";
  for (int c = 0; c < d; ++c) os << ",x" << c;
  os << ",cost\n";
  char buf[64];
  for (size_t k = 0; k < snapshots.size(); ++k) {
    const bool last = (k + 1 == snapshots.size());
    for (Eigen::Index i = 0; i < snapshots[k].rows(); ++i) {
      os << k << ',' << i;
      for (int c = 0; c < d; ++c) {
        std::snprintf(buf, sizeof(buf), "%.17g", snapshots[k](i, c));
        os << ',' << buf;
      }
      const double cost = last ? (terminal_costs.size() ? terminal_costs(i) : 0.0)
                               : (k < step_costs.size() ? step_costs[k](i) : 0.0);
      std::snprintf(buf, sizeof(buf), "%.17g", cost);
      os << ',' << buf << '\n';
    }
  }
}

EnsembleState make_ensemble(const ModelSpec& model, int particles) {
  if (particles < 1) throw ConfigError("ensemble: N >= 1 required");
  EnsembleState e;
  e.particles = model.initial_state.transpose().replicate(particles, 1);
  e.step = 0;
  return e;
}

namespace {

void advance(const ModelSpec& model, EnsembleState& ensemble,
             const EmpiricalMeasure& mu,
             const std::vector<const Policy*>& rules, const TimeGrid& grid,
             const BrownianSource& source, int workers,
             Eigen::VectorXd* costs) {
  const int n = ensemble.count();
  const int d = model.dim;
  const int k = ensemble.step;
  const double h = grid.h;
  if (costs) costs->resize(n);

  // One nearest-measure lookup per distinct policy per step.
  std::vector<int> mu_index(rules.size());
  {
    const Policy* prev = nullptr;
    int prev_idx = -1;
    for (size_t i = 0; i < rules.size(); ++i) {
      if (rules[i] == prev) {
        mu_index[i] = prev_idx;
      } else {
        prev = rules[i];
        prev_idx = rules[i]->measure_index(mu);
        mu_index[i] = prev_idx;
      }
    }
  }

  const MeasureStat stat = MeasureStat::of(mu);
  Eigen::MatrixXd next(n, d);
  parallel_for(n, workers, [&](int i) {
    const Eigen::VectorXd x = ensemble.particles.row(i).transpose();
    const Policy& pol = *rules[size_t(i) < rules.size() ? i : 0];
    const Eigen::VectorXd u = pol.action_at(k, x, mu_index[size_t(i) < rules.size() ? i : 0]);
    const Eigen::VectorXd b = model.drift(x, stat, u);
    const Eigen::MatrixXd s = model.diffusion(x, stat);
    Eigen::VectorXd dw(d);
    for (int c = 0; c < d; ++c)
      dw(c) = source.coarse_increment(ensemble.stream_of(i), std::uint64_t(k),
                                      std::uint64_t(c));
    next.row(i) = (x + b * h + s * dw).transpose();
    if (!next.row(i).allFinite())
      throw NumericError("em step: non-finite state (numerical blowup)");
    if (costs) (*costs)(i) = model.running_cost(x, stat, u) * h;
  });
  ensemble.particles = std::move(next);
  ensemble.step = k + 1;
}

BrownianSource make_source(const TimeGrid& grid, std::uint64_t seed,
                           const SimOptions& opts) {
  BrownianSource src;
  src.seed = seed;
  src.replication = opts.replication;
  src.substeps = std::max(opts.substeps, 1);
  src.h_base = grid.h / double(src.substeps);
  return src;
}

}  // namespace

void em_step(const ModelSpec& model, EnsembleState& ensemble,
             const EmpiricalMeasure& mu, const Policy& policy,
             const TimeGrid& grid, const BrownianSource& source, int workers,
             Eigen::VectorXd* costs) {
  std::vector<const Policy*> rules{&policy};
  advance(model, ensemble, mu, rules, grid, source, workers, costs);
}

EnsembleState em_step_meanfield(const ModelSpec& model,
                                const EnsembleState& ensemble,
                                const Policy& policy, const TimeGrid& grid,
                                std::uint64_t seed, const SimOptions& opts) {
  EnsembleState out = ensemble;
  const EmpiricalMeasure mu = ensemble.measure();
  em_step(model, out, mu, policy, grid, make_source(grid, seed, opts),
          opts.workers, nullptr);
  return out;
}

EnsembleState em_step_nparticle(const ModelSpec& model,
                                const EnsembleState& ensemble,
                                const std::vector<const Policy*>& rules,
                                const TimeGrid& grid, std::uint64_t seed,
                                const SimOptions& opts) {
  if (int(rules.size()) != ensemble.count())
    throw ConfigError("em_step_nparticle: one policy per agent required");
  EnsembleState out = ensemble;
  const EmpiricalMeasure mu = ensemble.measure();
  advance(model, out, mu, rules, grid, make_source(grid, seed, opts),
          opts.workers, nullptr);
  return out;
}

TrajectoryBundle simulate(const ModelSpec& model, const TimeGrid& grid,
                          const Policy& policy, int particles,
                          std::uint64_t seed, const SimOptions& opts) {
  grid.validate();
  EnsembleState state = make_ensemble(model, particles);
  const int n_steps = grid.steps();
  const BrownianSource source = make_source(grid, seed, opts);

  TrajectoryBundle bundle;
  bundle.h = grid.h;
  bundle.snapshots.reserve(size_t(n_steps) + 1);
  bundle.snapshots.push_back(state.particles);
  bundle.step_costs.reserve(size_t(n_steps));
  for (int k = 0; k < n_steps; ++k) {
    Eigen::VectorXd costs;
    const EmpiricalMeasure mu = state.measure();
    em_step(model, state, mu, policy, grid, source, opts.workers, &costs);
    bundle.snapshots.push_back(state.particles);
    bundle.step_costs.push_back(std::move(costs));
  }
  const MeasureStat stat_T = MeasureStat::of(state.measure());
  bundle.terminal_costs.resize(particles);
  for (int i = 0; i < particles; ++i)
    bundle.terminal_costs(i) =
        model.terminal_cost(state.particles.row(i).transpose(), stat_T);
  return bundle;
}

TrajectoryBundle reference_simulate(const ModelSpec& model, double T,
                                    const Policy& policy, double h_coarse,
                                    double h_ref, int particles,
                                    std::uint64_t seed,
                                    const SimOptions& opts) {
  const double ratio_real = h_coarse / h_ref;
  const int ratio = int(std::llround(ratio_real));
  if (ratio < 1 || std::abs(ratio_real - double(ratio)) > 1e-9 * ratio_real)
    throw ConfigError("reference_simulate: h_ref must divide h exactly");

  const TimeGrid fine{h_ref, T};
  const int n_steps = fine.steps();
  EnsembleState state = make_ensemble(model, particles);
  BrownianSource source;
  source.seed = seed;
  source.replication = opts.replication;
  source.h_base = h_ref;
  source.substeps = 1;

  TrajectoryBundle bundle;
  bundle.h = h_ref;
  bundle.snapshots.reserve(size_t(n_steps) + 1);
  bundle.snapshots.push_back(state.particles);
  bundle.step_costs.reserve(size_t(n_steps));

  Eigen::MatrixXd held_actions;  // per particle, refreshed at coarse times
  const int du = model.action_set.dim();
  held_actions.resize(particles, du);

  for (int k = 0; k < n_steps; ++k) {
    const EmpiricalMeasure mu = state.measure();
    const MeasureStat stat = MeasureStat::of(mu);
    if (k % ratio == 0) {
      const int coarse_k = k / ratio;
      const int idx = policy.measure_index(mu);
      for (int i = 0; i < particles; ++i)
        held_actions.row(i) =
            policy.action_at(coarse_k, state.particles.row(i).transpose(), idx)
                .transpose();
    }
    Eigen::VectorXd costs(particles);
    Eigen::MatrixXd next(particles, model.dim);
    parallel_for(particles, opts.workers, [&](int i) {
      const Eigen::VectorXd x = state.particles.row(i).transpose();
      const Eigen::VectorXd u = held_actions.row(i).transpose();
      const Eigen::VectorXd b = model.drift(x, stat, u);
      const Eigen::MatrixXd s = model.diffusion(x, stat);
      Eigen::VectorXd dw(model.dim);
      for (int c = 0; c < model.dim; ++c)
        dw(c) = source.fine_increment(std::uint64_t(i), std::uint64_t(k),
                                      std::uint64_t(c));
      next.row(i) = (x + b * h_ref + s * dw).transpose();
      if (!next.row(i).allFinite())
        throw NumericError("reference step: non-finite state");
      costs(i) = model.running_cost(x, stat, u) * h_ref;
    });
    state.particles = std::move(next);
    state.step = k + 1;
    bundle.snapshots.push_back(state.particles);
    bundle.step_costs.push_back(std::move(costs));
  }
  const MeasureStat stat_T = MeasureStat::of(state.measure());
  bundle.terminal_costs.resize(particles);
  for (int i = 0; i < particles; ++i)
    bundle.terminal_costs(i) =
        model.terminal_cost(state.particles.row(i).transpose(), stat_T);
  return bundle;
}

}  // namespace mckv
