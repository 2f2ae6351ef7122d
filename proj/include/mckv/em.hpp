#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "mckv/measure.hpp"
#include "mckv/model.hpp"
#include "mckv/rng.hpp"

namespace mckv {

class Policy;

// Uniform time grid with step h on [0, T]; N_T = sup{n : nh <= T}.
struct TimeGrid {
  double h = 0.0;
  double T = 0.0;

  int steps() const;  // N_T
  void validate() const;
};

// Particle ensemble at one time step.  Row i of `particles` is the state of
// particle i; its Brownian stream is the counter-RNG stream keyed by i.
struct EnsembleState {
  Eigen::MatrixXd particles;  // N x d
  int step = 0;
  // Counter-RNG stream id per particle; empty means the identity (stream i
  // for particle i).  Distinct ids keep increments independent.
  std::vector<std::uint64_t> streams;

  int count() const { return int(particles.rows()); }
  std::uint64_t stream_of(int i) const {
    return streams.empty() ? std::uint64_t(i) : streams[size_t(i)];
  }
  EmpiricalMeasure measure() const {
    return EmpiricalMeasure::uniform(particles);
  }
};

// Per-step snapshots of a simulated path with realized costs.
struct TrajectoryBundle {
  double h = 0.0;
  std::vector<Eigen::MatrixXd> snapshots;   // steps() + 1 entries
  std::vector<Eigen::VectorXd> step_costs;  // per step k: particle costs c*h
  Eigen::VectorXd terminal_costs;           // per particle, at the last step

  int steps() const { return int(snapshots.size()) - 1; }
  EmpiricalMeasure measure_at(int k) const {
    return EmpiricalMeasure::uniform(snapshots[size_t(k)]);
  }
  // Per-particle realized total: sum of step costs plus terminal cost.
  Eigen::VectorXd particle_totals() const;
  void to_csv(std::ostream& os) const;  // step, particle, coords..., cost
};

struct SimOptions {
  std::uint64_t replication = 0;
  int workers = 1;
  // Brownian refinement: increments are sums of `substeps` base increments of
  // step h/substeps, so paths at different step sizes can share one stream.
  int substeps = 1;
};

EnsembleState make_ensemble(const ModelSpec& model, int particles);

// One EM step of the particle ensemble against an explicit coupling measure.
// Writes realized per-particle running costs (c * h) to `costs` if non-null.
void em_step(const ModelSpec& model, EnsembleState& ensemble,
             const EmpiricalMeasure& mu, const Policy& policy,
             const TimeGrid& grid, const BrownianSource& source, int workers,
             Eigen::VectorXd* costs = nullptr);

// Mean-field step: every particle is coupled through the ensemble's own
// empirical measure and advanced with its private Gaussian increment.
EnsembleState em_step_meanfield(const ModelSpec& model,
                                const EnsembleState& ensemble,
                                const Policy& policy, const TimeGrid& grid,
                                std::uint64_t seed,
                                const SimOptions& opts = {});

// N-particle step with per-agent policies; the coupling measure is always the
// ensemble's empirical measure.
EnsembleState em_step_nparticle(const ModelSpec& model,
                                const EnsembleState& ensemble,
                                const std::vector<const Policy*>& rules,
                                const TimeGrid& grid, std::uint64_t seed,
                                const SimOptions& opts = {});

// Full EM trajectory with realized costs.
TrajectoryBundle simulate(const ModelSpec& model, const TimeGrid& grid,
                          const Policy& policy, int particles,
                          std::uint64_t seed, const SimOptions& opts = {});

// Fine-step proxy for the continuous-time process: simulates at step h_ref
// holding the control constant on each coarse interval [t_k, t_{k+1}) of step
// h_coarse.  h_ref must divide h_coarse; the fine increments aggregate
// exactly to the coarse increments used by simulate() with
// substeps = h_coarse / h_ref under the same seed.
TrajectoryBundle reference_simulate(const ModelSpec& model, double T,
                                    const Policy& policy, double h_coarse,
                                    double h_ref, int particles,
                                    std::uint64_t seed,
                                    const SimOptions& opts = {});

}  // namespace mckv
