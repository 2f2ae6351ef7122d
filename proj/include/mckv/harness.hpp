#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "mckv/em.hpp"
#include "mckv/finite_mdp.hpp"
#include "mckv/model.hpp"
#include "mckv/policy.hpp"

namespace mckv {

// Desk-scale convergence experiment: which statistic to measure, along which
// parameter ladder, and the tolerance band the fitted rate must land in.
struct ExperimentPlan {
  // strong_error | value_rate | chaos | n_particle_gap | discounted_rate
  std::string id;
  ModelSpec model;

  std::vector<double> h_ladder;   // strictly decreasing
  double h_ref = 1.0 / 4096.0;    // strong-error reference step
  std::vector<int> N_ladder;      // strictly increasing particle counts
  int N_reference = 512;          // chaos reference ensemble

  double T = 1.0;
  double alpha = 1.0;             // discounted experiments
  double discount_tol = 1e-4;     // value-iteration stop tolerance

  int particles = 256;
  int replications = 32;
  std::uint64_t seed = 1;
  int workers = 1;

  // Quantization shared across ladder points.
  double box_halfwidth = 2.0;
  int grid_cells = 5;
  int denominator = 6;

  double slope_lo = 0.0, slope_hi = 10.0;  // acceptance band for fitted slope

  void validate() const;
};

struct RatePoint {
  double x = 0.0;         // ladder parameter (h or N)
  double estimate = 0.0;  // measured statistic
  double std_error = 0.0;
  double extra = 0.0;     // secondary statistic (experiment-specific)
};

struct RateReport {
  std::string id;
  std::vector<RatePoint> points;
  bool slope_defined = false;
  double slope = 0.0, intercept = 0.0, residual = 0.0;
  bool pass = true;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
  void to_csv(std::ostream& os) const;
};

// Ordinary least squares on (log x, log y); requires >= 4 usable points and
// strictly positive values, else slope stays undefined.
void fit_loglog_slope(RateReport& report);

// Mean-square sup-distance between the EM path at each ladder step and the
// common-increment fine reference path, fitted against h.
RateReport run_strong_error(const ExperimentPlan& plan);

// Successive-difference Cauchy rate |V^h - V^{h/2}| of the finite-model
// optimal value at the quantized initial measure, plus the Monte Carlo
// deployment gap of each solved policy.
RateReport run_value_rate(const ExperimentPlan& plan);

// W1 distance at the final step between the N-particle ensemble and the
// common-random-number reference ensemble, medianed over seeds, plus the
// per-agent cost gap against the finite-model value.
RateReport run_chaos(const ExperimentPlan& plan);

// Discounted analogue of run_value_rate (value iteration per h, stationary
// policy deployed by truncated Monte Carlo).
RateReport run_discounted_rate(const ExperimentPlan& plan);

// Dispatch by plan.id; "n_particle_gap" shares the chaos routine (its
// statistic of record is the cost-gap column).
RateReport run_experiment(const ExperimentPlan& plan);

}  // namespace mckv
