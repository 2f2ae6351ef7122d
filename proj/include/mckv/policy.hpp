#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mckv/em.hpp"
#include "mckv/measure.hpp"
#include "mckv/model.hpp"

namespace mckv {

// Deterministic control rule.  Open-loop policies map step index to action;
// Markov policies are dense tables over (step, grid cell, quantized-measure
// index) with nearest-cell / W1-nearest-measure fallback for off-grid
// queries, so every reachable lookup resolves to an action.
class Policy {
 public:
  enum class Kind { OpenLoop, Markov, StationaryMarkov };

  Policy() = default;

  static Policy open_loop(std::vector<Eigen::VectorXd> per_step);
  // Open-loop policy holding one action forever.
  static Policy constant(const Eigen::VectorXd& u);
  static Policy markov(StateGrid grid, int denominator,
                       std::vector<QuantizedMeasure> measures, int stages,
                       std::vector<Eigen::VectorXd> table);
  static Policy stationary_markov(StateGrid grid, int denominator,
                                  std::vector<QuantizedMeasure> measures,
                                  std::vector<Eigen::VectorXd> table);

  Kind kind() const { return kind_; }
  int stages() const { return stages_; }

  // Index of the W1-nearest quantized measure (tie -> lowest index); -1 for
  // open-loop policies, which ignore the measure.  Computing this once per
  // step and passing it to action_at avoids one nearest-measure search per
  // particle.
  int measure_index(const EmpiricalMeasure& mu) const;

  Eigen::VectorXd action_at(int k, const Eigen::VectorXd& x,
                            int mu_index) const;
  Eigen::VectorXd action(int k, const Eigen::VectorXd& x,
                         const EmpiricalMeasure& mu) const;

  nlohmann::json to_json() const;
  static Policy from_json(const nlohmann::json& j);

 private:
  Kind kind_ = Kind::OpenLoop;
  bool repeat_last_ = false;
  int stages_ = 0;  // table stages (1 for stationary)
  std::vector<Eigen::VectorXd> table_;
  StateGrid grid_;
  int denominator_ = 0;
  std::vector<QuantizedMeasure> measures_;
  std::vector<EmpiricalMeasure> dequantized_;  // lookup candidates
};

// Monte Carlo cost estimate for one criterion.
struct CostEstimate {
  double mean = 0.0;
  double std_error = 0.0;  // sample std / sqrt(replications); 0 when reps < 2
  int replications = 0;
  std::string criterion;  // "finite_horizon" | "discounted"
  double h = 0.0, T = 0.0, alpha = 0.0;
  int particles = 0;
  double tail_bound = 0.0;    // discounted truncation bias bound
  int truncation_steps = 0;   // discounted horizon K

  nlohmann::json to_json() const;
};

// Mean over replications of the per-agent realized finite-horizon cost
// sum_{k<N_T} c(X_k, mu_k, U_k) h + c_T(X_{N_T}, mu_{N_T}).
CostEstimate evaluate_finite_horizon(const ModelSpec& model,
                                     const TimeGrid& grid,
                                     const Policy& policy, int particles,
                                     int replications, std::uint64_t seed,
                                     int workers = 1);

// Truncated discounted cost sum_{k<K} beta^k h c(X_k, mu_k, U_k) with
// beta = exp(-alpha h); K is chosen so beta^K <= truncation_tol and the tail
// bound beta^K ||c||_inf / (1 - beta) is reported.
CostEstimate evaluate_discounted(const ModelSpec& model, double h,
                                 double alpha, const Policy& policy,
                                 int particles, int replications,
                                 std::uint64_t seed,
                                 double truncation_tol = 1e-6,
                                 int max_steps = 200000, int workers = 1);

// Piecewise-constant deployment of a discrete policy: t maps to the step-k
// action for t in [t_k, t_{k+1}).
struct PiecewiseControl {
  const Policy* policy = nullptr;
  TimeGrid grid;

  int step_of(double t) const;  // right-continuous; throws for t outside [0,T]
  Eigen::VectorXd action(double t, const Eigen::VectorXd& x,
                         const EmpiricalMeasure& mu) const;
};

PiecewiseControl deploy_interpolated(const Policy& policy,
                                     const TimeGrid& grid);

}  // namespace mckv
