#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "mckv/measure.hpp"
#include "mckv/model.hpp"
#include "mckv/policy.hpp"

namespace mckv {

// Finite approximation of the discrete-time mean-field problem: a grid of m
// cells (d <= 2, diagonal diffusion), an enumerated set of measures with
// masses in Z/n, a finite action set, and the one-step Gaussian transition
// kernel cached for every (cell, action, measure) triple.  The lifted system
// (measure, decision rule) is then a deterministic finite MDP.
struct FiniteModel {
  ModelSpec model;
  StateGrid grid;
  double h = 0.0;
  int denominator = 0;
  std::vector<QuantizedMeasure> measures;      // enumerated measure set
  std::vector<EmpiricalMeasure> dequantized;   // cell-center representatives
  std::vector<Eigen::VectorXd> actions;        // finite action grid

  // Row (cell, action, measure) -> probability vector over cells.
  std::vector<Eigen::VectorXd> transitions;
  bool built = false;

  int cells() const { return grid.cell_count(); }
  int action_count() const { return int(actions.size()); }
  int measure_count() const { return int(measures.size()); }

  const Eigen::VectorXd& transition_row(int cell, int action,
                                        int mu_index) const;

  nlohmann::json descriptor() const;
};

FiniteModel make_finite_model(const ModelSpec& model, const StateGrid& grid,
                              int denominator, double h,
                              std::int64_t measure_cap = 200000);

// One-step law of x under action u and coupling measure mu, integrated over
// the grid cells: N(x + b h, diag(sigma)^2 h) with per-coordinate Gaussian
// CDF differences and overflow mass assigned to the boundary cells.
// Requires diagonal diffusion and d <= 2.
Eigen::VectorXd kernel_row(const FiniteModel& fm, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& u,
                           const EmpiricalMeasure& mu);

// Fills the transition cache; idempotent.
void build_transition(FiniteModel& fm, int workers = 1);

// Action index per grid cell.
using DecisionRule = std::vector<int>;

std::int64_t decision_rule_count(const FiniteModel& fm);
DecisionRule decision_rule_at(const FiniteModel& fm, std::int64_t index);

// Index of the enumerated measure W1-nearest to the cell-mass vector
// `masses`; ties resolved toward lexicographically smallest counts.
int project_to_quantized(const FiniteModel& fm, const Eigen::VectorXd& masses);

// Mass vector after one lifted step: sum over cells of mass(cell) *
// P[cell, rule(cell), mu].
Eigen::VectorXd propagate(const FiniteModel& fm, int mu_index,
                          const DecisionRule& rule);

// Realized one-step cost of the rule under mu:
// h * sum_cell mass(cell) * c(center(cell), dequantize(mu), rule action).
double stage_cost(const FiniteModel& fm, int mu_index,
                  const DecisionRule& rule);

struct LiftResult {
  int next_index = 0;
  double cost = 0.0;
};

LiftResult lift_step(const FiniteModel& fm, int mu_index,
                     const DecisionRule& rule);

// Lifted terminal cost <c_T(., dequantize(mu)), mu>.
double terminal_value(const FiniteModel& fm, int mu_index);

// Value per enumerated measure.  Finite horizon keeps one column per stage
// (stages[k](mu) = optimal cost-to-go from stage k); discounted keeps the
// stationary table plus the sup-norm residual of every iteration.
struct ValueTable {
  std::vector<Eigen::VectorXd> stages;
  std::vector<double> residuals;

  const Eigen::VectorXd& final_stage() const { return stages.back(); }
  nlohmann::json to_json() const;
};

struct FiniteSolution {
  ValueTable values;
  Policy policy;
  double value_at(int mu_index) const { return values.stages.front()(mu_index); }
};

// Backward dynamic programming over N_T stages by exhaustive decision-rule
// minimization (ties -> lexicographically smallest rule).  The returned
// Markov policy covers stages 0..N_T-1; for N_T = 0 only the terminal table
// is meaningful and the policy holds the first action.
FiniteSolution solve_finite_horizon(const FiniteModel& fm, int stages,
                                    std::int64_t rule_cap = 1000000,
                                    int workers = 1);

// Value iteration for the alpha-discounted criterion with beta = exp(-alpha
// h); stops when the sup-norm residual is at most tol*(1-beta)/(2*beta), so
// the table is within tol of the fixed point.  Returns the greedy stationary
// policy.
FiniteSolution solve_discounted(const FiniteModel& fm, double alpha,
                                double tol, std::int64_t rule_cap = 1000000,
                                int workers = 1);

}  // namespace mckv
