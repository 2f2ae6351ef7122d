#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mckv/measure.hpp"

namespace mckv {

// Compact action set: either a coordinate box or an explicit finite list.
struct ActionSet {
  enum class Kind { IntervalBox, Finite };
  Kind kind = Kind::IntervalBox;
  Eigen::VectorXd lower, upper;         // interval box bounds
  std::vector<Eigen::VectorXd> points;  // finite list
  int quantization_count = 3;           // per coordinate, when a grid is needed

  static ActionSet interval(double lo, double hi, int quantization_count = 3);
  static ActionSet finite(std::vector<Eigen::VectorXd> pts);

  int dim() const;
  bool contains(const Eigen::VectorXd& u, double tol = 1e-12) const;
  // Finite quantization; for a box, a per-coordinate grid including both
  // endpoints of every interval.
  std::vector<Eigen::VectorXd> finite_actions() const;
  void validate() const;
};

using ParamMap = std::map<std::string, double>;

// A registered parametric mean-field control problem: drift b, diffusion
// sigma, running cost c, terminal cost c_T, with declared Lipschitz constants
// C1 (b, sigma), C3 (c, c_T) and bounds C2 (|b|+|sigma|), C4 (|c|+|c_T|).
// Measures enter every built-in family only through the componentwise
// statistic  integral of tanh d(mu), so evaluation is O(support size) and
// W1-Lipschitz continuity is checkable.
// Cached measure statistic: componentwise integral of tanh.  Computing it
// once per ensemble step keeps particle updates O(N) instead of O(N^2).
struct MeasureStat {
  Eigen::VectorXd tanh_mean;

  static MeasureStat of(const EmpiricalMeasure& mu) { return {mu.mean_tanh()}; }
};

struct ModelSpec {
  int dim = 1;
  ActionSet action_set;
  std::string drift_id, diffusion_id, running_cost_id, terminal_cost_id;
  ParamMap drift_params, diffusion_params, running_cost_params,
      terminal_cost_params;
  double C1 = 0, C2 = 0, C3 = 0, C4 = 0;
  Eigen::VectorXd initial_state;

  Eigen::VectorXd drift(const Eigen::VectorXd& x, const EmpiricalMeasure& mu,
                        const Eigen::VectorXd& u) const;
  Eigen::MatrixXd diffusion(const Eigen::VectorXd& x,
                            const EmpiricalMeasure& mu) const;
  double running_cost(const Eigen::VectorXd& x, const EmpiricalMeasure& mu,
                      const Eigen::VectorXd& u) const;
  double terminal_cost(const Eigen::VectorXd& x,
                       const EmpiricalMeasure& mu) const;

  Eigen::VectorXd drift(const Eigen::VectorXd& x, const MeasureStat& stat,
                        const Eigen::VectorXd& u) const;
  Eigen::MatrixXd diffusion(const Eigen::VectorXd& x,
                            const MeasureStat& stat) const;
  double running_cost(const Eigen::VectorXd& x, const MeasureStat& stat,
                      const Eigen::VectorXd& u) const;
  double terminal_cost(const Eigen::VectorXd& x,
                       const MeasureStat& stat) const;

  double param(const ParamMap& map, const std::string& key) const;
  void validate() const;  // registry keys known, constants nonnegative
};

// Registry of built-in families.  "satmr" (saturated mean-reverting, d=1):
//   b(x,mu,u)   = theta1*tanh(x) + theta2*<tanh,mu> + u,  u in [-u_max,u_max]
//   sigma(x,mu) = sigma0 + sigma1/(1+x^2)
//   c(x,mu,u)   = x^2/(1+x^2) + lambda*u^2 + gamma*<tanh,mu>^2
//   c_T(x,mu)   = x^2/(1+x^2)
// "constant" (any d): b = b0*1, sigma = s0*I, c = c0, c_T = ct0; action
// unused.  Declared constants are analytic and hold by construction.
ModelSpec make_model(const std::string& family, const ParamMap& overrides = {});
std::vector<std::string> registered_families();

// Evaluates b and sigma at one point, checking finiteness.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> evaluate_dynamics(
    const ModelSpec& model, const Eigen::VectorXd& x,
    const EmpiricalMeasure& mu, const Eigen::VectorXd& u);

// Randomized audit of the standing assumptions: Lipschitz ratios in
// |x - y| + W1 and sup bounds over random admissible inputs.
struct AuditReport {
  double lip_b = 0, lip_sigma = 0, lip_c = 0, lip_cT = 0;  // max observed ratios
  double max_b = 0, max_sigma = 0, max_c = 0, max_cT = 0;  // max observed norms
  bool violation = false;
  std::vector<std::string> messages;
};

AuditReport validate_model(const ModelSpec& model, int samples,
                           std::uint64_t seed);

}  // namespace mckv
