#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mckv/harness.hpp"
#include "mckv/model.hpp"

namespace mckv {

// One run, one file.  INI-style sections:
//   [model]           family plus numeric parameter overrides
//   [discretization]  h, T or alpha, box halfwidth, cells, denominator,
//                     actions per coordinate
//   [execution]       particles, replications, seed, workers, out
//   [evaluate]        policy file, criterion, truncation_tol
//   [experiment]      id, ladders, tolerance band
struct RunConfig {
  std::string family = "satmr";
  ParamMap model_params;

  double h = 0.125;
  double T = 1.0;
  double alpha = 1.0;
  double box_halfwidth = 2.0;
  int cells = 5;
  int denominator = 6;
  int actions = 3;

  int particles = 256;
  int replications = 32;
  std::uint64_t seed = 1;
  int workers = 1;
  std::string out_dir = ".";

  std::string policy_file;
  std::string criterion = "finite";  // finite | discounted
  double truncation_tol = 1e-6;
  double solve_tol = 1e-6;  // value-iteration tolerance

  std::string experiment_id;
  std::vector<double> h_ladder;
  double h_ref = 1.0 / 4096.0;
  std::vector<int> N_ladder;
  int N_reference = 512;
  double slope_lo = 0.0, slope_hi = 10.0;

  ModelSpec make_model_spec() const;
  StateGrid make_grid() const;
  ExperimentPlan make_plan() const;
  void validate() const;
};

// Parses the INI file; '#' and ';' start comments, keys are
// case-sensitive, unknown keys in [model] become parameter overrides and
// unknown keys elsewhere are rejected.
RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text);

}  // namespace mckv
