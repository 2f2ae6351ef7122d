#include "mckv/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mckv/errors.hpp"

namespace mckv {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: bad numeric value for '" + key + "': " + v);
  }
}

int to_int(const std::string& key, const std::string& v) {
  const double x = to_double(key, v);
  if (x != std::floor(x))
    throw ConfigError("config: '" + key + "' must be an integer");
  return int(x);
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(to_double(key, item));
  }
  if (out.empty()) throw ConfigError("config: empty list for '" + key + "'");
  return out;
}

}  // namespace

ModelSpec RunConfig::make_model_spec() const {
  ParamMap overrides = model_params;
  overrides["quantization"] = double(actions);
  return make_model(family, overrides);
}

StateGrid RunConfig::make_grid() const {
  return StateGrid::uniform(make_model_spec().dim, box_halfwidth, cells);
}

ExperimentPlan RunConfig::make_plan() const {
  if (experiment_id.empty())
    throw ConfigError("config: [experiment] id is required");
  ExperimentPlan plan;
  plan.id = experiment_id;
  plan.model = make_model_spec();
  plan.h_ladder = h_ladder.empty() ? std::vector<double>{h} : h_ladder;
  plan.h_ref = h_ref;
  plan.N_ladder = N_ladder;
  plan.N_reference = N_reference;
  plan.T = T;
  plan.alpha = alpha;
  plan.discount_tol = solve_tol;
  plan.particles = particles;
  plan.replications = replications;
  plan.seed = seed;
  plan.workers = workers;
  plan.box_halfwidth = box_halfwidth;
  plan.grid_cells = cells;
  plan.denominator = denominator;
  plan.slope_lo = slope_lo;
  plan.slope_hi = slope_hi;
  plan.validate();
  return plan;
}

void RunConfig::validate() const {
  make_model_spec();
  if (!(h > 0.0)) throw ConfigError("config: h > 0 required");
  if (!(T >= 0.0)) throw ConfigError("config: T >= 0 required");
  if (!(alpha > 0.0)) throw ConfigError("config: alpha > 0 required");
  if (!(box_halfwidth > 0.0)) throw ConfigError("config: box halfwidth > 0");
  if (cells < 1 || denominator < 1 || actions < 1)
    throw ConfigError("config: cells, denominator, actions must be >= 1");
  if (particles < 1 || replications < 1)
    throw ConfigError("config: particles and replications must be >= 1");
  if (workers < 1) throw ConfigError("config: workers >= 1 required");
  if (criterion != "finite" && criterion != "discounted")
    throw ConfigError("config: criterion must be finite or discounted");
  if (!(truncation_tol > 0.0) || !(solve_tol > 0.0))
    throw ConfigError("config: tolerances must be positive");
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  std::stringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: malformed section at line " +
                          std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key = value at line " +
                        std::to_string(lineno));
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config: empty key or value at line " +
                        std::to_string(lineno));

    if (section == "model") {
      if (key == "family")
        cfg.family = value;
      else
        cfg.model_params[key] = to_double(key, value);
    } else if (section == "discretization") {
      if (key == "h")
        cfg.h = to_double(key, value);
      else if (key == "T")
        cfg.T = to_double(key, value);
      else if (key == "alpha")
        cfg.alpha = to_double(key, value);
      else if (key == "box_halfwidth")
        cfg.box_halfwidth = to_double(key, value);
      else if (key == "cells")
        cfg.cells = to_int(key, value);
      else if (key == "denominator")
        cfg.denominator = to_int(key, value);
      else if (key == "actions")
        cfg.actions = to_int(key, value);
      else
        throw ConfigError("config: unknown [discretization] key '" + key + "'");
    } else if (section == "execution") {
      if (key == "particles")
        cfg.particles = to_int(key, value);
      else if (key == "replications")
        cfg.replications = to_int(key, value);
      else if (key == "seed") {
        try {
          size_t pos = 0;
          cfg.seed = std::uint64_t(std::stoull(value, &pos));
          if (pos != value.size()) throw std::invalid_argument(value);
        } catch (const std::exception&) {
          throw ConfigError("config: bad seed value: " + value);
        }
      }
      else if (key == "workers")
        cfg.workers = to_int(key, value);
      else if (key == "out")
        cfg.out_dir = value;
      else
        throw ConfigError("config: unknown [execution] key '" + key + "'");
    } else if (section == "evaluate") {
      if (key == "policy")
        cfg.policy_file = value;
      else if (key == "criterion")
        cfg.criterion = value;
      else if (key == "truncation_tol")
        cfg.truncation_tol = to_double(key, value);
      else if (key == "solve_tol")
        cfg.solve_tol = to_double(key, value);
      else
        throw ConfigError("config: unknown [evaluate] key '" + key + "'");
    } else if (section == "experiment") {
      if (key == "id")
        cfg.experiment_id = value;
      else if (key == "h_ladder")
        cfg.h_ladder = to_list(key, value);
      else if (key == "h_ref")
        cfg.h_ref = to_double(key, value);
      else if (key == "N_ladder") {
        cfg.N_ladder.clear();
        for (double x : to_list(key, value)) cfg.N_ladder.push_back(int(x));
      } else if (key == "N_reference")
        cfg.N_reference = to_int(key, value);
      else if (key == "slope_lo")
        cfg.slope_lo = to_double(key, value);
      else if (key == "slope_hi")
        cfg.slope_hi = to_double(key, value);
      else
        throw ConfigError("config: unknown [experiment] key '" + key + "'");
    } else {
      throw ConfigError("config: key '" + key + "' outside a known section");
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

}  // namespace mckv
