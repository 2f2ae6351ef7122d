#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mckv/config.hpp"
#include "mckv/em.hpp"
#include "mckv/errors.hpp"
#include "mckv/finite_mdp.hpp"
#include "mckv/harness.hpp"
#include "mckv/model.hpp"
#include "mckv/policy.hpp"

namespace {

using namespace mckv;

struct CommonFlags {
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = 0;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "run configuration file")
      ->required();
  cmd->add_option("--seed", flags.seed, "override the configured seed");
  cmd->add_option("--workers", flags.workers, "override the worker count");
  cmd->add_option("--out", flags.out_dir, "override the output directory");
}

RunConfig load_config(const CommonFlags& flags, const CLI::App* cmd) {
  RunConfig cfg = parse_config(flags.config_path);
  if (cmd->count("--seed")) cfg.seed = flags.seed;
  if (cmd->count("--workers")) cfg.workers = flags.workers;
  if (cmd->count("--out")) cfg.out_dir = flags.out_dir;
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  return cfg;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open output file '" + path + "'");
  out << text;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (std::filesystem::path(cfg.out_dir) / name).string();
}

Policy default_policy(const ModelSpec& model) {
  const ActionSet& a = model.action_set;
  if (a.kind == ActionSet::Kind::Finite) return Policy::constant(a.points.front());
  return Policy::constant(0.5 * (a.lower + a.upper));
}

Policy load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open policy file '" + path + "'");
  nlohmann::json j;
  in >> j;
  return Policy::from_json(j);
}

int cmd_simulate(const RunConfig& cfg) {
  const ModelSpec model = cfg.make_model_spec();
  const TimeGrid grid{cfg.h, cfg.T};
  const Policy policy = cfg.policy_file.empty() ? default_policy(model)
                                                : load_policy(cfg.policy_file);
  SimOptions opts;
  opts.workers = cfg.workers;
  const TrajectoryBundle bundle =
      simulate(model, grid, policy, cfg.particles, cfg.seed, opts);
  {
    std::ofstream csv(out_path(cfg, "trajectory.csv"), std::ios::binary);
    bundle.to_csv(csv);
  }
  const Eigen::VectorXd totals = bundle.particle_totals();
  write_json(out_path(cfg, "summary.json"),
             nlohmann::json{{"steps", bundle.steps()},
                            {"h", bundle.h},
                            {"particles", cfg.particles},
                            {"seed", cfg.seed},
                            {"mean_cost", totals.mean()},
                            {"min_cost", totals.minCoeff()},
                            {"max_cost", totals.maxCoeff()}});
  std::printf("simulate: %d steps, mean cost %.17g\n", bundle.steps(),
              totals.mean());
  return 0;
}

int cmd_solve(const RunConfig& cfg, bool discounted) {
  const ModelSpec model = cfg.make_model_spec();
  FiniteModel fm = make_finite_model(model, cfg.make_grid(), cfg.denominator,
                                     cfg.h);
  build_transition(fm, cfg.workers);
  const QuantizedMeasure q0 =
      quantize(EmpiricalMeasure::dirac(model.initial_state), fm.grid,
               cfg.denominator);
  int mu0 = -1;
  for (int i = 0; i < fm.measure_count(); ++i)
    if (fm.measures[size_t(i)].counts == q0.counts) mu0 = i;
  if (mu0 < 0) throw NumericError("initial measure missing from enumeration");

  const FiniteSolution sol =
      discounted
          ? solve_discounted(fm, cfg.alpha, cfg.solve_tol, 1000000,
                             cfg.workers)
          : solve_finite_horizon(fm, TimeGrid{cfg.h, cfg.T}.steps(), 1000000,
                                 cfg.workers);
  write_json(out_path(cfg, "policy.json"), sol.policy.to_json());
  nlohmann::json vj = sol.values.to_json();
  vj["model"] = fm.descriptor();
  vj["initial_measure_index"] = mu0;
  vj["value_at_initial"] = sol.value_at(mu0);
  write_json(out_path(cfg, "value.json"), vj);
  std::printf("%.17g\n", sol.value_at(mu0));
  return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
  if (cfg.policy_file.empty())
    throw ConfigError("evaluate: [evaluate] policy file is required");
  const ModelSpec model = cfg.make_model_spec();
  const Policy policy = load_policy(cfg.policy_file);
  const CostEstimate est =
      cfg.criterion == "discounted"
          ? evaluate_discounted(model, cfg.h, cfg.alpha, policy,
                                cfg.particles, cfg.replications, cfg.seed,
                                cfg.truncation_tol, 200000, cfg.workers)
          : evaluate_finite_horizon(model, TimeGrid{cfg.h, cfg.T}, policy,
                                    cfg.particles, cfg.replications, cfg.seed,
                                    cfg.workers);
  write_json(out_path(cfg, "estimate.json"), est.to_json());
  std::printf("%.17g\n", est.mean);
  return 0;
}

int cmd_experiment(const RunConfig& cfg) {
  const ExperimentPlan plan = cfg.make_plan();
  const RateReport report = run_experiment(plan);
  write_json(out_path(cfg, "report.json"), report.to_json());
  {
    std::ofstream csv(out_path(cfg, "report.csv"), std::ios::binary);
    report.to_csv(csv);
  }
  for (const auto& note : report.notes)
    std::printf("note: %s\n", note.c_str());
  if (report.slope_defined)
    std::printf("slope %.17g (band [%.17g, %.17g])\n", report.slope,
                plan.slope_lo, plan.slope_hi);
  std::printf("%s\n", report.pass ? "pass" : "fail");
  return report.pass ? 0 : 1;
}

int cmd_validate_model(const RunConfig& cfg) {
  const ModelSpec model = cfg.make_model_spec();
  const AuditReport rep = validate_model(model, 512, cfg.seed);
  write_json(out_path(cfg, "audit.json"),
             nlohmann::json{{"lip_b", rep.lip_b},
                            {"lip_sigma", rep.lip_sigma},
                            {"lip_c", rep.lip_c},
                            {"lip_cT", rep.lip_cT},
                            {"max_b", rep.max_b},
                            {"max_sigma", rep.max_sigma},
                            {"max_c", rep.max_c},
                            {"max_cT", rep.max_cT},
                            {"violation", rep.violation},
                            {"messages", rep.messages}});
  for (const auto& m : rep.messages) std::printf("violation: %s\n", m.c_str());
  std::printf("%s\n", rep.violation ? "fail" : "pass");
  return rep.violation ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mean-field control toolkit"};
  app.require_subcommand(1);

  struct Sub {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  static const Sub subs[] = {
      {"simulate", "simulate the particle system", &cmd_simulate},
      {"solve-finite", "solve the finite-horizon finite model",
       [](const RunConfig& c) { return cmd_solve(c, false); }},
      {"solve-discounted", "solve the discounted finite model",
       [](const RunConfig& c) { return cmd_solve(c, true); }},
      {"evaluate", "Monte Carlo evaluation of a saved policy", &cmd_evaluate},
      {"experiment", "run a convergence experiment", &cmd_experiment},
      {"validate-model", "audit the model's declared constants",
       &cmd_validate_model},
  };

  CommonFlags flags[std::size(subs)];
  CLI::App* cmds[std::size(subs)];
  for (size_t i = 0; i < std::size(subs); ++i) {
    cmds[i] = app.add_subcommand(subs[i].name, subs[i].help);
    add_common(cmds[i], flags[i]);
  }

  CLI11_PARSE(app, argc, argv);

  for (size_t i = 0; i < std::size(subs); ++i) {
    if (!cmds[i]->parsed()) continue;
    try {
      const RunConfig cfg = load_config(flags[i], cmds[i]);
      return subs[i].run(cfg);
    } catch (const ConfigError& e) {
      std::fprintf(stderr, "config error: %s\n", e.what());
      return 2;
    } catch (const std::exception& e) {
      std::fprintf(stderr, "error: %s\n", e.what());
      return 3;
    }
  }
  return 2;
}
