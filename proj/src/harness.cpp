#include "mckv/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

#include "mckv/errors.hpp"
#include "mckv/parallel.hpp"

namespace mckv {

void ExperimentPlan::validate() const {
  static const char* ids[] = {"strong_error", "value_rate", "chaos",
                              "n_particle_gap", "discounted_rate"};
  if (std::find_if(std::begin(ids), std::end(ids),
                   [&](const char* s) { return id == s; }) == std::end(ids))
    throw ConfigError("experiment plan: unknown id '" + id + "'");
  for (size_t i = 1; i < h_ladder.size(); ++i)
    if (!(h_ladder[i] < h_ladder[i - 1]))
      throw ConfigError("experiment plan: h ladder must be strictly decreasing");
  for (size_t i = 1; i < N_ladder.size(); ++i)
    if (!(N_ladder[i] > N_ladder[i - 1]))
      throw ConfigError("experiment plan: N ladder must be strictly increasing");
  if (replications < 16)
    throw ConfigError("experiment plan: replications >= 16 required");
  if (!(T > 0.0)) throw ConfigError("experiment plan: T > 0 required");
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void mean_and_se(const std::vector<double>& v, double& mean, double& se) {
  mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  se = 0.0;
  if (v.size() >= 2) {
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= double(v.size() - 1);
    se = std::sqrt(var / double(v.size()));
  }
}

// A fixed action for the uncontrolled-dynamics experiments: the upper
// midpoint of the interval (0 for a degenerate interval).
Eigen::VectorXd fixed_action(const ModelSpec& model) {
  const ActionSet& a = model.action_set;
  if (a.kind == ActionSet::Kind::Finite) return a.points.front();
  return 0.5 * (a.upper + 0.5 * (a.lower + a.upper));
}

int quantized_index(const std::vector<QuantizedMeasure>& measures,
                    const QuantizedMeasure& q) {
  for (size_t i = 0; i < measures.size(); ++i)
    if (measures[i].counts == q.counts) return int(i);
  throw NumericError("quantized initial measure not in the enumerated set");
}

struct SolvedPoint {
  double value = 0.0;
  Policy policy;
  int steps = 0;
};

SolvedPoint solve_at(const ExperimentPlan& plan, double h, bool discounted) {
  const StateGrid grid = StateGrid::uniform(plan.model.dim, plan.box_halfwidth,
                                            plan.grid_cells);
  FiniteModel fm =
      make_finite_model(plan.model, grid, plan.denominator, h);
  build_transition(fm, plan.workers);
  const int mu0 = quantized_index(
      fm.measures,
      quantize(EmpiricalMeasure::dirac(plan.model.initial_state), grid,
               plan.denominator));
  SolvedPoint out;
  if (discounted) {
    const FiniteSolution sol =
        solve_discounted(fm, plan.alpha, plan.discount_tol, 1000000,
                         plan.workers);
    out.value = sol.value_at(mu0);
    out.policy = sol.policy;
  } else {
    const TimeGrid tg{h, plan.T};
    out.steps = tg.steps();
    const FiniteSolution sol =
        solve_finite_horizon(fm, out.steps, 1000000, plan.workers);
    out.value = sol.value_at(mu0);
    out.policy = sol.policy;
  }
  return out;
}

}  // namespace

void fit_loglog_slope(RateReport& report) {
  std::vector<double> lx, ly;
  for (const auto& p : report.points)
    if (p.x > 0.0 && p.estimate > 0.0) {
      lx.push_back(std::log(p.x));
      ly.push_back(std::log(p.estimate));
    }
  if (lx.size() < 4) {
    report.slope_defined = false;
    return;
  }
  const int n = int(lx.size());
  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += lx[size_t(i)];
    my += ly[size_t(i)];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    sxx += (lx[size_t(i)] - mx) * (lx[size_t(i)] - mx);
    sxy += (lx[size_t(i)] - mx) * (ly[size_t(i)] - my);
  }
  report.slope = sxy / sxx;
  report.intercept = my - report.slope * mx;
  double ss = 0;
  for (int i = 0; i < n; ++i) {
    const double r = ly[size_t(i)] - (report.intercept + report.slope * lx[size_t(i)]);
    ss += r * r;
  }
  report.residual = std::sqrt(ss / n);
  report.slope_defined = true;
}

RateReport run_strong_error(const ExperimentPlan& plan) {
  plan.validate();
  RateReport report;
  report.id = plan.id;
  const Policy policy = Policy::constant(fixed_action(plan.model));

  for (double h : plan.h_ladder) {
    const double ratio_real = h / plan.h_ref;
    const int ratio = int(std::llround(ratio_real));
    if (ratio < 1 || std::abs(ratio_real - double(ratio)) > 1e-9)
      throw ConfigError("strong_error: h_ref must divide every ladder step");

    std::vector<double> errs(size_t(plan.replications));
    parallel_for(plan.replications, plan.workers, [&](int r) {
      SimOptions fine_opts;
      fine_opts.replication = std::uint64_t(r);
      const TrajectoryBundle fine = reference_simulate(
          plan.model, plan.T, policy, h, plan.h_ref, plan.particles,
          plan.seed, fine_opts);
      SimOptions coarse_opts;
      coarse_opts.replication = std::uint64_t(r);
      coarse_opts.substeps = ratio;
      const TrajectoryBundle coarse =
          simulate(plan.model, TimeGrid{h, plan.T}, policy, plan.particles,
                   plan.seed, coarse_opts);
      Eigen::VectorXd sup2 = Eigen::VectorXd::Zero(plan.particles);
      for (size_t k = 0; k < coarse.snapshots.size(); ++k) {
        const Eigen::MatrixXd diff =
            fine.snapshots[k * size_t(ratio)] - coarse.snapshots[k];
        sup2 = sup2.cwiseMax(diff.rowwise().squaredNorm());
      }
      errs[size_t(r)] = sup2.mean();
    });
    RatePoint pt;
    pt.x = h;
    mean_and_se(errs, pt.estimate, pt.std_error);
    report.points.push_back(pt);
  }

  bool degenerate = true;
  for (const auto& p : report.points)
    if (p.estimate > 1e-28) degenerate = false;
  if (degenerate) {
    report.notes.push_back("degenerate ladder: strong error is zero everywhere");
  } else {
    fit_loglog_slope(report);
  }
  if (report.slope_defined)
    report.pass = report.slope >= plan.slope_lo && report.slope <= plan.slope_hi;
  return report;
}

RateReport run_value_rate(const ExperimentPlan& plan) {
  plan.validate();
  RateReport report;
  report.id = plan.id;
  std::map<double, SolvedPoint> solved;
  auto get = [&](double h) -> SolvedPoint& {
    auto it = solved.find(h);
    if (it == solved.end())
      it = solved.emplace(h, solve_at(plan, h, false)).first;
    return it->second;
  };
  for (double h : plan.h_ladder) {
    const SolvedPoint& coarse = get(h);
    const SolvedPoint& fine = get(h / 2.0);
    RatePoint pt;
    pt.x = h;
    pt.estimate = std::abs(coarse.value - fine.value);
    const CostEstimate mc = evaluate_finite_horizon(
        plan.model, TimeGrid{h, plan.T}, coarse.policy, plan.particles,
        plan.replications, plan.seed, plan.workers);
    pt.std_error = mc.std_error;
    pt.extra = std::abs(mc.mean - coarse.value);
    report.points.push_back(pt);
  }
  fit_loglog_slope(report);
  if (report.slope_defined)
    report.pass = report.slope >= plan.slope_lo && report.slope <= plan.slope_hi;
  report.notes.push_back(
      "extra column: |Monte Carlo deployment - solver value| per ladder h");
  return report;
}

RateReport run_chaos(const ExperimentPlan& plan) {
  plan.validate();
  if (plan.h_ladder.empty() || plan.N_ladder.empty())
    throw ConfigError("chaos: needs one h and an N ladder");
  RateReport report;
  report.id = plan.id;
  const double h = plan.h_ladder.front();
  const SolvedPoint sol = solve_at(plan, h, false);
  const TimeGrid tg{h, plan.T};

  const int L = int(plan.N_ladder.size());
  std::vector<std::vector<double>> w1(static_cast<size_t>(L));
  std::vector<std::vector<double>> gap(static_cast<size_t>(L));
  std::vector<double> gap_ref(static_cast<size_t>(plan.replications));
  for (auto& v : w1) v.resize(size_t(plan.replications));
  for (auto& v : gap) v.resize(size_t(plan.replications));

  parallel_for(plan.replications, plan.workers, [&](int s) {
    SimOptions opts;
    opts.replication = std::uint64_t(s);
    const TrajectoryBundle ref = simulate(plan.model, tg, sol.policy,
                                          plan.N_reference, plan.seed, opts);
    const EmpiricalMeasure mu_ref = ref.measure_at(ref.steps());
    gap_ref[size_t(s)] = std::abs(ref.particle_totals().mean() - sol.value);
    for (int j = 0; j < L; ++j) {
      const int N = plan.N_ladder[size_t(j)];
      const TrajectoryBundle run =
          simulate(plan.model, tg, sol.policy, N, plan.seed, opts);
      w1[size_t(j)][size_t(s)] =
          wasserstein1(run.measure_at(run.steps()), mu_ref);
      gap[size_t(j)][size_t(s)] =
          std::abs(run.particle_totals().mean() - sol.value);
    }
  });

  for (int j = 0; j < L; ++j) {
    RatePoint pt;
    pt.x = double(plan.N_ladder[size_t(j)]);
    pt.estimate = median(w1[size_t(j)]);
    double mean_w1 = 0.0, se = 0.0;
    mean_and_se(w1[size_t(j)], mean_w1, se);
    pt.std_error = se;
    pt.extra = median(gap[size_t(j)]);
    report.points.push_back(pt);
  }

  int inversions = 0;
  for (int j = 1; j < L; ++j)
    if (report.points[size_t(j)].estimate >
        report.points[size_t(j) - 1].estimate)
      ++inversions;
  int improved = 0;
  for (int s = 0; s < plan.replications; ++s)
    if (gap_ref[size_t(s)] < gap[0][size_t(s)]) ++improved;
  const double frac = double(improved) / double(plan.replications);
  report.pass = inversions <= 1 && frac >= 0.75;
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "median W1 inversions along N ladder: %d; cost gap improved "
                "at N=%d vs N=%d in %.17g of seeds",
                inversions, plan.N_reference, plan.N_ladder.front(), frac);
  report.notes.push_back(buf);
  report.notes.push_back("extra column: median |per-agent cost - solver value|");
  return report;
}

RateReport run_discounted_rate(const ExperimentPlan& plan) {
  plan.validate();
  RateReport report;
  report.id = plan.id;
  std::map<double, SolvedPoint> solved;
  auto get = [&](double h) -> SolvedPoint& {
    auto it = solved.find(h);
    if (it == solved.end())
      it = solved.emplace(h, solve_at(plan, h, true)).first;
    return it->second;
  };
  for (double h : plan.h_ladder) {
    const SolvedPoint& coarse = get(h);
    const SolvedPoint& fine = get(h / 2.0);
    RatePoint pt;
    pt.x = h;
    pt.estimate = std::abs(coarse.value - fine.value);
    const CostEstimate mc = evaluate_discounted(
        plan.model, h, plan.alpha, coarse.policy, plan.particles,
        plan.replications, plan.seed, 1e-6, 200000, plan.workers);
    pt.std_error = mc.std_error;
    pt.extra = std::abs(mc.mean - coarse.value);
    report.points.push_back(pt);
  }
  fit_loglog_slope(report);
  if (report.slope_defined)
    report.pass = report.slope >= plan.slope_lo && report.slope <= plan.slope_hi;
  report.notes.push_back(
      "extra column: |Monte Carlo discounted deployment - solver value|");
  return report;
}

RateReport run_experiment(const ExperimentPlan& plan) {
  plan.validate();
  if (plan.id == "strong_error") return run_strong_error(plan);
  if (plan.id == "value_rate") return run_value_rate(plan);
  if (plan.id == "chaos" || plan.id == "n_particle_gap") return run_chaos(plan);
  if (plan.id == "discounted_rate") return run_discounted_rate(plan);
  throw ConfigError("experiment: unknown id '" + plan.id + "'");
}

nlohmann::json RateReport::to_json() const {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : points)
    pts.push_back(nlohmann::json{{"x", p.x},
                                 {"estimate", p.estimate},
                                 {"std_error", p.std_error},
                                 {"extra", p.extra}});
  return nlohmann::json{{"id", id},
                        {"points", pts},
                        {"slope_defined", slope_defined},
                        {"slope", slope},
                        {"intercept", intercept},
                        {"residual", residual},
                        {"pass", pass},
                        {"notes", notes}};
}

void RateReport::to_csv(std::ostream& os) const {
  os << "x,estimate,std_error,extra\n";
  char buf[256];
  for (const auto& p : points) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g\n", p.x,
                  p.estimate, p.std_error, p.extra);
    os << buf;
  }
  os << "slope,intercept,residual,pass\n";
  if (slope_defined) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%d\n", slope, intercept,
                  residual, pass ? 1 : 0);
  } else {
    std::snprintf(buf, sizeof(buf), "undefined,,,%d\n", pass ? 1 : 0);
  }
  os << buf;
}

}  // namespace mckv
