#include "mckv/finite_mdp.hpp"

#include <algorithm>
#include <cmath>

#include "mckv/errors.hpp"
#include "mckv/parallel.hpp"

namespace mckv {

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// W1 between two mass vectors on the same grid.  d = 1 uses the O(m) CDF
// formula; d = 2 the exact transport solve on the nonzero cells.
double grid_w1(const StateGrid& grid, const Eigen::VectorXd& p,
               const Eigen::VectorXd& q) {
  if (grid.dim() == 1) return wasserstein1_grid_1d(grid, p, q);
  std::vector<int> sp, sq;
  for (int j = 0; j < p.size(); ++j) {
    if (p(j) > 0.0) sp.push_back(j);
    if (q(j) > 0.0) sq.push_back(j);
  }
  Eigen::MatrixXd xa(sp.size(), grid.dim()), xb(sq.size(), grid.dim());
  Eigen::VectorXd wa(sp.size()), wb(sq.size());
  for (size_t k = 0; k < sp.size(); ++k) {
    xa.row(k) = grid.center(sp[k]).transpose();
    wa(k) = p(sp[k]);
  }
  for (size_t k = 0; k < sq.size(); ++k) {
    xb.row(k) = grid.center(sq[k]).transpose();
    wb(k) = q(sq[k]);
  }
  return transport_w1(xa, wa, xb, wb);
}

}  // namespace

const Eigen::VectorXd& FiniteModel::transition_row(int cell, int action,
                                                   int mu_index) const {
  if (!built) throw ConfigError("finite model: transition cache not built");
  return transitions[(size_t(cell) * size_t(action_count()) + size_t(action)) *
                         size_t(measure_count()) +
                     size_t(mu_index)];
}

nlohmann::json FiniteModel::descriptor() const {
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : grid.edges) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < e.size(); ++i) a.push_back(e(i));
    edges.push_back(a);
  }
  nlohmann::json acts = nlohmann::json::array();
  for (const auto& u : actions) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < u.size(); ++i) a.push_back(u(i));
    acts.push_back(a);
  }
  return nlohmann::json{{"dim", model.dim},
                        {"h", h},
                        {"cells", cells()},
                        {"denominator", denominator},
                        {"measure_count", measure_count()},
                        {"grid_edges", edges},
                        {"actions", acts}};
}

FiniteModel make_finite_model(const ModelSpec& model, const StateGrid& grid,
                              int denominator, double h,
                              std::int64_t measure_cap) {
  model.validate();
  grid.validate();
  if (model.dim > 2)
    throw ConfigError("finite model: d <= 2 required");
  if (grid.dim() != model.dim)
    throw ConfigError("finite model: grid dimension mismatch");
  if (!(h > 0.0)) throw ConfigError("finite model: h > 0 required");
  FiniteModel fm;
  fm.model = model;
  fm.grid = grid;
  fm.h = h;
  fm.denominator = denominator;
  fm.measures = enumerate_quantized(grid, denominator, measure_cap);
  fm.dequantized.reserve(fm.measures.size());
  for (const auto& q : fm.measures) fm.dequantized.push_back(dequantize(q, grid));
  fm.actions = model.action_set.finite_actions();
  if (fm.actions.empty())
    throw ConfigError("finite model: empty action grid");
  return fm;
}

Eigen::VectorXd kernel_row(const FiniteModel& fm, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& u,
                           const EmpiricalMeasure& mu) {
  const int d = fm.model.dim;
  if (d > 2) throw ConfigError("kernel: d <= 2 required");
  const Eigen::VectorXd b = fm.model.drift(x, mu, u);
  const Eigen::MatrixXd s = fm.model.diffusion(x, mu);
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < d; ++c)
      if (r != c && std::abs(s(r, c)) > 1e-14)
        throw ConfigError("kernel: diagonal diffusion required");

  const double sqrt_h = std::sqrt(fm.h);
  std::vector<Eigen::VectorXd> coord_probs(d);
  for (int c = 0; c < d; ++c) {
    const Eigen::VectorXd& e = fm.grid.edges[c];
    const int mc = fm.grid.cells(c);
    const double mean = x(c) + b(c) * fm.h;
    const double sd = std::abs(s(c, c)) * sqrt_h;
    Eigen::VectorXd p(mc);
    if (sd < 1e-300) {
      // Degenerate coordinate: point mass at the cell containing the mean.
      p.setZero();
      double v = std::min(std::max(mean, e(0)), e(mc));
      int i = int(std::upper_bound(e.data(), e.data() + e.size(), v) -
                  e.data()) -
              1;
      p(std::min(std::max(i, 0), mc - 1)) = 1.0;
    } else {
      // Interior cells take their CDF slice; boundary cells absorb the tails.
      double lo = 0.0;
      for (int j = 0; j < mc; ++j) {
        const double hi =
            j + 1 == mc ? 1.0 : normal_cdf((e(j + 1) - mean) / sd);
        p(j) = std::max(hi - lo, 0.0);
        lo = hi;
      }
      p /= p.sum();
    }
    coord_probs[c] = p;
  }
  if (d == 1) return coord_probs[0];
  const int m0 = fm.grid.cells(0), m1 = fm.grid.cells(1);
  Eigen::VectorXd row(m0 * m1);
  for (int i = 0; i < m0; ++i)
    for (int j = 0; j < m1; ++j)
      row(i * m1 + j) = coord_probs[0](i) * coord_probs[1](j);
  return row;
}

void build_transition(FiniteModel& fm, int workers) {
  if (fm.built) return;
  const int m = fm.cells(), A = fm.action_count(), M = fm.measure_count();
  // Non-degeneracy check at the cell centers.
  for (int cell = 0; cell < m; ++cell) {
    const Eigen::MatrixXd s =
        fm.model.diffusion(fm.grid.center(cell), fm.dequantized.front());
    for (int c = 0; c < fm.model.dim; ++c)
      if (!(s(c, c) > 0.0))
        throw ConfigError("finite model: degenerate diffusion on the grid");
  }
  fm.transitions.assign(size_t(m) * size_t(A) * size_t(M), Eigen::VectorXd());
  const std::int64_t triples = std::int64_t(m) * A * M;
  parallel_for(int(triples), workers, [&](int t) {
    const int cell = t / (A * M);
    const int action = (t / M) % A;
    const int mu = t % M;
    fm.transitions[size_t(t)] = kernel_row(fm, fm.grid.center(cell),
                                           fm.actions[size_t(action)],
                                           fm.dequantized[size_t(mu)]);
  });
  fm.built = true;
}

std::int64_t decision_rule_count(const FiniteModel& fm) {
  long double r = 1.0L;
  for (int c = 0; c < fm.cells(); ++c) {
    r *= fm.action_count();
    if (r > 1e18L) return std::int64_t(2e18);
  }
  return std::int64_t(r);
}

DecisionRule decision_rule_at(const FiniteModel& fm, std::int64_t index) {
  // Mixed-radix digits with cell 0 most significant, so ascending index is
  // ascending lexicographic order over rules.
  const int m = fm.cells(), A = fm.action_count();
  DecisionRule rule(static_cast<size_t>(m));
  for (int c = m - 1; c >= 0; --c) {
    rule[size_t(c)] = int(index % A);
    index /= A;
  }
  return rule;
}

int project_to_quantized(const FiniteModel& fm, const Eigen::VectorXd& masses) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < fm.measure_count(); ++i) {
    const Eigen::VectorXi& c = fm.measures[size_t(i)].counts;
    const double d = grid_w1(fm.grid, masses, fm.measures[size_t(i)].masses());
    if (d < best_d - 1e-13) {
      best_d = d;
      best = i;
    } else if (best >= 0 && d < best_d + 1e-13) {
      const Eigen::VectorXi& bc = fm.measures[size_t(best)].counts;
      if (std::lexicographical_compare(c.data(), c.data() + c.size(),
                                       bc.data(), bc.data() + bc.size()))
        best = i;
    }
  }
  return best;
}

Eigen::VectorXd propagate(const FiniteModel& fm, int mu_index,
                          const DecisionRule& rule) {
  const Eigen::VectorXd mass = fm.measures[size_t(mu_index)].masses();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(fm.cells());
  for (int cell = 0; cell < fm.cells(); ++cell)
    if (mass(cell) > 0.0)
      out += mass(cell) * fm.transition_row(cell, rule[size_t(cell)], mu_index);
  return out;
}

double stage_cost(const FiniteModel& fm, int mu_index,
                  const DecisionRule& rule) {
  const Eigen::VectorXd mass = fm.measures[size_t(mu_index)].masses();
  const EmpiricalMeasure& mu = fm.dequantized[size_t(mu_index)];
  double c = 0.0;
  for (int cell = 0; cell < fm.cells(); ++cell)
    if (mass(cell) > 0.0)
      c += mass(cell) * fm.model.running_cost(fm.grid.center(cell), mu,
                                              fm.actions[size_t(rule[size_t(cell)])]);
  return fm.h * c;
}

LiftResult lift_step(const FiniteModel& fm, int mu_index,
                     const DecisionRule& rule) {
  LiftResult r;
  r.next_index = project_to_quantized(fm, propagate(fm, mu_index, rule));
  r.cost = stage_cost(fm, mu_index, rule);
  return r;
}

double terminal_value(const FiniteModel& fm, int mu_index) {
  const Eigen::VectorXd mass = fm.measures[size_t(mu_index)].masses();
  const EmpiricalMeasure& mu = fm.dequantized[size_t(mu_index)];
  double v = 0.0;
  for (int cell = 0; cell < fm.cells(); ++cell)
    if (mass(cell) > 0.0)
      v += mass(cell) * fm.model.terminal_cost(fm.grid.center(cell), mu);
  return v;
}

nlohmann::json ValueTable::to_json() const {
  nlohmann::json st = nlohmann::json::array();
  for (const auto& v : stages) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    st.push_back(a);
  }
  return nlohmann::json{{"stages", st}, {"residuals", residuals}};
}

namespace {

// Stage-independent lifted dynamics: for every (measure, rule) pair the
// successor index and stage cost.  Computed once, reused by every DP stage
// and value-iteration sweep.
struct LiftedTables {
  std::int64_t rules = 0;
  Eigen::MatrixXd cost;   // M x R
  Eigen::MatrixXi next;   // M x R
};

LiftedTables build_tables(const FiniteModel& fm, std::int64_t rule_cap,
                          int workers) {
  if (!fm.built) throw ConfigError("solver: transition cache not built");
  LiftedTables t;
  t.rules = decision_rule_count(fm);
  if (t.rules > rule_cap)
    throw SizeError("solver: " + std::to_string(t.rules) +
                    " decision rules exceed cap " + std::to_string(rule_cap));
  const int M = fm.measure_count();
  const int R = int(t.rules);
  if (std::int64_t(M) * R > 40000000)
    throw SizeError("solver: lifted table too large (" +
                    std::to_string(std::int64_t(M) * R) + " entries)");
  t.cost.resize(M, R);
  t.next.resize(M, R);
  parallel_for(M, workers, [&](int mu) {
    for (int r = 0; r < R; ++r) {
      const DecisionRule rule = decision_rule_at(fm, r);
      const LiftResult lr = lift_step(fm, mu, rule);
      t.cost(mu, r) = lr.cost;
      t.next(mu, r) = lr.next_index;
    }
  });
  return t;
}

Policy extract_policy(const FiniteModel& fm,
                      const std::vector<Eigen::VectorXi>& argmin_rules,
                      bool stationary) {
  const int m = fm.cells(), M = fm.measure_count();
  const int stages = int(argmin_rules.size());
  std::vector<Eigen::VectorXd> table(size_t(stages) * size_t(m) * size_t(M));
  for (int k = 0; k < stages; ++k)
    for (int mu = 0; mu < M; ++mu) {
      const DecisionRule rule = decision_rule_at(fm, argmin_rules[size_t(k)](mu));
      for (int cell = 0; cell < m; ++cell)
        table[(size_t(k) * size_t(m) + size_t(cell)) * size_t(M) +
              size_t(mu)] = fm.actions[size_t(rule[size_t(cell)])];
    }
  if (stationary)
    return Policy::stationary_markov(fm.grid, fm.denominator, fm.measures,
                                     std::move(table));
  return Policy::markov(fm.grid, fm.denominator, fm.measures, stages,
                        std::move(table));
}

}  // namespace

FiniteSolution solve_finite_horizon(const FiniteModel& fm, int stages,
                                    std::int64_t rule_cap, int workers) {
  if (stages < 0) throw ConfigError("solve_finite_horizon: stages >= 0");
  const int M = fm.measure_count();
  Eigen::VectorXd terminal(M);
  for (int mu = 0; mu < M; ++mu) terminal(mu) = terminal_value(fm, mu);

  FiniteSolution sol;
  if (stages == 0) {
    sol.values.stages = {terminal};
    sol.policy = Policy::constant(fm.actions.front());
    return sol;
  }

  const LiftedTables t = build_tables(fm, rule_cap, workers);
  const int R = int(t.rules);
  std::vector<Eigen::VectorXd> values(size_t(stages) + 1);
  values[size_t(stages)] = terminal;
  std::vector<Eigen::VectorXi> argmin(static_cast<size_t>(stages));
  for (int k = stages - 1; k >= 0; --k) {
    values[size_t(k)].resize(M);
    argmin[size_t(k)].resize(M);
    auto& vk = values[size_t(k)];
    const auto& vnext = values[size_t(k) + 1];
    auto& ak = argmin[size_t(k)];
    parallel_for(M, workers, [&](int mu) {
      double best = std::numeric_limits<double>::infinity();
      int best_r = 0;
      for (int r = 0; r < R; ++r) {
        const double v = t.cost(mu, r) + vnext(t.next(mu, r));
        if (v < best) {
          best = v;
          best_r = r;
        }
      }
      vk(mu) = best;
      ak(mu) = best_r;
    });
  }
  sol.values.stages = std::move(values);
  sol.policy = extract_policy(fm, argmin, false);
  return sol;
}

namespace {

// Compensated (double-double) scalar for the value-iteration inner loop.
// Plain doubles lose the beta-contraction of the residual sequence once
// residuals shrink toward eps*|v|; carrying the rounding error restores it.
struct DD {
  double hi = 0.0, lo = 0.0;
};

inline DD dd_two_sum(double a, double b) {
  const double s = a + b;
  const double bb = s - a;
  return {s, (a - (s - bb)) + (b - bb)};
}

inline DD dd_add(const DD& a, const DD& b) {
  DD s = dd_two_sum(a.hi, b.hi);
  s.lo += a.lo + b.lo;
  const DD r = dd_two_sum(s.hi, s.lo);
  return r;
}

inline DD dd_mul_d(const DD& a, double b) {
  const double p = a.hi * b;
  const double e = std::fma(a.hi, b, -p);
  DD r = dd_two_sum(p, e + a.lo * b);
  return r;
}

inline bool dd_less(const DD& a, const DD& b) {
  return a.hi < b.hi || (a.hi == b.hi && a.lo < b.lo);
}

inline double dd_sub_abs(const DD& a, const DD& b) {
  return std::abs((a.hi - b.hi) + (a.lo - b.lo));
}

}  // namespace

FiniteSolution solve_discounted(const FiniteModel& fm, double alpha,
                                double tol, std::int64_t rule_cap,
                                int workers) {
  if (!(alpha > 0.0)) throw ConfigError("solve_discounted: alpha > 0");
  if (!(tol > 0.0)) throw ConfigError("solve_discounted: tol > 0");
  const double beta = std::exp(-alpha * fm.h);
  const LiftedTables t = build_tables(fm, rule_cap, workers);
  const int M = fm.measure_count();
  const int R = int(t.rules);
  const double stop = tol * (1.0 - beta) / (2.0 * beta);

  std::vector<DD> v(static_cast<size_t>(M));
  std::vector<DD> w(static_cast<size_t>(M));
  std::vector<double> resbuf(static_cast<size_t>(M));
  Eigen::VectorXi argmin(M);
  std::vector<double> residuals;
  for (int iter = 0; iter < 1000000; ++iter) {
    parallel_for(M, workers, [&](int mu) {
      DD best{std::numeric_limits<double>::infinity(), 0.0};
      int best_r = 0;
      for (int r = 0; r < R; ++r) {
        const DD val = dd_add({t.cost(mu, r), 0.0},
                              dd_mul_d(v[size_t(t.next(mu, r))], beta));
        if (dd_less(val, best)) {
          best = val;
          best_r = r;
        }
      }
      w[size_t(mu)] = best;
      argmin(mu) = best_r;
      resbuf[size_t(mu)] = dd_sub_abs(best, v[size_t(mu)]);
    });
    const double res = *std::max_element(resbuf.begin(), resbuf.end());
    residuals.push_back(res);
    v.swap(w);
    if (res <= stop) break;
  }
  FiniteSolution sol;
  Eigen::VectorXd vd(M);
  for (int mu = 0; mu < M; ++mu)
    vd(mu) = v[size_t(mu)].hi + v[size_t(mu)].lo;
  sol.values.stages = {vd};
  sol.values.residuals = std::move(residuals);
  sol.policy = extract_policy(fm, {argmin}, true);
  return sol;
}

}  // namespace mckv
