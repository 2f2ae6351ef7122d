#include "mckv/policy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mckv/errors.hpp"
#include "mckv/parallel.hpp"

namespace mckv {

Policy Policy::open_loop(std::vector<Eigen::VectorXd> per_step) {
  if (per_step.empty()) throw ConfigError("open-loop policy: empty table");
  Policy p;
  p.kind_ = Kind::OpenLoop;
  p.stages_ = int(per_step.size());
  p.table_ = std::move(per_step);
  return p;
}

Policy Policy::constant(const Eigen::VectorXd& u) {
  Policy p = open_loop({u});
  p.repeat_last_ = true;
  return p;
}

namespace {

std::vector<EmpiricalMeasure> dequantize_all(
    const StateGrid& grid, const std::vector<QuantizedMeasure>& measures) {
  std::vector<EmpiricalMeasure> out;
  out.reserve(measures.size());
  for (const auto& q : measures) out.push_back(dequantize(q, grid));
  return out;
}

}  // namespace

Policy Policy::markov(StateGrid grid, int denominator,
                      std::vector<QuantizedMeasure> measures, int stages,
                      std::vector<Eigen::VectorXd> table) {
  grid.validate();
  if (stages < 1) throw ConfigError("markov policy: stages >= 1 required");
  if (table.size() !=
      size_t(stages) * size_t(grid.cell_count()) * measures.size())
    throw ConfigError("markov policy: table size mismatch");
  Policy p;
  p.kind_ = Kind::Markov;
  p.stages_ = stages;
  p.grid_ = std::move(grid);
  p.denominator_ = denominator;
  p.measures_ = std::move(measures);
  p.dequantized_ = dequantize_all(p.grid_, p.measures_);
  p.table_ = std::move(table);
  return p;
}

Policy Policy::stationary_markov(StateGrid grid, int denominator,
                                 std::vector<QuantizedMeasure> measures,
                                 std::vector<Eigen::VectorXd> table) {
  Policy p = markov(std::move(grid), denominator, std::move(measures), 1,
                    std::move(table));
  p.kind_ = Kind::StationaryMarkov;
  return p;
}

int Policy::measure_index(const EmpiricalMeasure& mu) const {
  if (kind_ == Kind::OpenLoop) return -1;
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  if (grid_.dim() == 1) {
    // Sort the query once; candidates are cell-center measures, already
    // ascending, so each distance is one linear quantile coupling.
    std::vector<Eigen::Index> order(size_t(mu.size()));
    std::iota(order.begin(), order.end(), Eigen::Index(0));
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return mu.atoms(a, 0) < mu.atoms(b, 0);
    });
    Eigen::VectorXd x(mu.size()), w(mu.size());
    for (Eigen::Index k = 0; k < mu.size(); ++k) {
      x(k) = mu.atoms(order[size_t(k)], 0);
      w(k) = mu.weights(order[size_t(k)]);
    }
    for (size_t i = 0; i < dequantized_.size(); ++i) {
      const double d = wasserstein1_sorted_1d(x, w, dequantized_[i].atoms.col(0),
                                              dequantized_[i].weights);
      if (d < best_d - 1e-15) {
        best_d = d;
        best = int(i);
      }
    }
    return best;
  }
  for (size_t i = 0; i < dequantized_.size(); ++i) {
    const double d = wasserstein1(mu, dequantized_[i]);
    if (d < best_d - 1e-15) {
      best_d = d;
      best = int(i);
    }
  }
  return best;
}

Eigen::VectorXd Policy::action_at(int k, const Eigen::VectorXd& x,
                                  int mu_index) const {
  switch (kind_) {
    case Kind::OpenLoop: {
      int idx = k;
      if (repeat_last_) idx = std::min(idx, stages_ - 1);
      if (idx < 0 || idx >= stages_)
        throw ConfigError("open-loop policy: step " + std::to_string(k) +
                          " outside table");
      return table_[size_t(idx)];
    }
    case Kind::Markov:
    case Kind::StationaryMarkov: {
      const int stage = kind_ == Kind::StationaryMarkov
                            ? 0
                            : std::clamp(k, 0, stages_ - 1);
      const int cell = grid_.cell_of(x);
      if (mu_index < 0 || mu_index >= int(measures_.size()))
        throw ConfigError("markov policy: bad measure index");
      const size_t m = measures_.size();
      return table_[(size_t(stage) * size_t(grid_.cell_count()) +
                     size_t(cell)) *
                        m +
                    size_t(mu_index)];
    }
  }
  throw ConfigError("policy: unreachable kind");
}

Eigen::VectorXd Policy::action(int k, const Eigen::VectorXd& x,
                               const EmpiricalMeasure& mu) const {
  return action_at(k, x, measure_index(mu));
}

namespace {

nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Eigen::VectorXd vec_from_json(const nlohmann::json& a) {
  Eigen::VectorXd v(a.size());
  for (size_t i = 0; i < a.size(); ++i) v(Eigen::Index(i)) = a[i].get<double>();
  return v;
}

}  // namespace

nlohmann::json Policy::to_json() const {
  nlohmann::json j;
  switch (kind_) {
    case Kind::OpenLoop:
      j["kind"] = "open_loop";
      j["repeat_last"] = repeat_last_;
      break;
    case Kind::Markov:
      j["kind"] = "markov";
      break;
    case Kind::StationaryMarkov:
      j["kind"] = "stationary_markov";
      break;
  }
  j["stages"] = stages_;
  nlohmann::json table = nlohmann::json::array();
  for (const auto& u : table_) table.push_back(vec_to_json(u));
  j["table"] = table;
  if (kind_ != Kind::OpenLoop) {
    nlohmann::json edges = nlohmann::json::array();
    for (const auto& e : grid_.edges) edges.push_back(vec_to_json(e));
    j["grid"] = {{"edges", edges}};
    j["denominator"] = denominator_;
    nlohmann::json ms = nlohmann::json::array();
    for (const auto& q : measures_) {
      nlohmann::json counts = nlohmann::json::array();
      for (int c = 0; c < q.counts.size(); ++c) counts.push_back(q.counts(c));
      ms.push_back(counts);
    }
    j["measures"] = ms;
  }
  return j;
}

Policy Policy::from_json(const nlohmann::json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  std::vector<Eigen::VectorXd> table;
  for (const auto& u : j.at("table")) table.push_back(vec_from_json(u));
  if (kind == "open_loop") {
    Policy p = open_loop(std::move(table));
    p.repeat_last_ = j.value("repeat_last", false);
    return p;
  }
  StateGrid grid;
  for (const auto& e : j.at("grid").at("edges"))
    grid.edges.push_back(vec_from_json(e));
  const int n = j.at("denominator").get<int>();
  std::vector<QuantizedMeasure> measures;
  for (const auto& counts : j.at("measures")) {
    QuantizedMeasure q;
    q.counts.resize(Eigen::Index(counts.size()));
    for (size_t c = 0; c < counts.size(); ++c)
      q.counts(Eigen::Index(c)) = counts[c].get<int>();
    q.denominator = n;
    measures.push_back(std::move(q));
  }
  if (kind == "markov")
    return markov(std::move(grid), n, std::move(measures),
                  j.at("stages").get<int>(), std::move(table));
  if (kind == "stationary_markov")
    return stationary_markov(std::move(grid), n, std::move(measures),
                             std::move(table));
  throw ConfigError("policy: unknown kind '" + kind + "'");
}

nlohmann::json CostEstimate::to_json() const {
  return nlohmann::json{{"mean", mean},
                        {"std_error", std_error},
                        {"replications", replications},
                        {"criterion", criterion},
                        {"h", h},
                        {"T", T},
                        {"alpha", alpha},
                        {"particles", particles},
                        {"tail_bound", tail_bound},
                        {"truncation_steps", truncation_steps}};
}

namespace {

CostEstimate summarize(const Eigen::VectorXd& values) {
  CostEstimate est;
  est.replications = int(values.size());
  est.mean = values.mean();
  if (values.size() >= 2) {
    const double var =
        (values.array() - est.mean).square().sum() / double(values.size() - 1);
    est.std_error = std::sqrt(var / double(values.size()));
  }
  return est;
}

}  // namespace

CostEstimate evaluate_finite_horizon(const ModelSpec& model,
                                     const TimeGrid& grid,
                                     const Policy& policy, int particles,
                                     int replications, std::uint64_t seed,
                                     int workers) {
  if (replications < 1)
    throw ConfigError("evaluate_finite_horizon: replications >= 1 required");
  Eigen::VectorXd values(replications);
  parallel_for(replications, workers, [&](int r) {
    SimOptions opts;
    opts.replication = std::uint64_t(r);
    const TrajectoryBundle bundle =
        simulate(model, grid, policy, particles, seed, opts);
    values(r) = bundle.particle_totals().mean();
  });
  CostEstimate est = summarize(values);
  est.criterion = "finite_horizon";
  est.h = grid.h;
  est.T = grid.T;
  est.particles = particles;
  return est;
}

CostEstimate evaluate_discounted(const ModelSpec& model, double h,
                                 double alpha, const Policy& policy,
                                 int particles, int replications,
                                 std::uint64_t seed, double truncation_tol,
                                 int max_steps, int workers) {
  if (!(alpha > 0.0)) throw ConfigError("evaluate_discounted: alpha > 0");
  if (replications < 1)
    throw ConfigError("evaluate_discounted: replications >= 1 required");
  const double beta = std::exp(-alpha * h);
  const int K = int(std::ceil(std::log(truncation_tol) / std::log(beta)));
  if (K > max_steps)
    throw ConfigError(
        "evaluate_discounted: truncation tolerance unreachable within step "
        "cap");
  const TimeGrid grid{h, double(K) * h};
  Eigen::VectorXd discount(K);
  for (int k = 0; k < K; ++k) discount(k) = std::pow(beta, k);

  Eigen::VectorXd values(replications);
  parallel_for(replications, workers, [&](int r) {
    SimOptions opts;
    opts.replication = std::uint64_t(r);
    const TrajectoryBundle bundle =
        simulate(model, grid, policy, particles, seed, opts);
    double v = 0.0;
    const int n = std::min(K, int(bundle.step_costs.size()));
    for (int k = 0; k < n; ++k)
      v += discount(k) * bundle.step_costs[size_t(k)].mean();
    values(r) = v;
  });
  CostEstimate est = summarize(values);
  est.criterion = "discounted";
  est.h = h;
  est.alpha = alpha;
  est.particles = particles;
  est.truncation_steps = K;
  est.tail_bound = std::pow(beta, K) * model.C4 / (1.0 - beta);
  return est;
}

int PiecewiseControl::step_of(double t) const {
  if (t < 0.0 || t > grid.T + 1e-12)
    throw ConfigError("piecewise control: time outside [0, T]");
  int k = int(std::floor(t / grid.h + 1e-12));
  return std::min(k, std::max(grid.steps() - 1, 0));
}

Eigen::VectorXd PiecewiseControl::action(double t, const Eigen::VectorXd& x,
                                         const EmpiricalMeasure& mu) const {
  return policy->action(step_of(t), x, mu);
}

PiecewiseControl deploy_interpolated(const Policy& policy,
                                     const TimeGrid& grid) {
  grid.validate();
  return PiecewiseControl{&policy, grid};
}

}  // namespace mckv
