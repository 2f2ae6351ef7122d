#include "mckv/model.hpp"

#include <cmath>
#include <random>

#include "mckv/errors.hpp"

namespace mckv {

ActionSet ActionSet::interval(double lo, double hi, int quantization_count) {
  ActionSet a;
  a.kind = Kind::IntervalBox;
  a.lower = Eigen::VectorXd::Constant(1, lo);
  a.upper = Eigen::VectorXd::Constant(1, hi);
  a.quantization_count = quantization_count;
  a.validate();
  return a;
}

ActionSet ActionSet::finite(std::vector<Eigen::VectorXd> pts) {
  ActionSet a;
  a.kind = Kind::Finite;
  a.points = std::move(pts);
  a.validate();
  return a;
}

int ActionSet::dim() const {
  return kind == Kind::IntervalBox ? int(lower.size())
                                   : int(points.front().size());
}

bool ActionSet::contains(const Eigen::VectorXd& u, double tol) const {
  if (kind == Kind::IntervalBox) {
    if (u.size() != lower.size()) return false;
    return (u.array() >= lower.array() - tol).all() &&
           (u.array() <= upper.array() + tol).all();
  }
  for (const auto& p : points)
    if ((u - p).norm() <= tol) return true;
  return false;
}

std::vector<Eigen::VectorXd> ActionSet::finite_actions() const {
  if (kind == Kind::Finite) return points;
  // Per-coordinate grid including both interval endpoints.
  const int d = dim();
  const int q = std::max(quantization_count, 2);
  std::vector<Eigen::VectorXd> coords(d);
  for (int c = 0; c < d; ++c) {
    if (upper(c) == lower(c))
      coords[c] = Eigen::VectorXd::Constant(1, lower(c));
    else
      coords[c] = Eigen::VectorXd::LinSpaced(q, lower(c), upper(c));
  }
  std::vector<Eigen::VectorXd> out;
  std::vector<int> idx(d, 0);
  while (true) {
    Eigen::VectorXd u(d);
    for (int c = 0; c < d; ++c) u(c) = coords[c](idx[c]);
    out.push_back(u);
    int c = d - 1;
    while (c >= 0 && ++idx[c] == coords[c].size()) idx[c--] = 0;
    if (c < 0) break;
  }
  return out;
}

void ActionSet::validate() const {
  if (kind == Kind::IntervalBox) {
    if (lower.size() == 0 || lower.size() != upper.size())
      throw ConfigError("action set: bad interval box");
    if ((upper.array() < lower.array()).any())
      throw ConfigError("action set: upper < lower");
  } else {
    if (points.empty()) throw ConfigError("action set: empty point list");
  }
  if (quantization_count < 1)
    throw ConfigError("action set: quantization_count < 1");
}

double ModelSpec::param(const ParamMap& map, const std::string& key) const {
  auto it = map.find(key);
  if (it == map.end())
    throw ConfigError("model: missing parameter '" + key + "'");
  return it->second;
}

namespace {

enum class Family { Satmr, Constant };

Family family_of(const std::string& id) {
  if (id == "satmr") return Family::Satmr;
  if (id == "constant") return Family::Constant;
  throw ConfigError("model: unknown registry key '" + id + "'");
}

double saturation(double x) { return x * x / (1.0 + x * x); }

}  // namespace

Eigen::VectorXd ModelSpec::drift(const Eigen::VectorXd& x,
                                 const MeasureStat& stat,
                                 const Eigen::VectorXd& u) const {
  switch (family_of(drift_id)) {
    case Family::Satmr: {
      const double t1 = param(drift_params, "theta1");
      const double t2 = param(drift_params, "theta2");
      Eigen::VectorXd b(1);
      b(0) = t1 * std::tanh(x(0)) + t2 * stat.tanh_mean(0) + u(0);
      return b;
    }
    case Family::Constant:
      return Eigen::VectorXd::Constant(dim, param(drift_params, "b0"));
  }
  throw ConfigError("model: unreachable drift family");
}

Eigen::MatrixXd ModelSpec::diffusion(const Eigen::VectorXd& x,
                                     const MeasureStat&) const {
  switch (family_of(diffusion_id)) {
    case Family::Satmr: {
      const double s0 = param(diffusion_params, "sigma0");
      const double s1 = param(diffusion_params, "sigma1");
      Eigen::MatrixXd s(1, 1);
      s(0, 0) = s0 + s1 / (1.0 + x(0) * x(0));
      return s;
    }
    case Family::Constant:
      return param(diffusion_params, "s0") *
             Eigen::MatrixXd::Identity(dim, dim);
  }
  throw ConfigError("model: unreachable diffusion family");
}

double ModelSpec::running_cost(const Eigen::VectorXd& x,
                               const MeasureStat& stat,
                               const Eigen::VectorXd& u) const {
  switch (family_of(running_cost_id)) {
    case Family::Satmr: {
      const double lam = param(running_cost_params, "lambda");
      const double gam = param(running_cost_params, "gamma");
      const double m = stat.tanh_mean(0);
      return saturation(x(0)) + lam * u(0) * u(0) + gam * m * m;
    }
    case Family::Constant:
      return param(running_cost_params, "c0");
  }
  throw ConfigError("model: unreachable running-cost family");
}

double ModelSpec::terminal_cost(const Eigen::VectorXd& x,
                                const MeasureStat&) const {
  switch (family_of(terminal_cost_id)) {
    case Family::Satmr:
      return saturation(x(0));
    case Family::Constant:
      return param(terminal_cost_params, "ct0");
  }
  throw ConfigError("model: unreachable terminal-cost family");
}

Eigen::VectorXd ModelSpec::drift(const Eigen::VectorXd& x,
                                 const EmpiricalMeasure& mu,
                                 const Eigen::VectorXd& u) const {
  return drift(x, MeasureStat::of(mu), u);
}

Eigen::MatrixXd ModelSpec::diffusion(const Eigen::VectorXd& x,
                                     const EmpiricalMeasure& mu) const {
  return diffusion(x, MeasureStat::of(mu));
}

double ModelSpec::running_cost(const Eigen::VectorXd& x,
                               const EmpiricalMeasure& mu,
                               const Eigen::VectorXd& u) const {
  return running_cost(x, MeasureStat::of(mu), u);
}

double ModelSpec::terminal_cost(const Eigen::VectorXd& x,
                                const EmpiricalMeasure& mu) const {
  return terminal_cost(x, MeasureStat::of(mu));
}

void ModelSpec::validate() const {
  family_of(drift_id);
  family_of(diffusion_id);
  family_of(running_cost_id);
  family_of(terminal_cost_id);
  action_set.validate();
  if (dim < 1) throw ConfigError("model: dim >= 1 required");
  if (C1 < 0 || C2 < 0 || C3 < 0 || C4 < 0)
    throw ConfigError("model: constants must be nonnegative");
  if (initial_state.size() != dim || !initial_state.allFinite())
    throw ConfigError("model: bad initial state");
}

ModelSpec make_model(const std::string& family, const ParamMap& overrides) {
  auto get = [&](const std::string& key, double fallback) {
    auto it = overrides.find(key);
    return it == overrides.end() ? fallback : it->second;
  };
  ModelSpec m;
  if (family == "satmr") {
    const double theta1 = get("theta1", -0.5);
    const double theta2 = get("theta2", 0.5);
    const double sigma0 = get("sigma0", 0.4);
    const double sigma1 = get("sigma1", 0.2);
    const double lambda = get("lambda", 0.5);
    const double gamma = get("gamma", 0.5);
    const double u_max = get("u_max", 0.5);
    m.dim = 1;
    m.action_set =
        ActionSet::interval(-u_max, u_max, int(get("quantization", 3)));
    m.drift_id = m.diffusion_id = m.running_cost_id = m.terminal_cost_id =
        "satmr";
    m.drift_params = {{"theta1", theta1}, {"theta2", theta2}};
    m.diffusion_params = {{"sigma0", sigma0}, {"sigma1", sigma1}};
    m.running_cost_params = {{"lambda", lambda}, {"gamma", gamma}};
    // Analytic constants for the family: tanh is 1-Lipschitz and the slopes
    // of 1/(1+x^2) and x^2/(1+x^2) are bounded by 3*sqrt(3)/8.
    const double slope = 3.0 * std::sqrt(3.0) / 8.0;
    m.C1 = std::abs(theta1) + std::abs(theta2) + sigma1 * slope;
    m.C2 = std::abs(theta1) + std::abs(theta2) + u_max + sigma0 + sigma1;
    m.C3 = 2.0 * slope + 2.0 * gamma;
    m.C4 = 2.0 + lambda * u_max * u_max + gamma;
    m.initial_state = Eigen::VectorXd::Constant(1, get("x0", 0.5));
  } else if (family == "constant") {
    const int d = int(get("dim", 1));
    const double b0 = get("b0", 0.0);
    const double s0 = get("s0", 0.0);
    const double c0 = get("c0", 0.0);
    const double ct0 = get("ct0", 0.0);
    const double u_max = get("u_max", 0.0);
    m.dim = d;
    m.action_set =
        ActionSet::interval(-u_max, u_max, int(get("quantization", 2)));
    m.drift_id = m.diffusion_id = m.running_cost_id = m.terminal_cost_id =
        "constant";
    m.drift_params = {{"b0", b0}};
    m.diffusion_params = {{"s0", s0}};
    m.running_cost_params = {{"c0", c0}};
    m.terminal_cost_params = {{"ct0", ct0}};
    m.C1 = 0.0;
    m.C2 = (std::abs(b0) + std::abs(s0)) * std::sqrt(double(d));
    m.C3 = 0.0;
    m.C4 = std::abs(c0) + std::abs(ct0);
    m.initial_state = Eigen::VectorXd::Constant(d, get("x0", 0.0));
  } else {
    throw ConfigError("model: unknown registry key '" + family + "'");
  }
  // Constants may be overridden (e.g. to exercise the audit).
  for (const char* k : {"C1", "C2", "C3", "C4"}) {
    auto it = overrides.find(k);
    if (it != overrides.end()) {
      if (std::string(k) == "C1") m.C1 = it->second;
      if (std::string(k) == "C2") m.C2 = it->second;
      if (std::string(k) == "C3") m.C3 = it->second;
      if (std::string(k) == "C4") m.C4 = it->second;
    }
  }
  m.validate();
  return m;
}

std::vector<std::string> registered_families() { return {"satmr", "constant"}; }

std::pair<Eigen::VectorXd, Eigen::MatrixXd> evaluate_dynamics(
    const ModelSpec& model, const Eigen::VectorXd& x,
    const EmpiricalMeasure& mu, const Eigen::VectorXd& u) {
  if (!x.allFinite()) throw NumericError("evaluate_dynamics: non-finite state");
  mu.validate();
  if (!model.action_set.contains(u, 1e-9))
    throw ConfigError("evaluate_dynamics: action outside action set");
  Eigen::VectorXd b = model.drift(x, mu, u);
  Eigen::MatrixXd s = model.diffusion(x, mu);
  if (!b.allFinite() || !s.allFinite())
    throw NumericError("model-definition error: non-finite b or sigma");
  return {b, s};
}

AuditReport validate_model(const ModelSpec& model, int samples,
                           std::uint64_t seed) {
  if (samples < 1) throw ConfigError("validate_model: samples >= 1 required");
  AuditReport rep;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> box(-3.0, 3.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> nsupport(1, 8);
  const int d = model.dim;

  auto random_measure = [&]() {
    const int k = nsupport(rng);
    Eigen::MatrixXd pts(k, d);
    Eigen::VectorXd w(k);
    for (int i = 0; i < k; ++i) {
      for (int c = 0; c < d; ++c) pts(i, c) = box(rng);
      w(i) = -std::log(unit(rng) + 1e-300);
    }
    w /= w.sum();
    EmpiricalMeasure mu;
    mu.atoms = pts;
    mu.weights = w;
    return mu;
  };
  auto random_action = [&]() {
    const ActionSet& a = model.action_set;
    if (a.kind == ActionSet::Kind::Finite)
      return a.points[std::uniform_int_distribution<size_t>(
          0, a.points.size() - 1)(rng)];
    Eigen::VectorXd u(a.dim());
    for (int c = 0; c < a.dim(); ++c)
      u(c) = a.lower(c) + unit(rng) * (a.upper(c) - a.lower(c));
    return u;
  };
  auto randvec = [&]() {
    Eigen::VectorXd x(d);
    for (int c = 0; c < d; ++c) x(c) = box(rng);
    return x;
  };

  for (int s = 0; s < samples; ++s) {
    Eigen::VectorXd x = randvec(), y = randvec();
    EmpiricalMeasure mu = random_measure(), nu = random_measure();
    Eigen::VectorXd u = random_action();

    const Eigen::VectorXd bx = model.drift(x, mu, u);
    const Eigen::VectorXd by = model.drift(y, nu, u);
    const Eigen::MatrixXd sx = model.diffusion(x, mu);
    const Eigen::MatrixXd sy = model.diffusion(y, nu);
    const double cx = model.running_cost(x, mu, u);
    const double cy = model.running_cost(y, nu, u);
    const double tx = model.terminal_cost(x, mu);
    const double ty = model.terminal_cost(y, nu);

    rep.max_b = std::max(rep.max_b, bx.norm());
    rep.max_sigma = std::max(rep.max_sigma, sx.norm());
    rep.max_c = std::max(rep.max_c, std::abs(cx));
    rep.max_cT = std::max(rep.max_cT, std::abs(tx));

    const double denom = (x - y).norm() + wasserstein1(mu, nu);
    if (denom > 1e-9) {
      rep.lip_b = std::max(rep.lip_b, (bx - by).norm() / denom);
      rep.lip_sigma = std::max(rep.lip_sigma, (sx - sy).norm() / denom);
      rep.lip_c = std::max(rep.lip_c, std::abs(cx - cy) / denom);
      rep.lip_cT = std::max(rep.lip_cT, std::abs(tx - ty) / denom);
    }
  }

  // The standing assumptions bound the sums, with 1% audit slack on the
  // Lipschitz side.
  if (rep.lip_b + rep.lip_sigma > model.C1 * 1.01 + 1e-12) {
    rep.violation = true;
    rep.messages.push_back("Lipschitz ratio of (b, sigma) exceeds declared C1");
  }
  if (rep.max_b + rep.max_sigma > model.C2 + 1e-12) {
    rep.violation = true;
    rep.messages.push_back("|b| + |sigma| exceeds declared C2");
  }
  if (rep.lip_c + rep.lip_cT > model.C3 * 1.01 + 1e-12) {
    rep.violation = true;
    rep.messages.push_back("Lipschitz ratio of (c, c_T) exceeds declared C3");
  }
  if (rep.max_c + rep.max_cT > model.C4 + 1e-12) {
    rep.violation = true;
    rep.messages.push_back("|c| + |c_T| exceeds declared C4");
  }
  return rep;
}

}  // namespace mckv
