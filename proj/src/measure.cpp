#include "mckv/measure.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <queue>

#include "mckv/errors.hpp"

namespace mckv {

EmpiricalMeasure EmpiricalMeasure::dirac(const Eigen::VectorXd& x) {
  EmpiricalMeasure mu;
  mu.atoms = x.transpose();
  mu.weights = Eigen::VectorXd::Ones(1);
  return mu;
}

EmpiricalMeasure EmpiricalMeasure::dirac1d(double x) {
  Eigen::VectorXd v(1);
  v << x;
  return dirac(v);
}

EmpiricalMeasure EmpiricalMeasure::uniform(const Eigen::MatrixXd& points) {
  EmpiricalMeasure mu;
  mu.atoms = points;
  mu.weights =
      Eigen::VectorXd::Constant(points.rows(), 1.0 / double(points.rows()));
  return mu;
}

void EmpiricalMeasure::validate() const {
  if (atoms.rows() == 0) throw NumericError("empirical measure: empty support");
  if (atoms.rows() != weights.size())
    throw NumericError("empirical measure: atom/weight size mismatch");
  if (!atoms.allFinite()) throw NumericError("empirical measure: non-finite atom");
  if ((weights.array() < 0.0).any())
    throw NumericError("empirical measure: negative weight");
  if (std::abs(weights.sum() - 1.0) > 1e-12)
    throw NumericError("empirical measure: weights do not sum to 1");
}

Eigen::VectorXd EmpiricalMeasure::mean_tanh() const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(dim());
  for (Eigen::Index i = 0; i < size(); ++i)
    s += weights(i) * atoms.row(i).array().tanh().matrix().transpose();
  return s;
}

void EmpiricalMeasure::to_csv(std::ostream& os) const {
  os << "atom";
  for (Eigen::Index c = 1; c < dim(); ++c) os << ",atom" << c;
  os << ",weight\n";
  char buf[64];
  for (Eigen::Index i = 0; i < size(); ++i) {
    for (Eigen::Index c = 0; c < dim(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", atoms(i, c));
      os << buf << ',';
    }
    std::snprintf(buf, sizeof(buf), "%.17g", weights(i));
    os << buf << '\n';
  }
}

StateGrid StateGrid::uniform(int dim, double box_halfwidth,
                             int cells_per_coord) {
  if (dim < 1 || cells_per_coord < 1 || !(box_halfwidth > 0.0))
    throw ConfigError("state grid: need dim >= 1, cells >= 1, L > 0");
  StateGrid g;
  g.edges.resize(dim);
  for (int c = 0; c < dim; ++c)
    g.edges[c] = Eigen::VectorXd::LinSpaced(cells_per_coord + 1,
                                            -box_halfwidth, box_halfwidth);
  return g;
}

void StateGrid::validate() const {
  if (edges.empty()) throw ConfigError("state grid: no coordinates");
  for (const auto& e : edges) {
    if (e.size() < 2) throw ConfigError("state grid: coordinate without cells");
    for (Eigen::Index i = 0; i + 1 < e.size(); ++i)
      if (!(e(i) < e(i + 1)))
        throw ConfigError("state grid: edges not strictly increasing");
  }
}

int StateGrid::cell_count() const {
  int m = 1;
  for (int c = 0; c < dim(); ++c) m *= cells(c);
  return m;
}

int StateGrid::cell_of(const Eigen::VectorXd& x) const {
  int flat = 0;
  for (int c = 0; c < dim(); ++c) {
    const Eigen::VectorXd& e = edges[c];
    const int mc = cells(c);
    double v = std::min(std::max(x(c), e(0)), e(mc));
    // index of the cell [e(i), e(i+1)) containing v, last cell closed
    int i = int(std::upper_bound(e.data(), e.data() + e.size(), v) - e.data()) - 1;
    i = std::min(std::max(i, 0), mc - 1);
    flat = flat * mc + i;
  }
  return flat;
}

std::vector<int> StateGrid::unflatten(int flat_cell) const {
  std::vector<int> idx(dim());
  for (int c = dim() - 1; c >= 0; --c) {
    idx[c] = flat_cell % cells(c);
    flat_cell /= cells(c);
  }
  return idx;
}

Eigen::VectorXd StateGrid::center(int flat_cell) const {
  std::vector<int> idx = unflatten(flat_cell);
  Eigen::VectorXd x(dim());
  for (int c = 0; c < dim(); ++c)
    x(c) = 0.5 * (edges[c](idx[c]) + edges[c](idx[c] + 1));
  return x;
}

double StateGrid::max_cell_diameter() const {
  double s = 0.0;
  for (int c = 0; c < dim(); ++c) {
    double w = 0.0;
    for (int i = 0; i < cells(c); ++i)
      w = std::max(w, edges[c](i + 1) - edges[c](i));
    s += w * w;
  }
  return std::sqrt(s);
}

double StateGrid::span() const {
  double s = 0.0;
  for (int c = 0; c < dim(); ++c) {
    double w = edges[c](edges[c].size() - 1) - edges[c](0);
    s += w * w;
  }
  return std::sqrt(s);
}

void QuantizedMeasure::validate() const {
  if (denominator < 1) throw NumericError("quantized measure: n < 1");
  if ((counts.array() < 0).any())
    throw NumericError("quantized measure: negative count");
  if (counts.sum() != denominator)
    throw NumericError("quantized measure: counts do not sum to n");
}

Eigen::VectorXd QuantizedMeasure::masses() const {
  return counts.cast<double>() / double(denominator);
}

double wasserstein1_sorted_1d(const Eigen::VectorXd& x,
                              const Eigen::VectorXd& wx,
                              const Eigen::VectorXd& y,
                              const Eigen::VectorXd& wy) {
  // Quantile coupling: walk both weight sequences, splitting atoms so each
  // piece of mass is transported between matched quantiles.
  Eigen::Index i = 0, j = 0;
  double ri = wx(0), rj = wy(0), cost = 0.0;
  while (true) {
    double m = std::min(ri, rj);
    cost += m * std::abs(x(i) - y(j));
    ri -= m;
    rj -= m;
    if (ri <= 1e-15) {
      if (++i >= x.size()) break;
      ri = wx(i);
    }
    if (rj <= 1e-15) {
      if (++j >= y.size()) break;
      rj = wy(j);
    }
  }
  return cost;
}

namespace {

double w1_quantile_1d(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  auto sorted = [](const EmpiricalMeasure& m) {
    std::vector<Eigen::Index> order(m.size());
    std::iota(order.begin(), order.end(), Eigen::Index(0));
    std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
      return m.atoms(a, 0) < m.atoms(b, 0);
    });
    Eigen::VectorXd x(m.size()), w(m.size());
    for (Eigen::Index k = 0; k < m.size(); ++k) {
      x(k) = m.atoms(order[k], 0);
      w(k) = m.weights(order[k]);
    }
    return std::make_pair(x, w);
  };
  auto [x, wx] = sorted(mu);
  auto [y, wy] = sorted(nu);
  return wasserstein1_sorted_1d(x, wx, y, wy);
}

}  // namespace

double transport_w1(const Eigen::MatrixXd& x, const Eigen::VectorXd& wx,
                    const Eigen::MatrixXd& y, const Eigen::VectorXd& wy) {
  const int a = int(x.rows()), b = int(y.rows());
  if (a > 512 || b > 512)
    throw SizeError("transport_w1: support too large for exact solve (cap 512)");
  // Successive shortest augmenting paths with Johnson potentials on the
  // bipartite transport network.  Node layout: 0..a-1 sources, a..a+b-1 sinks.
  Eigen::MatrixXd cost(a, b);
  for (int i = 0; i < a; ++i)
    for (int j = 0; j < b; ++j)
      cost(i, j) = (x.row(i) - y.row(j)).norm();
  Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(a, b);
  Eigen::VectorXd supply = wx, demand = wy;
  Eigen::VectorXd pot = Eigen::VectorXd::Zero(a + b);
  const double inf = std::numeric_limits<double>::infinity();
  double remaining = 1.0;
  const int max_iters = 8 * (a + b) + 64;
  for (int iter = 0; remaining > 1e-13 && iter < max_iters; ++iter) {
    // Dense Dijkstra from the set of sources with remaining supply.
    Eigen::VectorXd dist = Eigen::VectorXd::Constant(a + b, inf);
    Eigen::VectorXi prev = Eigen::VectorXi::Constant(a + b, -1);
    std::vector<char> done(a + b, 0);
    for (int i = 0; i < a; ++i)
      if (supply(i) > 1e-15) dist(i) = 0.0;
    for (int it = 0; it < a + b; ++it) {
      int u = -1;
      double best = inf;
      for (int v = 0; v < a + b; ++v)
        if (!done[v] && dist(v) < best) {
          best = dist(v);
          u = v;
        }
      if (u < 0) break;
      done[u] = 1;
      if (u < a) {
        for (int j = 0; j < b; ++j) {
          if (done[size_t(a + j)]) continue;
          double rc = cost(u, j) + pot(u) - pot(a + j);
          if (dist(u) + rc < dist(a + j) - 1e-18) {
            dist(a + j) = dist(u) + rc;
            prev(a + j) = u;
          }
        }
      } else {
        const int j = u - a;
        for (int i = 0; i < a; ++i) {
          if (!done[size_t(i)] && flow(i, j) > 1e-15) {
            double rc = -cost(i, j) + pot(u) - pot(i);
            if (dist(u) + rc < dist(i) - 1e-18) {
              dist(i) = dist(u) + rc;
              prev(i) = u;
            }
          }
        }
      }
    }
    // Cheapest reachable sink with remaining demand.
    int t = -1;
    double bestd = inf;
    for (int j = 0; j < b; ++j)
      if (demand(j) > 1e-15 && dist(a + j) < bestd) {
        bestd = dist(a + j);
        t = a + j;
      }
    if (t < 0) throw NumericError("transport_w1: no augmenting path");
    // Bottleneck along the path.
    double push = demand(t - a);
    for (int v = t; prev(v) >= 0; v = prev(v)) {
      int u = prev(v);
      if (v >= a) {
        // forward arc u -> v, unlimited
      } else {
        push = std::min(push, flow(v, u - a));
      }
    }
    {
      int v = t;
      while (prev(v) >= 0) v = prev(v);
      push = std::min(push, supply(v));
    }
    for (int v = t; prev(v) >= 0; v = prev(v)) {
      int u = prev(v);
      if (v >= a)
        flow(u, v - a) += push;
      else
        flow(v, u - a) -= push;
    }
    {
      int v = t;
      while (prev(v) >= 0) v = prev(v);
      supply(v) -= push;
    }
    demand(t - a) -= push;
    remaining -= push;
    for (int v = 0; v < a + b; ++v)
      if (dist(v) < inf) pot(v) += dist(v);
  }
  if (remaining > 1e-10)
    throw NumericError("transport_w1: failed to route all mass");
  return (flow.array() * cost.array()).sum();
}

double wasserstein1(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu) {
  mu.validate();
  nu.validate();
  if (mu.dim() != nu.dim())
    throw NumericError("wasserstein1: dimension mismatch");
  if (mu.dim() == 1) return w1_quantile_1d(mu, nu);
  return transport_w1(mu.atoms, mu.weights, nu.atoms, nu.weights);
}

double wasserstein1_grid_1d(const StateGrid& grid, const Eigen::VectorXd& p,
                            const Eigen::VectorXd& q) {
  // Same ordered support: W1 = sum_j |CDF_p - CDF_q| * gap between centers.
  const int m = grid.cell_count();
  double cum = 0.0, cost = 0.0;
  double prev_center = 0.0;
  for (int j = 0; j < m; ++j) {
    double cj = grid.center(j)(0);
    if (j > 0) cost += std::abs(cum) * (cj - prev_center);
    cum += p(j) - q(j);
    prev_center = cj;
  }
  return cost;
}

Eigen::VectorXd cell_masses(const EmpiricalMeasure& mu, const StateGrid& grid) {
  Eigen::VectorXd mass = Eigen::VectorXd::Zero(grid.cell_count());
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    mass(grid.cell_of(mu.atoms.row(i).transpose())) += mu.weights(i);
  return mass;
}

Eigen::VectorXi largest_remainder(const Eigen::VectorXd& masses, int n) {
  const int m = int(masses.size());
  Eigen::VectorXd target = masses * double(n);
  Eigen::VectorXi counts(m);
  for (int j = 0; j < m; ++j) counts(j) = int(std::floor(target(j)));
  int left = n - counts.sum();
  std::vector<int> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    double ra = target(a) - std::floor(target(a));
    double rb = target(b) - std::floor(target(b));
    if (ra != rb) return ra > rb;
    return a < b;
  });
  for (int k = 0; k < left; ++k) counts(order[k % m]) += 1;
  return counts;
}

QuantizedMeasure quantize(const EmpiricalMeasure& mu, const StateGrid& grid,
                          int n) {
  if (n < 1) throw ConfigError("quantize: n >= 1 required");
  QuantizedMeasure q;
  q.counts = largest_remainder(cell_masses(mu, grid), n);
  q.denominator = n;
  return q;
}

EmpiricalMeasure dequantize(const QuantizedMeasure& q, const StateGrid& grid) {
  q.validate();
  std::vector<int> support;
  for (int j = 0; j < q.counts.size(); ++j)
    if (q.counts(j) > 0) support.push_back(j);
  EmpiricalMeasure mu;
  mu.atoms.resize(support.size(), grid.dim());
  mu.weights.resize(support.size());
  for (size_t k = 0; k < support.size(); ++k) {
    mu.atoms.row(k) = grid.center(support[k]).transpose();
    mu.weights(k) = double(q.counts(support[k])) / double(q.denominator);
  }
  return mu;
}

std::int64_t composition_count(int n, int m) {
  // C(n + m - 1, m - 1)
  long double r = 1.0L;
  for (int k = 1; k < m; ++k) r = r * (n + k) / k;
  return std::int64_t(std::llround(double(r)));
}

std::vector<QuantizedMeasure> enumerate_quantized(const StateGrid& grid, int n,
                                                  std::int64_t cap) {
  const int m = grid.cell_count();
  const std::int64_t total = composition_count(n, m);
  if (total > cap)
    throw SizeError("enumerate_quantized: " + std::to_string(total) +
                    " compositions exceed cap " + std::to_string(cap));
  std::vector<QuantizedMeasure> out;
  out.reserve(size_t(total));
  Eigen::VectorXi c = Eigen::VectorXi::Zero(m);
  // Recursive descent, first cell taking n..0 (matches (2,0),(1,1),(0,2)).
  std::function<void(int, int)> rec = [&](int cell, int left) {
    if (cell == m - 1) {
      c(cell) = left;
      out.push_back({c, n});
      return;
    }
    for (int k = left; k >= 0; --k) {
      c(cell) = k;
      rec(cell + 1, left - k);
    }
  };
  rec(0, n);
  return out;
}

}  // namespace mckv
