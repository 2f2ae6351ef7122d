#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <vector>

namespace mckv {

// Probability measure with finite support: weighted atoms on R^d.
struct EmpiricalMeasure {
  Eigen::MatrixXd atoms;    // support size x d
  Eigen::VectorXd weights;  // nonnegative, sums to 1

  static EmpiricalMeasure dirac(const Eigen::VectorXd& x);
  static EmpiricalMeasure dirac1d(double x);
  // Uniform weights 1/N over the rows of `points`.
  static EmpiricalMeasure uniform(const Eigen::MatrixXd& points);

  Eigen::Index dim() const { return atoms.cols(); }
  Eigen::Index size() const { return atoms.rows(); }

  // Throws NumericError on non-finite atoms, negative weights, or weight sum
  // off 1 by more than 1e-12.
  void validate() const;

  // Componentwise integral of tanh against the measure.  The only statistic
  // through which built-in model families see the mean field; 1-Lipschitz in
  // W1 per coordinate.
  Eigen::VectorXd mean_tanh() const;

  void to_csv(std::ostream& os) const;
};

// Axis-aligned partition of the truncation box [-L, L]^d into rectangular
// cells.  Mass outside the box is absorbed by the nearest boundary cell.
struct StateGrid {
  std::vector<Eigen::VectorXd> edges;  // per coordinate, strictly increasing

  static StateGrid uniform(int dim, double box_halfwidth, int cells_per_coord);

  int dim() const { return static_cast<int>(edges.size()); }
  int cells(int coord) const {
    return static_cast<int>(edges[coord].size()) - 1;
  }
  int cell_count() const;
  // Flattened cell index of x, clamping coordinates into the box first.
  int cell_of(const Eigen::VectorXd& x) const;
  Eigen::VectorXd center(int flat_cell) const;
  std::vector<int> unflatten(int flat_cell) const;
  double max_cell_diameter() const;
  double span() const;  // diameter of the box
  void validate() const;
};

// Counts over grid cells summing to the denominator n; identifies the
// probability vector counts/n.
struct QuantizedMeasure {
  Eigen::VectorXi counts;
  int denominator = 0;

  void validate() const;
  Eigen::VectorXd masses() const;  // counts / n
};

// Exact W1.  d = 1 uses the quantile coupling; d >= 2 solves the
// transportation problem on the joint support by successive shortest paths.
// Supports above 512 x 512 atoms raise SizeError.
double wasserstein1(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu);

// Quantile-coupling W1 for 1-d data already sorted ascending.
double wasserstein1_sorted_1d(const Eigen::VectorXd& x,
                              const Eigen::VectorXd& wx,
                              const Eigen::VectorXd& y,
                              const Eigen::VectorXd& wy);

// W1 between two mass vectors supported on the cell centers of a 1-d grid
// (CDF difference formula; O(m)).
double wasserstein1_grid_1d(const StateGrid& grid, const Eigen::VectorXd& p,
                            const Eigen::VectorXd& q);

// Exact transportation cost between weighted supports (any dimension).
double transport_w1(const Eigen::MatrixXd& x, const Eigen::VectorXd& wx,
                    const Eigen::MatrixXd& y, const Eigen::VectorXd& wy);

// Per-cell mass of mu on the grid (atoms clamped into the box).
Eigen::VectorXd cell_masses(const EmpiricalMeasure& mu, const StateGrid& grid);

// Round a nonnegative mass vector (summing to 1) to an integer composition of
// n by largest remainder; ties broken by lowest cell index.
Eigen::VectorXi largest_remainder(const Eigen::VectorXd& masses, int n);

QuantizedMeasure quantize(const EmpiricalMeasure& mu, const StateGrid& grid,
                          int n);
EmpiricalMeasure dequantize(const QuantizedMeasure& q, const StateGrid& grid);

// All compositions of n into cell_count parts, first cell descending (so
// m=2, n=2 enumerates (2,0),(1,1),(0,2)).  Raises SizeError when
// C(n+m-1, m-1) exceeds the cap.
std::vector<QuantizedMeasure> enumerate_quantized(const StateGrid& grid, int n,
                                                  std::int64_t cap = 200000);

std::int64_t composition_count(int n, int m);

}  // namespace mckv
