#pragma once

#include <cmath>
#include <cstdint>

namespace mckv {

// Counter-based random numbers keyed by (seed, replication, particle, step,
// coordinate).  Every draw is a pure function of its key, so simulations are
// reproducible independently of evaluation order and worker count, and fine
// and coarse Brownian increments can share one underlying stream.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fold_key(std::uint64_t h, std::uint64_t v) {
  return splitmix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

// Uniform on the open interval (0, 1).
inline double counter_uniform(std::uint64_t seed, std::uint64_t replication,
                              std::uint64_t particle, std::uint64_t step,
                              std::uint64_t coord) {
  std::uint64_t h = splitmix64(seed);
  h = fold_key(h, replication);
  h = fold_key(h, particle);
  h = fold_key(h, step);
  h = fold_key(h, coord);
  return (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
}

// Inverse of the standard normal CDF (Acklam's rational approximation with
// one Halley refinement step; absolute error well below 1e-15 after
// refinement).
inline double inverse_normal_cdf(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425;
  double x;
  if (p < plow) {
    double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - plow) {
    double q = p - 0.5;
    double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) *
        q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    double q = std::sqrt(-2.0 * std::log(1.0 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement against the erfc-based CDF.
  double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
  x = x - u / (1.0 + x * u / 2.0);
  return x;
}

inline double counter_normal(std::uint64_t seed, std::uint64_t replication,
                             std::uint64_t particle, std::uint64_t step,
                             std::uint64_t coord) {
  return inverse_normal_cdf(
      counter_uniform(seed, replication, particle, step, coord));
}

// Brownian increments over a grid of base step h_base.  A coarse step spans
// `substeps` base steps and its increment is the exact sum of the base-step
// increments, in ascending substep order, so a coarse simulation and a fine
// reference simulation driven by the same source share the Brownian path
// bit-for-bit.
struct BrownianSource {
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;
  double h_base = 0.0;
  int substeps = 1;  // base steps per coarse step

  double fine_increment(std::uint64_t particle, std::uint64_t fine_step,
                        std::uint64_t coord) const {
    return std::sqrt(h_base) *
           counter_normal(seed, replication, particle, fine_step, coord);
  }

  double coarse_increment(std::uint64_t particle, std::uint64_t coarse_step,
                          std::uint64_t coord) const {
    double s = 0.0;
    const std::uint64_t base = coarse_step * static_cast<std::uint64_t>(substeps);
    for (int k = 0; k < substeps; ++k) {
      s += fine_increment(particle, base + static_cast<std::uint64_t>(k), coord);
    }
    return s;
  }
};

}  // namespace mckv
