#include <doctest.h>

#include <cmath>
#include <vector>

#include "mckv/rng.hpp"

using namespace mckv;

TEST_CASE("counter uniforms are deterministic and in (0,1)") {
  for (std::uint64_t k = 0; k < 1000; ++k) {
    const double u = counter_uniform(7, 3, k, k * 31, 0);
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    CHECK(u == counter_uniform(7, 3, k, k * 31, 0));
  }
  CHECK(counter_uniform(1, 0, 0, 0, 0) != counter_uniform(2, 0, 0, 0, 0));
  CHECK(counter_uniform(1, 0, 0, 0, 0) != counter_uniform(1, 1, 0, 0, 0));
  CHECK(counter_uniform(1, 0, 0, 0, 0) != counter_uniform(1, 0, 1, 0, 0));
  CHECK(counter_uniform(1, 0, 0, 0, 0) != counter_uniform(1, 0, 0, 1, 0));
  CHECK(counter_uniform(1, 0, 0, 0, 0) != counter_uniform(1, 0, 0, 0, 1));
}

TEST_CASE("inverse normal CDF inverts erfc-based CDF") {
  for (double p : {1e-12, 1e-6, 0.01, 0.3, 0.5, 0.7, 0.99, 1 - 1e-6}) {
    const double x = inverse_normal_cdf(p);
    const double back = 0.5 * std::erfc(-x / std::sqrt(2.0));
    CHECK(std::abs(back - p) < 1e-13 * std::max(p, 1e-3));
  }
  CHECK(inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(inverse_normal_cdf(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
}

TEST_CASE("normal stream has unit-scale moments") {
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int k = 0; k < n; ++k) {
    const double z = counter_normal(42, 0, 0, std::uint64_t(k), 0);
    s += z;
    s2 += z * z;
  }
  CHECK(std::abs(s / n) < 0.01);
  CHECK(std::abs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("coarse Brownian increments are exact sums of fine increments") {
  BrownianSource src;
  src.seed = 11;
  src.replication = 2;
  src.h_base = 1.0 / 64.0;
  src.substeps = 8;
  for (std::uint64_t i = 0; i < 4; ++i)
    for (std::uint64_t k = 0; k < 16; ++k) {
      double sum = 0.0;
      for (int s = 0; s < 8; ++s)
        sum += src.fine_increment(i, k * 8 + std::uint64_t(s), 0);
      CHECK(src.coarse_increment(i, k, 0) == sum);
    }
}

TEST_CASE("increment variance scales with the base step") {
  BrownianSource src;
  src.seed = 5;
  src.h_base = 0.25;
  src.substeps = 1;
  double s2 = 0.0;
  const int n = 100000;
  for (int k = 0; k < n; ++k) {
    const double dw = src.fine_increment(0, std::uint64_t(k), 0);
    s2 += dw * dw;
  }
  CHECK(s2 / n == doctest::Approx(0.25).epsilon(0.02));
}
