#include <doctest.h>

#include "balsam/errors.hpp"
#include "balsam/quadrature.hpp"

#include <cmath>
#include <limits>
#include <vector>

using namespace balsam;

namespace {

// Closed form of int_0^t sqrt(1 + s^2) ds.
double parabola_arc(double t) { return 0.5 * (t * std::sqrt(1 + t * t) + std::asinh(t)); }

double unit_slope_speed(double s) { return speed_from_slope(s); }

// Inner integral recomputed from scratch at every outer node.
double brute_force_hazard(double lambda, double linpred, double alpha, const SpeedFunction& speed,
                          double t, int m) {
  const double h = t / m;
  std::vector<double> outer(m + 1);
  for (int k = 0; k <= m; ++k) {
    double inner = 0.0;
    for (int j = 1; j <= k; ++j) inner += 0.5 * h * (speed((j - 1) * h) + speed(j * h));
    outer[k] = lambda * std::exp(linpred + alpha * inner);
  }
  double total = 0.0;
  for (int k = 1; k <= m; ++k) total += 0.5 * h * (outer[k - 1] + outer[k]);
  return total;
}

}  // namespace

TEST_CASE("flat and constant-slope arc lengths") {
  CHECK(trapezoid_arc_length([](double) { return speed_from_slope(0.0); }, Grid{2.0, 4}) == 2.0);
  for (int m : {1, 3, 7, 100})
    CHECK(trapezoid_arc_length([](double) { return speed_from_slope(0.75); }, Grid{4.0, m}) ==
          doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("trapezoid on a parabola") {
  const double exact = parabola_arc(1.0);
  CHECK(exact == doctest::Approx(1.1477935747).epsilon(1e-10));
  const double v = trapezoid_arc_length(unit_slope_speed, Grid{1.0, 100});
  CHECK(std::abs(v - exact) <= 1e-4);
  CHECK(v >= 1.0);
}

TEST_CASE("trapezoid error shrinks fourfold per doubling") {
  const double exact = parabola_arc(1.0);
  const double e50 = std::abs(trapezoid_arc_length(unit_slope_speed, Grid{1.0, 50}) - exact);
  const double e100 = std::abs(trapezoid_arc_length(unit_slope_speed, Grid{1.0, 100}) - exact);
  const double e200 = std::abs(trapezoid_arc_length(unit_slope_speed, Grid{1.0, 200}) - exact);
  CHECK(e50 / e100 >= 3.5);
  CHECK(e50 / e100 <= 4.5);
  CHECK(e100 / e200 >= 3.5);
  CHECK(e100 / e200 <= 4.5);
}

TEST_CASE("non-finite speed is reported") {
  const auto bad = [](double s) { return s > 0.5 ? std::numeric_limits<double>::quiet_NaN() : 1.0; };
  CHECK_THROWS_AS(trapezoid_arc_length(bad, Grid{1.0, 4}), NumericalError);
  CHECK_THROWS_AS(cumulative_arc_length_grid(bad, Grid{1.0, 4}), NumericalError);
  CHECK_THROWS_AS(validate(Grid{1.0, 0}), ConfigError);
  CHECK_THROWS_AS(validate(Grid{0.0, 10}), ConfigError);
}

TEST_CASE("polyline lengths") {
  const std::vector<std::pair<double, double>> flat = {{0, 0}, {1, 0}, {2, 0}};
  CHECK(polyline_length(flat) == 2.0);
  const std::vector<std::pair<double, double>> seg = {{0, 0}, {3, 4}};
  CHECK(polyline_length(seg) == 5.0);

  std::vector<std::pair<double, double>> pts;
  for (int k = 0; k < 1000; ++k) {
    const double s = k / 999.0;
    pts.emplace_back(s, 0.5 * s * s);
  }
  CHECK(std::abs(polyline_length(pts) - parabola_arc(1.0)) <= 1e-5);

  const std::vector<std::pair<double, double>> dup = {{0, 0}, {0, 1}};
  CHECK_THROWS_AS(polyline_length(dup), DataError);
  const std::vector<std::pair<double, double>> back = {{1, 0}, {0, 1}};
  CHECK_THROWS_AS(polyline_length(back), DataError);
  const std::vector<std::pair<double, double>> one = {{1, 0}};
  CHECK_THROWS_AS(polyline_length(one), DataError);
}

TEST_CASE("romberg") {
  const auto one = romberg([](double) { return 1.0; }, 0.0, 1.0, 1e-10);
  CHECK(one.converged);
  CHECK(one.value == doctest::Approx(1.0).epsilon(1e-14));

  const auto arc = romberg(unit_slope_speed, 0.0, 1.0, 1e-10);
  CHECK(arc.converged);
  CHECK(std::abs(arc.value - 1.1477935747) <= 1e-9);

  const auto quartic = romberg([](double s) { return s * s * s * s; }, 0.0, 1.0, 1e-12);
  CHECK(quartic.converged);
  CHECK(std::abs(quartic.value - 0.2) <= 1e-12);

  const auto rough = romberg([](double s) { return std::sqrt(s); }, 0.0, 1.0, 1e-15, 4);
  CHECK_FALSE(rough.converged);
  CHECK_THROWS_AS(romberg(unit_slope_speed, 1.0, 0.0, 1e-6), DomainError);
}

TEST_CASE("cumulative grid") {
  const auto flat = cumulative_arc_length_grid([](double) { return 1.0; }, Grid{1.0, 4});
  CHECK(flat == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});

  const auto g = cumulative_arc_length_grid(unit_slope_speed, Grid{1.0, 1000});
  REQUIRE(g.size() == 1001);
  CHECK(std::abs(g.back() - 1.147794) <= 1e-6);

  const Grid coarse{1.0, 37};
  const auto c = cumulative_arc_length_grid(unit_slope_speed, coarse);
  for (int k = 1; k <= coarse.m; ++k) {
    CHECK(c[k] >= c[k - 1]);
    CHECK(c[k] >= coarse.node(k) - 1e-15);
    const double direct = trapezoid_arc_length(unit_slope_speed, Grid{coarse.node(k), k});
    CHECK(std::abs(c[k] - direct) <= 1e-12);
  }
}

TEST_CASE("nested hazard without association is linear in time") {
  const double h = nested_cumulative_hazard([](double) { return 0.02; }, 0.0, 0.0, unit_slope_speed,
                                            Grid{7.0, 13});
  CHECK(h == doctest::Approx(0.14).epsilon(1e-14));
}

TEST_CASE("nested hazard equals the quadratic-cost evaluation") {
  const auto speed = [](double s) { return speed_from_slope(std::sin(s) + 0.3 * s); };
  const double fast = nested_cumulative_hazard([](double) { return 0.05; }, 0.4, 0.3, speed,
                                               Grid{6.0, 50});
  const double slow = brute_force_hazard(0.05, 0.4, 0.3, speed, 6.0, 50);
  CHECK(std::abs(fast - slow) <= 1e-10 * std::max(1.0, slow));
}

TEST_CASE("nested hazard reproduces the linear-trajectory closed form") {
  const double lambda = 0.02, linpred = 0.05, alpha = 0.25, b1 = 0.6, t = 9.0;
  const double c = std::sqrt(1 + b1 * b1);
  const double closed = lambda * std::exp(linpred) * std::expm1(alpha * c * t) / (alpha * c);
  const double h = nested_cumulative_hazard([&](double) { return lambda; }, linpred, alpha,
                                            [&](double) { return c; }, Grid{t, 2000});
  CHECK(std::abs(h - closed) <= 1e-6);
}

TEST_CASE("nested hazard is monotone in the horizon") {
  const auto speed = [](double s) { return speed_from_slope(0.5 - 0.2 * s); };
  double prev = 0.0;
  for (int j = 1; j <= 20; ++j) {
    const double h = nested_cumulative_hazard([](double) { return 0.1; }, 0.0, 0.2, speed,
                                              Grid{0.5 * j, 200});
    CHECK(h >= prev);
    prev = h;
  }
}

TEST_CASE("overflow is reported") {
  CHECK_THROWS_AS(nested_cumulative_hazard([](double) { return 1.0; }, 0.0, 1000.0,
                                           [](double) { return 1.0; }, Grid{10.0, 10}),
                  NumericalError);
}
