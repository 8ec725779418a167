#pragma once

#include <cmath>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace balsam {

/// m equal sub-intervals of [0, t_end]; nodes s_k = k * t_end / m.
struct Grid {
  double t_end = 1.0;
  int m = 200;

  double step() const { return t_end / m; }
  double node(int k) const { return k == m ? t_end : k * step(); }
};

void validate(const Grid& grid);

/// s -> |g'(s)| = sqrt(1 + Q'(s)^2) for the curve g(s) = (s, Q(s)).
using SpeedFunction = std::function<double(double)>;

/// Speed of (s, Q(s)) given the slope Q'(s).
inline double speed_from_slope(double slope) { return std::sqrt(1.0 + slope * slope); }

/// Constant baseline hazard or any positive s -> lambda0(s).
using BaselineHazard = std::function<double(double)>;

/// Composite trapezoid arc length over the grid.
double trapezoid_arc_length(const SpeedFunction& speed, const Grid& grid);

/// Sum of Euclidean segment lengths through (s, q) points with strictly increasing s.
double polyline_length(std::span<const std::pair<double, double>> points);

struct RombergResult {
  double value = 0.0;
  bool converged = false;
  int levels = 0;
};

/**
 * Romberg integration of f over [a, b].
 *
 * Stops once two successive diagonal entries differ by less than `tol`;
 * otherwise returns the last diagonal entry with `converged = false`.
 */
RombergResult romberg(const std::function<double(double)>& f, double a, double b, double tol,
                      int max_levels = 20);

/// G(s_0) = 0, G(s_1), ..., G(s_m) as trapezoid prefix sums in one pass.
std::vector<double> cumulative_arc_length_grid(const SpeedFunction& speed, const Grid& grid);

/**
 * H(t_end) = int_0^t lambda0(s) exp(linpred + alpha * G(s)) ds.
 *
 * The inner arc length and the outer hazard integral share the grid
 * nodes: one prefix-sum pass followed by one trapezoid pass, O(m).
 */
double nested_cumulative_hazard(const BaselineHazard& lambda0, double linpred, double alpha,
                                const SpeedFunction& speed, const Grid& grid);

// Span-based kernels used on the likelihood hot path. `speeds` holds the
// m + 1 node values of |g'|; nothing is checked here.
double trapezoid_sum(std::span<const double> values, double step);
void prefix_trapezoid(std::span<const double> speeds, double step, std::span<double> out);

}  // namespace balsam
