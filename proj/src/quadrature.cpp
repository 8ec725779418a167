#include "balsam/quadrature.hpp"

#include "balsam/errors.hpp"

#include <fmt/format.h>

#include <cmath>

namespace balsam {

void validate(const Grid& grid) {
  if (grid.m < 1) throw ConfigError(fmt::format("grid needs m >= 1, got {}", grid.m));
  if (!(grid.t_end > 0.0) || !std::isfinite(grid.t_end)) {
    throw ConfigError(fmt::format("grid needs t_end > 0, got {}", grid.t_end));
  }
}

namespace {

std::vector<double> speeds_on_grid(const SpeedFunction& speed, const Grid& grid) {
  validate(grid);
  std::vector<double> v(static_cast<std::size_t>(grid.m) + 1);
  for (int k = 0; k <= grid.m; ++k) {
    const double s = grid.node(k);
    v[k] = speed(s);
    if (!std::isfinite(v[k])) {
      throw NumericalError(fmt::format("non-finite speed {} at node {} (s = {})", v[k], k, s));
    }
  }
  return v;
}

}  // namespace

double trapezoid_sum(std::span<const double> values, double step) {
  const std::size_t last = values.size() - 1;
  double acc = 0.5 * values[0];
  for (std::size_t k = 1; k < last; ++k) acc += values[k];
  acc += 0.5 * values[last];
  return acc * step;
}

void prefix_trapezoid(std::span<const double> speeds, double step, std::span<double> out) {
  const double half = 0.5 * step;
  out[0] = 0.0;
  for (std::size_t k = 1; k < speeds.size(); ++k) {
    out[k] = out[k - 1] + half * (speeds[k - 1] + speeds[k]);
  }
}

double trapezoid_arc_length(const SpeedFunction& speed, const Grid& grid) {
  const auto v = speeds_on_grid(speed, grid);
  return trapezoid_sum(v, grid.step());
}

double polyline_length(std::span<const std::pair<double, double>> points) {
  if (points.size() < 2) throw DataError("polyline needs at least two points");
  double total = 0.0;
  for (std::size_t k = 1; k < points.size(); ++k) {
    const double ds = points[k].first - points[k - 1].first;
    if (!(ds > 0.0)) {
      throw DataError(fmt::format("polyline abscissae must be strictly increasing (point {})", k));
    }
    total += std::hypot(ds, points[k].second - points[k - 1].second);
  }
  return total;
}

RombergResult romberg(const std::function<double(double)>& f, double a, double b, double tol,
                      int max_levels) {
  if (!(a < b)) throw DomainError(fmt::format("romberg needs a < b, got [{}, {}]", a, b));
  if (!(tol > 0.0)) throw ConfigError("romberg tolerance must be positive");
  if (max_levels < 2) max_levels = 2;

  std::vector<double> prev(1), cur;
  double h = b - a;
  prev[0] = 0.5 * h * (f(a) + f(b));
  RombergResult out{prev[0], false, 1};
  long long panels = 1;
  for (int level = 1; level < max_levels; ++level) {
    h *= 0.5;
    double mid = 0.0;
    for (long long k = 0; k < panels; ++k) mid += f(a + (2 * k + 1) * h);
    panels *= 2;
    cur.assign(static_cast<std::size_t>(level) + 1, 0.0);
    cur[0] = 0.5 * prev[0] + h * mid;
    double factor = 1.0;
    for (int j = 1; j <= level; ++j) {
      factor *= 4.0;
      cur[j] = cur[j - 1] + (cur[j - 1] - prev[j - 1]) / (factor - 1.0);
    }
    out.value = cur[level];
    out.levels = level + 1;
    if (std::abs(cur[level] - prev[level - 1]) < tol) {
      out.converged = true;
      return out;
    }
    prev.swap(cur);
  }
  return out;
}

std::vector<double> cumulative_arc_length_grid(const SpeedFunction& speed, const Grid& grid) {
  const auto v = speeds_on_grid(speed, grid);
  std::vector<double> g(v.size());
  prefix_trapezoid(v, grid.step(), g);
  return g;
}

double nested_cumulative_hazard(const BaselineHazard& lambda0, double linpred, double alpha,
                                const SpeedFunction& speed, const Grid& grid) {
  const auto g = cumulative_arc_length_grid(speed, grid);
  std::vector<double> h(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) {
    const double s = grid.node(static_cast<int>(k));
    const double exponent = linpred + alpha * g[k];
    if (exponent > 700.0) {
      throw NumericalError(fmt::format(
          "hazard exponent overflow: alpha * G = {} at s = {}", alpha * g[k], s));
    }
    const double base = lambda0(s);
    if (!(base > 0.0)) {
      throw DomainError(fmt::format("baseline hazard must be positive, got {} at s = {}", base, s));
    }
    h[k] = base * std::exp(exponent);
  }
  return trapezoid_sum(h, grid.step());
}

}  // namespace balsam
