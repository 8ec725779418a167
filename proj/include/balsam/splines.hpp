#pragma once

#include <Eigen/Dense>

#include <vector>

namespace balsam {

/**
 * Clamped B-spline configuration.
 *
 * `order` is the polynomial degree plus one, so order 3 with a single
 * inner knot yields four quadratic basis functions.
 */
struct SplineConfig {
  int order = 3;
  std::vector<double> inner_knots;
  double start = 0.0;
  double end = 1.0;
};

/// Throws ConfigError naming the violated invariant.
void validate(const SplineConfig& cfg);

/// Number of basis functions, inner knots + order.
int basis_count(const SplineConfig& cfg);

/// Clamped knot vector: `start` and `end` each repeated `order` times around the inner knots.
std::vector<double> knot_vector(const SplineConfig& cfg);

/**
 * B-spline basis over a validated configuration.
 *
 * Evaluation uses the Cox-de Boor triangle restricted to the knot span
 * containing s; spans are right-continuous at interior knots and the last
 * non-empty span is closed at `end`. Arguments outside [start, end] raise
 * DomainError.
 */
class BSplineBasis {
 public:
  explicit BSplineBasis(SplineConfig cfg);

  const SplineConfig& config() const { return cfg_; }
  int size() const { return count_; }
  int order() const { return cfg_.order; }
  const std::vector<double>& knots() const { return knots_; }

  Eigen::VectorXd eval(double s) const;
  Eigen::VectorXd eval_derivative(double s) const;

  /// Writes both values and first derivatives; either output may be null.
  void eval_into(double s, Eigen::VectorXd* values, Eigen::VectorXd* derivatives) const;

 private:
  int find_span(double s) const;

  SplineConfig cfg_;
  std::vector<double> knots_;
  int count_;
};

Eigen::VectorXd eval_basis(const SplineConfig& cfg, double s);
Eigen::VectorXd eval_basis_derivative(const SplineConfig& cfg, double s);

}  // namespace balsam
