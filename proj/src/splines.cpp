#include "balsam/splines.hpp"

#include "balsam/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace balsam {

void validate(const SplineConfig& cfg) {
  if (cfg.order < 2) {
    throw ConfigError(fmt::format("spline order must be >= 2, got {}", cfg.order));
  }
  if (!(std::isfinite(cfg.start) && std::isfinite(cfg.end)) || !(cfg.start < cfg.end)) {
    throw ConfigError(fmt::format("spline boundary must satisfy start < end, got ({}, {})",
                                  cfg.start, cfg.end));
  }
  double prev = cfg.start;
  for (std::size_t i = 0; i < cfg.inner_knots.size(); ++i) {
    const double k = cfg.inner_knots[i];
    if (!(k > prev)) {
      throw ConfigError(fmt::format(
          "inner knots must be strictly increasing and inside the boundary (knot {} = {})", i, k));
    }
    prev = k;
  }
  if (!(prev < cfg.end) && !cfg.inner_knots.empty()) {
    throw ConfigError(fmt::format("inner knot {} is not strictly inside the boundary end {}",
                                  cfg.inner_knots.back(), cfg.end));
  }
}

int basis_count(const SplineConfig& cfg) {
  return static_cast<int>(cfg.inner_knots.size()) + cfg.order;
}

std::vector<double> knot_vector(const SplineConfig& cfg) {
  validate(cfg);
  std::vector<double> knots;
  knots.reserve(cfg.inner_knots.size() + 2 * static_cast<std::size_t>(cfg.order));
  knots.insert(knots.end(), static_cast<std::size_t>(cfg.order), cfg.start);
  knots.insert(knots.end(), cfg.inner_knots.begin(), cfg.inner_knots.end());
  knots.insert(knots.end(), static_cast<std::size_t>(cfg.order), cfg.end);
  return knots;
}

BSplineBasis::BSplineBasis(SplineConfig cfg)
    : cfg_(std::move(cfg)), knots_(knot_vector(cfg_)), count_(basis_count(cfg_)) {}

int BSplineBasis::find_span(double s) const {
  if (!(s >= cfg_.start && s <= cfg_.end)) {
    throw DomainError(fmt::format("spline argument {} outside [{}, {}]", s, cfg_.start, cfg_.end));
  }
  // Last non-empty span is closed on the right.
  if (s >= cfg_.end) return count_ - 1;
  // Largest mu with knots[mu] <= s, restricted to [order-1, count-1].
  auto it = std::upper_bound(knots_.begin() + cfg_.order - 1, knots_.begin() + count_, s);
  return static_cast<int>(it - knots_.begin()) - 1;
}

void BSplineBasis::eval_into(double s, Eigen::VectorXd* values,
                             Eigen::VectorXd* derivatives) const {
  const int k = cfg_.order;
  const int mu = find_span(s);
  const auto& t = knots_;

  // Triangular Cox-de Boor: after pass j, n[0..j] hold the order-(j+1)
  // functions B_{mu-j}, ..., B_mu.
  std::vector<double> n(k, 0.0), lower(k, 0.0), left(k, 0.0), right(k, 0.0);
  n[0] = 1.0;
  for (int j = 1; j < k; ++j) {
    if (j == k - 1) std::copy(n.begin(), n.end(), lower.begin());
    left[j] = s - t[mu + 1 - j];
    right[j] = t[mu + j] - s;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double denom = right[r + 1] + left[j - r];
      const double temp = denom != 0.0 ? n[r] / denom : 0.0;
      n[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    n[j] = saved;
  }
  if (k == 1) lower[0] = 1.0;

  const int first = mu - k + 1;
  if (values) {
    values->setZero(count_);
    for (int r = 0; r < k; ++r) (*values)[first + r] = n[r];
  }
  if (derivatives) {
    derivatives->setZero(count_);
    // lower[r] = B_{mu-k+2+r, k-1}, r = 0..k-2.
    auto low = [&](int index) -> double {
      const int r = index - (mu - k + 2);
      return (r >= 0 && r <= k - 2) ? lower[r] : 0.0;
    };
    for (int r = 0; r < k; ++r) {
      const int i = first + r;
      const double d1 = t[i + k - 1] - t[i];
      const double d2 = t[i + k] - t[i + 1];
      double v = 0.0;
      if (d1 > 0.0) v += low(i) / d1;
      if (d2 > 0.0) v -= low(i + 1) / d2;
      (*derivatives)[i] = (k - 1) * v;
    }
  }
}

Eigen::VectorXd BSplineBasis::eval(double s) const {
  Eigen::VectorXd v;
  eval_into(s, &v, nullptr);
  return v;
}

Eigen::VectorXd BSplineBasis::eval_derivative(double s) const {
  Eigen::VectorXd d;
  eval_into(s, nullptr, &d);
  return d;
}

Eigen::VectorXd eval_basis(const SplineConfig& cfg, double s) {
  return BSplineBasis(cfg).eval(s);
}

Eigen::VectorXd eval_basis_derivative(const SplineConfig& cfg, double s) {
  return BSplineBasis(cfg).eval_derivative(s);
}

}  // namespace balsam
