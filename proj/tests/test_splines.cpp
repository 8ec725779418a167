#include <doctest.h>

#include "balsam/errors.hpp"
#include "balsam/random.hpp"
#include "balsam/splines.hpp"

#include <cmath>
#include <vector>

using namespace balsam;

namespace {

// Textbook recursion on the full knot vector, no span search.
double cox_de_boor(const std::vector<double>& u, int i, int k, double s, double end) {
  if (k == 1) {
    if (u[i] <= s && s < u[i + 1]) return 1.0;
    // closed last span
    if (s == end && u[i] < u[i + 1] && u[i + 1] == end) return 1.0;
    return 0.0;
  }
  double left = 0.0, right = 0.0;
  const double d1 = u[i + k - 1] - u[i];
  const double d2 = u[i + k] - u[i + 1];
  if (d1 > 0) left = (s - u[i]) / d1 * cox_de_boor(u, i, k - 1, s, end);
  if (d2 > 0) right = (u[i + k] - s) / d2 * cox_de_boor(u, i + 1, k - 1, s, end);
  return left + right;
}

SplineConfig cfg3() { return SplineConfig{3, {0.5}, 0.0, 1.0}; }

}  // namespace

TEST_CASE("knot vector for order 3 with one inner knot") {
  const auto u = knot_vector(cfg3());
  CHECK(u == std::vector<double>{0, 0, 0, 0.5, 1, 1, 1});
  CHECK(basis_count(cfg3()) == 4);
}

TEST_CASE("knot vector for linear hats") {
  SplineConfig c{2, {}, 0.0, 2.0};
  CHECK(knot_vector(c) == std::vector<double>{0, 0, 2, 2});
  CHECK(basis_count(c) == 2);
}

TEST_CASE("invalid configurations are rejected") {
  CHECK_THROWS_AS(knot_vector(SplineConfig{3, {1.5, 0.5}, 0.0, 2.0}), ConfigError);
  CHECK_THROWS_AS(validate(SplineConfig{1, {}, 0.0, 1.0}), ConfigError);
  CHECK_THROWS_AS(validate(SplineConfig{3, {}, 1.0, 1.0}), ConfigError);
  CHECK_THROWS_AS(validate(SplineConfig{3, {1.0}, 0.0, 1.0}), ConfigError);
  CHECK_THROWS_AS(validate(SplineConfig{3, {0.5, 0.5}, 0.0, 1.0}), ConfigError);
}

TEST_CASE("matches the recursive definition") {
  const std::vector<SplineConfig> configs = {
      cfg3(), {2, {}, 0.0, 2.0}, {4, {1.0, 2.5, 3.0}, 0.0, 5.0}, {3, {12.0}, 0.0, 24.0}};
  for (const auto& c : configs) {
    const BSplineBasis basis(c);
    const auto u = knot_vector(c);
    for (int j = 0; j <= 40; ++j) {
      const double s = c.start + (c.end - c.start) * j / 40.0;
      const auto v = basis.eval(s);
      for (int l = 0; l < basis.size(); ++l)
        CHECK(v(l) == doctest::Approx(cox_de_boor(u, l, c.order, s, c.end)).epsilon(1e-13));
    }
  }
  const auto v = eval_basis(cfg3(), 0.25);
  const auto u = knot_vector(cfg3());
  for (int l = 0; l < 4; ++l) CHECK(std::abs(v(l) - cox_de_boor(u, l, 3, 0.25, 1.0)) < 1e-14);
}

TEST_CASE("partition of unity and range") {
  SplineConfig c{4, {1.0, 2.5, 3.0}, 0.0, 5.0};
  Rng rng(11);
  for (int j = 0; j < 1000; ++j) {
    const double s = 5.0 * rng.uniform();
    const auto v = eval_basis(c, s);
    CHECK(std::abs(v.sum() - 1.0) <= 1e-12);
    CHECK(v.minCoeff() >= 0.0);
    CHECK(v.maxCoeff() <= 1.0);
    CHECK(std::abs(eval_basis_derivative(c, s).sum()) <= 1e-10);
  }
}

TEST_CASE("clamped endpoints") {
  const auto a = eval_basis(cfg3(), 0.0);
  CHECK(a(0) == 1.0);
  CHECK(a.tail(3).isZero());
  const auto b = eval_basis(cfg3(), 1.0);
  CHECK(b(3) == 1.0);
  CHECK(b.head(3).isZero());
}

TEST_CASE("linear hat derivatives") {
  const auto d = eval_basis_derivative(SplineConfig{2, {}, 0.0, 2.0}, 1.0);
  CHECK(d(0) == doctest::Approx(-0.5));
  CHECK(d(1) == doctest::Approx(0.5));
}

TEST_CASE("derivative agrees with central differences") {
  const double h = 1e-6;
  const auto d = eval_basis_derivative(cfg3(), 0.3);
  const Eigen::VectorXd fd = (eval_basis(cfg3(), 0.3 + h) - eval_basis(cfg3(), 0.3 - h)) / (2 * h);
  CHECK((d - fd).cwiseAbs().maxCoeff() <= 1e-5);

  SplineConfig c{4, {1.0, 2.5, 3.0}, 0.0, 5.0};
  const std::vector<double> knots = {1.0, 2.5, 3.0};
  Rng rng(5);
  for (int j = 0; j < 200; ++j) {
    const double s = 0.01 + 4.98 * rng.uniform();
    bool near = false;
    for (double k : knots) near = near || std::abs(s - k) <= 2 * h;
    if (near) continue;
    const auto dd = eval_basis_derivative(c, s);
    const Eigen::VectorXd ff = (eval_basis(c, s + h) - eval_basis(c, s - h)) / (2 * h);
    CHECK((dd - ff).cwiseAbs().maxCoeff() <= 1e-5);
  }
}

TEST_CASE("local support") {
  SplineConfig c{3, {1.0, 2.0, 3.0}, 0.0, 4.0};
  const auto u = knot_vector(c);
  for (int j = 0; j <= 400; ++j) {
    const double s = 4.0 * j / 400.0;
    const auto v = eval_basis(c, s);
    for (int l = 0; l < v.size(); ++l)
      if (s < u[l] || s > u[l + c.order]) CHECK(v(l) == 0.0);
  }
}

TEST_CASE("right continuity at an inner knot") {
  const auto at = eval_basis(cfg3(), 0.5);
  const auto after = eval_basis(cfg3(), 0.5 + 1e-12);
  CHECK((at - after).cwiseAbs().maxCoeff() < 1e-9);
  const auto d_at = eval_basis_derivative(SplineConfig{2, {0.5}, 0.0, 1.0}, 0.5);
  CHECK(d_at(1) == doctest::Approx(-2.0));
  CHECK(d_at(2) == doctest::Approx(2.0));
}

TEST_CASE("outside the domain is an error") {
  CHECK_THROWS_AS(eval_basis(cfg3(), -1e-9), DomainError);
  CHECK_THROWS_AS(eval_basis(cfg3(), 1.0 + 1e-9), DomainError);
  CHECK_THROWS_AS(eval_basis_derivative(cfg3(), 2.0), DomainError);
}
