#include <doctest.h>

#include "balsam/errors.hpp"
#include "balsam/gradient.hpp"
#include "balsam/random.hpp"
#include "balsam/simulate.hpp"
#include "fixtures.hpp"

#include <cmath>

using namespace balsam;

namespace {

double fd_component(const std::function<double(const Eigen::VectorXd&)>& f, Eigen::VectorXd x,
                    int j, double h) {
  const double x0 = x[j];
  x[j] = x0 + h;
  const double up = f(x);
  x[j] = x0 - h;
  const double down = f(x);
  return (up - down) / (2 * h);
}

// Worst |analytic - fd| / max(1, |fd|) over all components.
double worst_relative_error(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, const Eigen::VectorXd& grad) {
  double worst = 0.0;
  for (int j = 0; j < x.size(); ++j) {
    const double fd = fd_component(f, x, j, 1e-5);
    worst = std::max(worst, std::abs(grad[j] - fd) / std::max(1.0, std::abs(fd)));
  }
  return worst;
}

struct Problem {
  SimulatedDataset data;
  JointModel model;
  ParameterLayout layout;
  Eigen::VectorXd center;

  explicit Problem(const SimulationDesign& d)
      : data(generate_dataset(d)),
        model(d.spec, data.subjects),
        layout(model.spec(), model.size()),
        center(layout.to_unconstrained(data.truth.state)) {}
};

}  // namespace

TEST_CASE("spline-model gradient matches central differences") {
  Problem p(fixtures::table1b_design(20, 41));
  const auto f = [&](const Eigen::VectorXd& th) { return log_density_unconstrained(p.model, p.layout, th); };
  Rng rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::VectorXd theta = p.center + 0.2 * rng.standard_normal(p.center.size());
    Eigen::VectorXd grad;
    const double value = grad_log_density_unconstrained(p.model, p.layout, theta, grad);
    CHECK(value == doctest::Approx(f(theta)).epsilon(1e-12));
    CHECK(worst_relative_error(f, theta, grad) <= 1e-5);
  }
}

TEST_CASE("linear-model gradients match central differences") {
  auto d = fixtures::table1a_design(15, 5);
  Problem p(d);
  const auto f = [&](const Eigen::VectorXd& th) { return log_density_unconstrained(p.model, p.layout, th); };
  Rng rng(2);
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::VectorXd theta = p.center + 0.2 * rng.standard_normal(p.center.size());
    Eigen::VectorXd grad;
    grad_log_density_unconstrained(p.model, p.layout, theta, grad);
    CHECK(worst_relative_error(f, theta, grad) <= 1e-5);
  }

  ModelSpec ia;
  ia.kind = ModelKind::Ia;
  ia.num_covariates = 1;
  ia.longitudinal_covariate = 0;
  d.spec = resolve(ia);
  d.truth.gamma = 0.4;
  Problem q(d);
  const auto g = [&](const Eigen::VectorXd& th) { return log_density_unconstrained(q.model, q.layout, th); };
  const Eigen::VectorXd theta = q.center + 0.1 * rng.standard_normal(q.center.size());
  Eigen::VectorXd grad;
  grad_log_density_unconstrained(q.model, q.layout, theta, grad);
  CHECK(worst_relative_error(g, theta, grad) <= 1e-5);
}

TEST_CASE("association gradient by hand on one subject") {
  const auto spec = fixtures::model1();
  const auto sub = fixtures::subject("1", 9.0, 1, {1.0}, {0, 4, 8}, {1.0, 2.2, 3.1});
  const JointModel model(spec, {sub});
  ParameterState s;
  s.lambda = 0.03;
  s.beta = Eigen::VectorXd::Constant(1, 0.2);
  s.alpha = 0.3;
  s.mu = Eigen::Vector2d(1.0, 0.2);
  s.Sigma = fixtures::table1a_sigma();
  s.sigma2 = 2.0;
  s.b = Eigen::RowVector2d(0.9, 0.45);
  const auto grad = grad_log_posterior(model, s);
  const ParameterLayout layout(model.spec(), 1);

  const double c = std::sqrt(1 + 0.45 * 0.45);
  const double g = 9.0 * c;
  const double a = s.alpha;
  const double scale = s.lambda * std::exp(0.2);
  // d/da of (e^{aG} - 1) / (a c)
  const double d_exponent = (a * g * std::exp(a * g) - std::expm1(a * g)) / (a * a * c);
  const double prior = -a / (spec.priors.alpha_sd * spec.priors.alpha_sd);
  CHECK(grad[layout.alpha()] == doctest::Approx(g - scale * d_exponent + prior).epsilon(1e-12));
}

TEST_CASE("gradient vanishes at a posterior mode") {
  auto d = fixtures::table1a_design(4, 9);
  Problem p(d);
  const int n = p.layout.size();
  Eigen::VectorXd x = p.center;
  Eigen::VectorXd g;
  double value = grad_log_density_unconstrained(p.model, p.layout, x, g);
  // damped Newton with a difference Hessian of the analytic gradient
  for (int it = 0; it < 200 && g.norm() >= 1e-8; ++it) {
    Eigen::MatrixXd hess(n, n);
    for (int j = 0; j < n; ++j) {
      Eigen::VectorXd up = x, down = x, gu, gd;
      up[j] += 1e-5;
      down[j] -= 1e-5;
      grad_log_density_unconstrained(p.model, p.layout, up, gu);
      grad_log_density_unconstrained(p.model, p.layout, down, gd);
      hess.col(j) = (gu - gd) / 2e-5;
    }
    hess = 0.5 * (hess + hess.transpose());
    Eigen::LLT<Eigen::MatrixXd> neg(-hess);
    Eigen::VectorXd step = neg.info() == Eigen::Success ? Eigen::VectorXd(neg.solve(g))
                                                        : Eigen::VectorXd(0.01 * g);
    for (int half = 0; half < 50; ++half, step *= 0.5) {
      Eigen::VectorXd trial = x + step, gt;
      double vt = -std::numeric_limits<double>::infinity();
      try {
        vt = grad_log_density_unconstrained(p.model, p.layout, trial, gt);
      } catch (const NumericalError&) {
      }
      if (vt >= value) {
        x = trial;
        value = vt;
        g = gt;
        break;
      }
    }
  }
  CHECK(g.norm() < 1e-4);
}

TEST_CASE("non-centered coordinates") {
  Problem p(fixtures::table1b_design(12, 3));
  Rng rng(8);
  const Eigen::VectorXd theta = p.center + 0.1 * rng.standard_normal(p.center.size());
  const Eigen::VectorXd nc = to_noncentered(p.layout, theta);
  CHECK((to_centered(p.layout, nc) - theta).cwiseAbs().maxCoeff() < 1e-10);

  const auto state = p.layout.to_state(theta);
  const Eigen::MatrixXd l = state.Sigma.llt().matrixL();
  const int k = p.layout.dim();
  const Eigen::VectorXd eta = nc.segment(p.layout.random_effect(3), k);
  const Eigen::VectorXd b = state.mu + l * eta;
  CHECK((b - state.b.row(3).transpose()).cwiseAbs().maxCoeff() < 1e-10);

  const auto f = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd unused;
    return grad_log_density_noncentered(p.model, p.layout, z, unused);
  };
  for (int rep = 0; rep < 3; ++rep) {
    const Eigen::VectorXd z = nc + 0.2 * rng.standard_normal(nc.size());
    Eigen::VectorXd grad;
    const double v = grad_log_density_noncentered(p.model, p.layout, z, grad);
    // value equals the centered density plus log |db/deta|
    const Eigen::VectorXd c = to_centered(p.layout, z);
    double log_det = 0.0;
    const auto st = p.layout.to_state(c);
    const Eigen::MatrixXd lc = st.Sigma.llt().matrixL();
    for (int j = 0; j < k; ++j) log_det += std::log(lc(j, j));
    CHECK(v == doctest::Approx(log_density_unconstrained(p.model, p.layout, c) + p.model.size() * log_det)
                   .epsilon(1e-12));
    CHECK(worst_relative_error(f, z, grad) <= 1e-5);
  }
}

TEST_CASE("layout round trip") {
  Problem p(fixtures::table1b_design(5, 2));
  const auto back = p.layout.to_unconstrained(p.layout.to_state(p.center));
  CHECK((back - p.center).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(static_cast<int>(p.layout.names().size()) == p.layout.size());
  CHECK(p.layout.size() == 1 + 1 + 1 + 4 + 10 + 1 + 5 * 4);
}
