#include <doctest.h>

#include "balsam/diagnostics.hpp"
#include "balsam/gradient.hpp"
#include "balsam/mwg.hpp"
#include "balsam/nuts.hpp"
#include "balsam/rw_metropolis.hpp"
#include "balsam/sampler.hpp"
#include "balsam/simulate.hpp"
#include "calibration.hpp"
#include "fixtures.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/gamma.hpp>
#include <boost/math/distributions/inverse_gamma.hpp>
#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace balsam;
namespace bm = boost::math;
using namespace calibration;

namespace {

// Chi-square p-value of probability-integral-transformed draws in equal bins.
double uniformity_p_value(const std::vector<double>& u, int bins = 20) {
  std::vector<double> counts(static_cast<std::size_t>(bins), 0.0);
  for (double v : u) counts[static_cast<std::size_t>(std::min(bins - 1, static_cast<int>(v * bins)))] += 1.0;
  const double expected = static_cast<double>(u.size()) / bins;
  double stat = 0.0;
  for (double c : counts) stat += (c - expected) * (c - expected) / expected;
  return bm::cdf(bm::complement(bm::chi_squared(bins - 1), stat));
}

void check_against(const std::vector<double>& draws, double mean, double var) {
  const auto [se_mean, se_var] = mcse(draws);
  CHECK(std::abs(mean_of(draws) - mean) <= 3 * se_mean);
  CHECK(std::abs(variance_of(draws) - var) <= 3 * se_var);
}

GradientFn standard_normal_target(const Eigen::MatrixXd& precision) {
  return [precision](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = -precision * x;
    return -0.5 * x.dot(precision * x);
  };
}

}  // namespace

TEST_CASE("zero proposal scale leaves the chain in place") {
  const auto data = generate_dataset(fixtures::table1a_design(15, 3));
  const JointModel model(fixtures::model1(), data.subjects);
  Rng init(1);
  const auto start = initial_state(model, init, false);
  MwgOptions opt;
  opt.scale_multiplier = 0.0;
  opt.conjugate_lambda = false;
  opt.conjugate_gamma = false;
  opt.update_mu = opt.update_Sigma = opt.update_sigma2 = false;
  MwgSampler sampler(model, start, opt);
  Rng rng(2);
  for (int it = 0; it < 50; ++it) sampler.sweep(rng);
  const auto& s = sampler.state();
  CHECK(s.lambda == doctest::Approx(start.lambda).epsilon(1e-12));
  CHECK(s.alpha == start.alpha);
  CHECK((s.beta - start.beta).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((s.b - start.b).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("Metropolis-within-Gibbs recovers a conjugate Gaussian mean") {
  GaussianMean g;
  const auto [m1, m2] = g.mwg_draws(5, 2000, 40000);
  check_against(m1, g.post_mean[0], g.post_cov(0, 0));
  check_against(m2, g.post_mean[1], g.post_cov(1, 1));
}

TEST_CASE("NUTS recovers a conjugate Gaussian mean") {
  GaussianMean g;
  const auto [m1, m2] = g.nuts_draws(6, 1000, 8000);
  check_against(m1, g.post_mean[0], g.post_cov(0, 0));
  check_against(m2, g.post_mean[1], g.post_cov(1, 1));
}

TEST_CASE("random-walk kernel is reversible on a three-bin target") {
  // piecewise-constant density on [0, 3) with weights 1, 2, 3
  const LogDensityFn target = [](const Eigen::VectorXd& x) {
    if (x[0] < 0.0 || x[0] >= 3.0) return -std::numeric_limits<double>::infinity();
    return std::log(1.0 + std::floor(x[0]));
  };
  Eigen::VectorXd x = Eigen::VectorXd::Constant(1, 0.5);
  double lp = target(x);
  std::vector<ProposalScale> scale = {ProposalScale(1.2, kScalarAcceptTarget)};
  Rng rng(13);
  double counts[3][3] = {};
  std::array<double, 3> occupancy{};
  int bin = 0;
  for (int it = 0; it < 200000; ++it) {
    componentwise_rw_sweep(target, x, lp, scale, rng, false);
    const int next = static_cast<int>(std::floor(x[0]));
    counts[bin][next] += 1.0;
    occupancy[static_cast<std::size_t>(next)] += 1.0;
    bin = next;
  }
  double stat = 0.0;
  for (int a = 0; a < 3; ++a)
    for (int b = a + 1; b < 3; ++b)
      stat += (counts[a][b] - counts[b][a]) * (counts[a][b] - counts[b][a]) / (counts[a][b] + counts[b][a]);
  CHECK(bm::cdf(bm::complement(bm::chi_squared(3), stat)) > 0.01);
  CHECK(occupancy[2] / occupancy[0] == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("metropolis acceptance rule") {
  Rng rng(3);
  CHECK(metropolis_accept(0.0, rng));
  CHECK(metropolis_accept(5.0, rng));
  CHECK_FALSE(metropolis_accept(std::nan(""), rng));
  CHECK_FALSE(metropolis_accept(-std::numeric_limits<double>::infinity(), rng));
  int accepted = 0;
  for (int j = 0; j < 100000; ++j) accepted += metropolis_accept(std::log(0.3), rng);
  CHECK(accepted / 100000.0 == doctest::Approx(0.3).epsilon(0.02));
}

TEST_CASE("Robbins-Monro scale adaptation") {
  ProposalScale steady(0.7, 0.44);
  for (int j = 0; j < 100; ++j) steady.adapt(0.44);
  CHECK(steady.scale() == doctest::Approx(0.7).epsilon(1e-14));

  ProposalScale grow(0.7, 0.44);
  double prev = grow.scale();
  for (int j = 0; j < 100; ++j) {
    grow.adapt(1.0);
    CHECK(grow.scale() > prev);
    prev = grow.scale();
  }
  grow.freeze();
  grow.adapt(1.0);
  CHECK(grow.scale() == prev);

  std::vector<ProposalScale> scales(2, ProposalScale(1.0, 0.44));
  const std::vector<double> probs = {0.0, 1.0};
  adapt_scales(scales, probs);
  CHECK(scales[0].scale() < 1.0);
  CHECK(scales[1].scale() > 1.0);
}

TEST_CASE("adapted scale on a standard normal") {
  const LogDensityFn target = [](const Eigen::VectorXd& x) { return -0.5 * x.squaredNorm(); };
  Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
  double lp = 0.0;
  std::vector<ProposalScale> scale = {ProposalScale(0.5, kScalarAcceptTarget)};
  Rng rng(21);
  for (int it = 0; it < 5000; ++it) componentwise_rw_sweep(target, x, lp, scale, rng, true);
  CHECK(scale[0].scale() >= 1.8);
  CHECK(scale[0].scale() <= 3.2);
}

TEST_CASE("leapfrog integrator properties") {
  Eigen::Matrix2d prec;
  prec << 1.0, 0.0, 0.0, 4.0;
  const auto target = standard_normal_target(prec);
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(2);
  PhasePoint z;
  z.theta = Eigen::Vector2d(0.7, -0.3);
  z.momentum = Eigen::Vector2d(0.2, 1.1);
  z.log_p = target(z.theta, z.grad);
  const PhasePoint start = z;

  REQUIRE(leapfrog(target, z, ones, 0.1, 25));
  z.momentum = -z.momentum;
  REQUIRE(leapfrog(target, z, ones, 0.1, 25));
  CHECK((z.theta - start.theta).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((z.momentum + start.momentum).cwiseAbs().maxCoeff() <= 1e-10);

  PhasePoint still = start;
  REQUIRE(leapfrog(target, still, ones, 0.0, 10));
  CHECK(still.theta == start.theta);
  CHECK(still.momentum == start.momentum);

  PhasePoint osc = start;
  const double h0 = hamiltonian(osc, ones);
  double worst = 0.0, first_half = 0.0, second_half = 0.0;
  for (int j = 1; j <= 1000; ++j) {
    REQUIRE(leapfrog(target, osc, ones, 0.01, 1));
    const double err = hamiltonian(osc, ones) - h0;
    worst = std::max(worst, std::abs(err));
    (j <= 500 ? first_half : second_half) += err / 500.0;
  }
  // second-order integrator: error O(step^2), no secular drift
  CHECK(worst <= 1e-3);
  CHECK(std::abs(second_half - first_half) <= 1e-4);

  const GradientFn broken = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = -x;
    return x[0] > 1.0 ? std::nan("") : -0.5 * x.squaredNorm();
  };
  PhasePoint b;
  b.theta = Eigen::Vector2d(0.9, 0.0);
  b.momentum = Eigen::Vector2d(5.0, 0.0);
  b.log_p = broken(b.theta, b.grad);
  CHECK_FALSE(leapfrog(broken, b, ones, 0.1, 5));
}

TEST_CASE("depth-zero NUTS is one-step HMC") {
  Eigen::Matrix2d prec;
  prec << 2.0, 0.6, 0.6, 1.0;
  const auto target = standard_normal_target(prec);
  const Eigen::VectorXd inv_metric = Eigen::Vector2d(1.0, 0.5);
  NutsSettings settings;
  settings.max_tree_depth = 0;
  Rng a(44), b(44);
  Eigen::VectorXd theta_a = Eigen::Vector2d(1.0, -1.0), theta_b = theta_a;
  Eigen::VectorXd grad_a;
  double lp_a = target(theta_a, grad_a);
  for (int it = 0; it < 500; ++it) {
    const auto t = nuts_transition(target, theta_a, lp_a, grad_a, 0.9, inv_metric, settings, a);
    CHECK(t.n_leapfrog == 1);
    theta_a = t.theta;
    grad_a = t.grad;
    lp_a = t.log_p;

    // hand-rolled: momentum, direction, one leapfrog, Metropolis
    PhasePoint z;
    z.theta = theta_b;
    z.log_p = target(z.theta, z.grad);
    z.momentum.resize(2);
    for (int j = 0; j < 2; ++j) z.momentum[j] = b.normal() / std::sqrt(inv_metric[j]);
    const double h0 = hamiltonian(z, inv_metric);
    const double step = b.uniform() > 0.5 ? 0.9 : -0.9;
    leapfrog(target, z, inv_metric, step, 1);
    const double log_ratio = h0 - hamiltonian(z, inv_metric);
    if (log_ratio > 0.0 || b.uniform() < std::exp(log_ratio)) theta_b = z.theta;
    CHECK((theta_a - theta_b).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("NUTS on a two-dimensional standard normal") {
  const auto target = standard_normal_target(Eigen::Matrix2d::Identity());
  NutsSampler sampler(target, Eigen::Vector2d(3.0, -3.0), 1000, 0.8, NutsSettings{});
  Rng rng(8);
  Eigen::MatrixXd draws(4000, 2);
  for (int it = 0; it < 5000; ++it) {
    const auto& t = sampler.transition(it, rng);
    if (it >= 1000) draws.row(it - 1000) = t.theta.transpose();
  }
  const Eigen::RowVector2d mean = draws.colwise().mean();
  const Eigen::MatrixXd centered = draws.rowwise() - mean;
  const Eigen::Matrix2d cov = centered.transpose() * centered / 3999.0;
  CHECK(mean.cwiseAbs().maxCoeff() <= 0.05);
  // sample variances carry roughly 0.03 Monte Carlo error at this length
  for (int j = 0; j < 2; ++j) {
    std::vector<double> col(draws.col(j).data(), draws.col(j).data() + draws.rows());
    CHECK(std::abs(cov(j, j) - 1.0) <= std::max(0.05, 3 * mcse(col).second));
  }
  CHECK(std::abs(cov(0, 1)) <= 0.05);
}

TEST_CASE("NUTS beats random-walk updates on a correlated normal") {
  Eigen::Matrix2d cov;
  cov << 1.0, 0.9, 0.9, 1.0;
  const Eigen::Matrix2d prec = cov.inverse();
  const int burn = 1000, keep = 5000;

  NutsSampler nuts(standard_normal_target(prec), Eigen::Vector2d::Zero(), burn, 0.8, NutsSettings{});
  Rng r1(9);
  std::vector<double> n0, n1;
  for (int it = 0; it < burn + keep; ++it) {
    const auto& t = nuts.transition(it, r1);
    if (it < burn) continue;
    n0.push_back(t.theta[0]);
    n1.push_back(t.theta[1]);
  }

  const LogDensityFn target = [&](const Eigen::VectorXd& x) { return -0.5 * x.dot(prec * x); };
  Eigen::VectorXd x = Eigen::Vector2d::Zero();
  double lp = 0.0;
  std::vector<ProposalScale> scales(2, ProposalScale(1.0, kScalarAcceptTarget));
  Rng r2(9);
  std::vector<double> w0, w1;
  for (int it = 0; it < burn + keep; ++it) {
    componentwise_rw_sweep(target, x, lp, scales, r2, it < burn);
    if (it < burn) continue;
    w0.push_back(x[0]);
    w1.push_back(x[1]);
  }
  const double ess_nuts = std::min(ess_of(n0), ess_of(n1));
  const double ess_rw = std::min(ess_of(w0), ess_of(w1));
  CHECK(ess_nuts >= 3.0 * ess_rw);
}

TEST_CASE("conjugate block draws match their closed forms") {
  const auto data = generate_dataset(fixtures::table1a_design(30, 17));
  ModelSpec ia;
  ia.kind = ModelKind::Ia;
  ia.num_covariates = 1;
  ia.longitudinal_covariate = 0;
  const JointModel model(ia, data.subjects);
  const auto& pr = model.spec().priors;
  ParameterState fixed = data.truth.state;
  fixed.gamma = 0.3;
  const int n = model.size();

  const auto only = [](auto member) {
    MwgOptions o;
    o.update_lambda = o.update_beta = o.update_alpha = o.update_gamma = false;
    o.update_mu = o.update_Sigma = o.update_sigma2 = o.update_random_effects = false;
    o.*member = true;
    return o;
  };
  const auto collect = [&](const MwgOptions& o, auto extract, std::uint64_t seed) {
    MwgSampler s(model, fixed, o);
    Rng rng(seed);
    std::vector<double> u;
    for (int j = 0; j < 10000; ++j) {
      s.sweep(rng);
      u.push_back(extract(s.state()));
    }
    return u;
  };

  SUBCASE("lambda") {
    double events = 0.0, unit = 0.0;
    ParameterState one = fixed;
    one.lambda = 1.0;
    for (int i = 0; i < n; ++i) {
      events += model.subject(i).delta;
      unit -= log_survival(model.spec(), one, model.subject(i), i, model.subject(i).t);
    }
    const bm::gamma_distribution<> post(pr.lambda_shape + events, 1.0 / (pr.lambda_rate + unit));
    const auto u = collect(only(&MwgOptions::update_lambda), [&](const ParameterState& s) { return bm::cdf(post, s.lambda); }, 1);
    CHECK(uniformity_p_value(u) > 0.01);
  }
  SUBCASE("sigma2") {
    double rss = 0.0, count = 0.0;
    for (int i = 0; i < n; ++i) {
      rss += model.residual_sum_squares(fixed, i);
      count += static_cast<double>(model.subject(i).z.size());
    }
    const bm::inverse_gamma_distribution<> post(pr.sigma2_shape + count / 2, pr.sigma2_rate + rss / 2);
    const auto u = collect(only(&MwgOptions::update_sigma2), [&](const ParameterState& s) { return bm::cdf(post, s.sigma2); }, 2);
    CHECK(uniformity_p_value(u) > 0.01);
  }
  SUBCASE("gamma") {
    double precision = 1.0 / (pr.gamma_sd * pr.gamma_sd), shift = 0.0;
    for (int i = 0; i < n; ++i) {
      const auto& s = model.subject(i);
      for (std::size_t j = 0; j < s.z.size(); ++j) {
        const double r = s.z[j] - fixed.b(i, 0) - fixed.b(i, 1) * s.times[j];
        precision += s.x[0] * s.x[0] / fixed.sigma2;
        shift += s.x[0] * r / fixed.sigma2;
      }
    }
    const bm::normal post(shift / precision, 1.0 / std::sqrt(precision));
    const auto u = collect(only(&MwgOptions::update_gamma), [&](const ParameterState& s) { return bm::cdf(post, s.gamma); }, 3);
    CHECK(uniformity_p_value(u) > 0.01);
  }
  SUBCASE("mu") {
    const Eigen::Matrix2d si = fixed.Sigma.inverse();
    const Eigen::Matrix2d precision = n * si + Eigen::Matrix2d::Identity() / (pr.mu_sd * pr.mu_sd);
    const Eigen::Matrix2d cov = precision.inverse();
    const Eigen::Vector2d mean = cov * si * fixed.b.colwise().sum().transpose();
    const Eigen::Matrix2d ci = precision;
    const bm::chi_squared chi(2);
    const auto u = collect(only(&MwgOptions::update_mu), [&](const ParameterState& s) {
      const Eigen::Vector2d r = s.mu - mean;
      return bm::cdf(chi, r.dot(ci * r));
    }, 4);
    CHECK(uniformity_p_value(u) > 0.01);
    const bm::normal marginal(mean[1], std::sqrt(cov(1, 1)));
    const auto u1 = collect(only(&MwgOptions::update_mu), [&](const ParameterState& s) { return bm::cdf(marginal, s.mu[1]); }, 5);
    CHECK(uniformity_p_value(u1) > 0.01);
  }
  SUBCASE("Sigma") {
    const Eigen::MatrixXd centered = fixed.b.rowwise() - fixed.mu.transpose();
    const Eigen::Matrix2d scale = pr.wishart_scale + centered.transpose() * centered;
    const Eigen::Matrix2d scale_inv = scale.inverse();
    // a' Sigma^{-1} a / a' Psi^{-1} a is chi-square with nu + n degrees of freedom
    const bm::chi_squared chi(pr.wishart_df + n);
    for (const Eigen::Vector2d a : {Eigen::Vector2d(1, 0), Eigen::Vector2d(1, 1), Eigen::Vector2d(-0.5, 2)}) {
      const auto u = collect(only(&MwgOptions::update_Sigma), [&](const ParameterState& s) {
        return bm::cdf(chi, a.dot(s.Sigma.inverse() * a) / a.dot(scale_inv * a));
      }, 6);
      CHECK(uniformity_p_value(u) > 0.01);
    }
  }
}

TEST_CASE("retained draw arithmetic and determinism") {
  const auto data = generate_dataset(fixtures::table1a_design(20, 2));
  const JointModel model(fixtures::model1(), data.subjects);
  auto cfg = preset("model1-sim");
  CHECK(cfg.iterations == 20000);
  CHECK(cfg.burn_in == 5000);
  CHECK(cfg.thin == 5);
  CHECK(cfg.retained_per_chain() == 3000);
  cfg.seed = 5;
  const auto a = run(model, cfg);
  REQUIRE(a.chains.size() == 2);
  CHECK(a.chains[0].draws.rows() == 3000);
  CHECK(a.chains[0].deviance.size() == 3000);
  CHECK(a.chains[0].seed != a.chains[1].seed);
  CHECK(a.chains[0].draws != a.chains[1].draws);

  cfg.threads = 2;
  const auto b = run(model, cfg);
  CHECK(a.chains[0].draws == b.chains[0].draws);
  CHECK(a.chains[1].draws == b.chains[1].draws);
  CHECK(a.chains[1].deviance == b.chains[1].deviance);

  for (const auto& ch : a.chains) {
    CHECK_FALSE(ch.frozen_kernel.empty());
    for (Eigen::Index r = 0; r < ch.draws.rows(); r += 100) {
      auto s = state_from_population(model.spec(), ch.draws.row(r).transpose());
      s.b = Eigen::MatrixXd::Zero(0, 2);
      CHECK(satisfies_invariants(s));
    }
  }
}

TEST_CASE("kernels are frozen after burn-in") {
  const auto data = generate_dataset(fixtures::table1a_design(20, 6));
  const JointModel model(fixtures::model1(), data.subjects);
  Rng init(1);
  MwgSampler mwg(model, initial_state(model, init, false));
  Rng rng(2);
  for (int it = 0; it < 300; ++it) mwg.sweep(rng);
  mwg.end_burn_in();
  const auto frozen = mwg.adaptation().snapshot();
  for (int it = 0; it < 300; ++it) mwg.sweep(rng);
  CHECK(mwg.adaptation().snapshot() == frozen);

  const auto target = standard_normal_target(Eigen::Matrix3d::Identity());
  NutsSampler nuts(target, Eigen::Vector3d::Zero(), 200, 0.8, NutsSettings{});
  for (int it = 0; it < 200; ++it) nuts.transition(it, rng);
  CHECK_FALSE(nuts.adapting());
  const double step = nuts.step_size();
  const Eigen::VectorXd metric = nuts.inv_metric();
  for (int it = 200; it < 400; ++it) nuts.transition(it, rng);
  CHECK(nuts.step_size() == step);
  CHECK(nuts.inv_metric() == metric);
}

TEST_CASE("dual averaging reaches the target acceptance") {
  const auto target = standard_normal_target(Eigen::MatrixXd::Identity(10, 10));
  NutsSampler sampler(target, Eigen::VectorXd::Zero(10), 1000, 0.8, NutsSettings{});
  Rng rng(12);
  double acc = 0.0;
  for (int it = 0; it < 3000; ++it) {
    const auto& t = sampler.transition(it, rng);
    if (it >= 1000) acc += t.accept_stat / 2000.0;
  }
  CHECK(acc == doctest::Approx(0.8).epsilon(0.08));
}

TEST_CASE("samplers agree on a linear-trajectory dataset") {
  const auto data = generate_dataset(fixtures::table1a_design(100, 7));
  const JointModel model(fixtures::model1(), data.subjects);
  SamplerConfig mwg;
  mwg.algorithm = Algorithm::MwG;
  mwg.chains = 2;
  mwg.iterations = 12000;
  mwg.burn_in = 2000;
  mwg.thin = 2;
  mwg.seed = 3;
  SamplerConfig nuts;
  nuts.algorithm = Algorithm::NUTS;
  nuts.chains = 2;
  nuts.iterations = 2000;
  nuts.burn_in = 1000;
  nuts.seed = 4;
  const auto a = run(model, mwg);
  const auto b = run(model, nuts);
  for (std::size_t col : {0, 1, 2}) {
    const auto ra = summarize_parameter("p", a.parameter(col));
    const auto rb = summarize_parameter("p", b.parameter(col));
    const double se = std::sqrt(ra.sd * ra.sd / *ra.ess + rb.sd * rb.sd / *rb.ess);
    CHECK(std::abs(ra.mean - rb.mean) < 3 * se);
  }
  CHECK(b.divergences() < 0.05 * 2 * 1000);
}

TEST_CASE("linear model converges at the simulation preset") {
  const auto data = generate_dataset(fixtures::table1a_design(100, 11));
  const JointModel model(fixtures::model1(), data.subjects);
  auto cfg = preset("model1-sim");
  cfg.seed = 19;
  const auto samples = run(model, cfg);
  for (const auto& row : summarize(samples)) {
    REQUIRE(row.rhat.has_value());
    CHECK_MESSAGE(*row.rhat < 1.05, row.name);
  }
}

TEST_CASE("sampler configuration") {
  SamplerConfig c;
  c.burn_in = c.iterations;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = SamplerConfig{};
  c.thin = 0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = SamplerConfig{};
  c.chains = 0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  const auto t2 = preset("table2");
  CHECK(t2.chains == 3);
  CHECK(t2.iterations == 100000);
  CHECK(t2.burn_in == 10000);
  CHECK(t2.thin == 10);
  const auto m2 = preset("model2-sim");
  CHECK(m2.algorithm == Algorithm::NUTS);
  CHECK(m2.iterations - m2.burn_in == 2000);
  CHECK(m2.burn_in == 1000);
  CHECK(m2.thin == 1);
  CHECK_THROWS_AS(preset("nope"), ConfigError);
}
