#pragma once

#include "balsam/diagnostics.hpp"
#include "balsam/gradient.hpp"
#include "balsam/mwg.hpp"
#include "balsam/nuts.hpp"
#include "balsam/simulate.hpp"
#include "fixtures.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace calibration {

inline double mean_of(const std::vector<double>& x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

inline double variance_of(const std::vector<double>& x) {
  const double m = mean_of(x);
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

inline double ess_of(const std::vector<double>& x) {
  return balsam::effective_sample_size(balsam::ChainDraws{x})->value;
}

/// Monte Carlo standard errors of the sample mean and the sample variance.
inline std::pair<double, double> mcse(const std::vector<double>& x) {
  const double m = mean_of(x);
  std::vector<double> sq;
  for (double v : x) sq.push_back((v - m) * (v - m));
  return {std::sqrt(variance_of(x) / ess_of(x)), std::sqrt(variance_of(sq) / ess_of(sq))};
}

/// Sample mean and variance both within k standard errors of the targets.
inline bool moments_match(const std::vector<double>& draws, double mean, double var, double k = 3.0) {
  const auto [se_mean, se_var] = mcse(draws);
  return std::abs(mean_of(draws) - mean) <= k * se_mean && std::abs(variance_of(draws) - var) <= k * se_var;
}

/**
 * Gaussian-mean subproblem: survival switched off, Sigma and sigma2 held
 * at their generating values, so mu has a closed-form normal posterior.
 */
struct GaussianMean {
  std::vector<balsam::SubjectRecord> data;
  Eigen::Matrix2d sigma;
  double sigma2 = 0.5;
  Eigen::Vector2d post_mean;
  Eigen::Matrix2d post_cov;

  GaussianMean() {
    sigma << 1.0, 0.3, 0.3, 0.5;
    balsam::Rng rng(101);
    const Eigen::MatrixXd l = Eigen::Matrix2d(sigma.llt().matrixL());
    for (int i = 0; i < 8; ++i) {
      const Eigen::VectorXd b = balsam::draw_mvnormal(rng, Eigen::Vector2d(1.0, -0.5), l);
      std::vector<double> z;
      for (double s : {0.0, 1.0, 2.0}) z.push_back(b[0] + b[1] * s + std::sqrt(sigma2) * rng.normal());
      data.push_back(fixtures::subject(std::to_string(i), 3.0, 0, {0.0}, {0, 1, 2}, z));
    }
    // marginally z_i ~ N(D mu, D Sigma D' + sigma2 I), prior mu ~ N(0, 100 I)
    Eigen::Matrix2d precision = Eigen::Matrix2d::Identity() / 100.0;
    Eigen::Vector2d shift = Eigen::Vector2d::Zero();
    for (const auto& s : data) {
      Eigen::Matrix<double, 3, 2> d;
      d << 1, 0, 1, 1, 1, 2;
      const Eigen::Matrix3d v = d * sigma * d.transpose() + sigma2 * Eigen::Matrix3d::Identity();
      const Eigen::Matrix3d vi = v.inverse();
      precision += d.transpose() * vi * d;
      shift += d.transpose() * vi * Eigen::Vector3d(s.z[0], s.z[1], s.z[2]);
    }
    post_cov = precision.inverse();
    post_mean = post_cov * shift;
  }

  balsam::JointModel model() const {
    return balsam::JointModel(fixtures::model1(), data, balsam::ModelOptions{false, true});
  }

  balsam::ParameterState start() const {
    balsam::ParameterState s;
    s.lambda = 1.0;
    s.beta = Eigen::VectorXd::Zero(1);
    s.alpha = 0.0;
    s.mu = Eigen::Vector2d::Zero();
    s.Sigma = sigma;
    s.sigma2 = sigma2;
    s.b = Eigen::MatrixXd::Zero(8, 2);
    return s;
  }

  /// Draws of (mu1, mu2) from Metropolis-within-Gibbs updating mu and b only.
  std::pair<std::vector<double>, std::vector<double>> mwg_draws(std::uint64_t seed, int burn,
                                                                int keep) const {
    const auto m = model();
    balsam::MwgOptions opt;
    opt.update_lambda = opt.update_beta = opt.update_alpha = false;
    opt.update_Sigma = opt.update_sigma2 = false;
    balsam::MwgSampler sampler(m, start(), opt);
    balsam::Rng rng(seed);
    for (int it = 0; it < burn; ++it) sampler.sweep(rng);
    sampler.end_burn_in();
    std::pair<std::vector<double>, std::vector<double>> out;
    for (int it = 0; it < keep; ++it) {
      sampler.sweep(rng);
      out.first.push_back(sampler.state().mu[0]);
      out.second.push_back(sampler.state().mu[1]);
    }
    return out;
  }

  /// Draws of (mu1, mu2) from NUTS over the mu and random-effect coordinates.
  std::pair<std::vector<double>, std::vector<double>> nuts_draws(std::uint64_t seed, int burn,
                                                                 int keep) const {
    const auto m = model();
    const balsam::ParameterLayout layout(m.spec(), m.size());
    const Eigen::VectorXd full = layout.to_unconstrained(start());
    std::vector<int> free_idx = {layout.mu(), layout.mu() + 1};
    for (int j = layout.random_effects(); j < layout.size(); ++j) free_idx.push_back(j);
    const auto n = static_cast<Eigen::Index>(free_idx.size());
    const balsam::GradientFn target = [&](const Eigen::VectorXd& x, Eigen::VectorXd& grad) {
      Eigen::VectorXd theta = full;
      for (Eigen::Index j = 0; j < n; ++j) theta[free_idx[j]] = x[j];
      Eigen::VectorXd g_full;
      const double v = balsam::grad_log_density_unconstrained(m, layout, theta, g_full);
      grad.resize(n);
      for (Eigen::Index j = 0; j < n; ++j) grad[j] = g_full[free_idx[j]];
      return v;
    };
    balsam::NutsSampler sampler(target, Eigen::VectorXd::Zero(n), burn, 0.8, balsam::NutsSettings{});
    balsam::Rng rng(seed);
    std::pair<std::vector<double>, std::vector<double>> out;
    for (int it = 0; it < burn + keep; ++it) {
      const auto& t = sampler.transition(it, rng);
      if (it < burn) continue;
      out.first.push_back(t.theta[0]);
      out.second.push_back(t.theta[1]);
    }
    return out;
  }
};

}  // namespace calibration
