#pragma once

#include "balsam/random.hpp"

#include <Eigen/Dense>

#include <functional>
#include <span>

namespace balsam {

/// Unnormalized log target on an unconstrained vector.
using LogDensityFn = std::function<double(const Eigen::VectorXd&)>;

/// Acceptance targets for random-walk blocks.
inline constexpr double kScalarAcceptTarget = 0.44;
inline constexpr double kVectorAcceptTarget = 0.234;

/**
 * Random-walk proposal scale with Robbins-Monro adaptation on the log scale:
 * log s <- log s + k^{-0.6} (acc - target). Once frozen it never changes.
 */
class ProposalScale {
 public:
  ProposalScale() = default;
  ProposalScale(double initial, double target) : log_scale_(std::log(initial)), target_(target) {}

  double scale() const { return std::exp(log_scale_); }
  double target() const { return target_; }
  int updates() const { return updates_; }
  bool frozen() const { return frozen_; }

  void adapt(double accept_prob);
  void freeze() { frozen_ = true; }

 private:
  double log_scale_ = 0.0;
  double target_ = kScalarAcceptTarget;
  int updates_ = 0;
  bool frozen_ = false;
};

/// One Robbins-Monro update per scale with the matching acceptance probability.
void adapt_scales(std::span<ProposalScale> scales, std::span<const double> accept_probs);

/// Metropolis rule: accept with probability min(1, exp(log_ratio)).
bool metropolis_accept(double log_ratio, Rng& rng);

/**
 * One sweep of single-coordinate random-walk Metropolis updates, one
 * proposal scale per coordinate. Returns the number of accepted moves.
 */
int componentwise_rw_sweep(const LogDensityFn& log_density, Eigen::VectorXd& x, double& log_p,
                           std::span<ProposalScale> scales, Rng& rng, bool adapt);

}  // namespace balsam
