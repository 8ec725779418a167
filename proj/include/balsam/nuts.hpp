#pragma once

#include "balsam/random.hpp"

#include <Eigen/Dense>

#include <functional>

// REFERENCE: Hoffman, M.D. and Gelman, A., 2014. The No-U-Turn sampler:
// adaptively setting path lengths in Hamiltonian Monte Carlo. JMLR 15.
// The transition below is the multinomial variant with the generalized
// no-U-turn criterion (Betancourt, 2017).

namespace balsam {

/// Log density and its gradient; returns the log density and writes `grad`.
using GradientFn = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct PhasePoint {
  Eigen::VectorXd theta;
  Eigen::VectorXd momentum;
  Eigen::VectorXd grad;
  double log_p = 0.0;
};

/// Kinetic energy 0.5 p' M^{-1} p for a diagonal inverse metric.
double kinetic_energy(const Eigen::VectorXd& momentum, const Eigen::VectorXd& inv_metric);
double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_metric);

/**
 * n_steps leapfrog steps of size `step` (negative integrates backwards).
 * Returns false if the log density or gradient became non-finite; `z`
 * then holds the last evaluated point.
 */
bool leapfrog(const GradientFn& log_p_grad, PhasePoint& z, const Eigen::VectorXd& inv_metric,
              double step, int n_steps);

struct NutsSettings {
  /// Trajectories double up to max_tree_depth + 1 times (0 = a single leapfrog step).
  int max_tree_depth = 10;
  double max_energy_error = 1000.0;
};

struct NutsTransition {
  Eigen::VectorXd theta;
  Eigen::VectorXd grad;
  double log_p = 0.0;
  double accept_stat = 0.0;
  int tree_depth = 0;
  int n_leapfrog = 0;
  bool divergent = false;
};

/**
 * One multinomial NUTS transition from (theta, log_p, grad).
 *
 * Random numbers are consumed in a fixed order: the momentum, then per
 * doubling a direction draw, then the subtree selection draws.
 */
NutsTransition nuts_transition(const GradientFn& log_p_grad, const Eigen::VectorXd& theta,
                               double log_p, const Eigen::VectorXd& grad, double step_size,
                               const Eigen::VectorXd& inv_metric, const NutsSettings& settings,
                               Rng& rng);

/// Nesterov dual averaging of log step size toward a target acceptance statistic.
class DualAveraging {
 public:
  explicit DualAveraging(double target, double gamma = 0.05, double t0 = 10.0,
                         double kappa = 0.75)
      : target_(target), gamma_(gamma), t0_(t0), kappa_(kappa) {}

  void restart(double step_size);
  /// Returns the step size for the next iteration.
  double update(double accept_stat);
  /// Averaged step size used after adaptation.
  double final_step_size() const { return std::exp(log_step_bar_); }

 private:
  double target_, gamma_, t0_, kappa_;
  double mu_ = 0.0;
  double h_bar_ = 0.0;
  double log_step_ = 0.0;
  double log_step_bar_ = 0.0;
  double count_ = 0.0;
};

/// Heuristic initial step size: doubles or halves until one-step acceptance crosses 0.8.
double find_reasonable_step_size(const GradientFn& log_p_grad, const Eigen::VectorXd& theta,
                                 double log_p, const Eigen::VectorXd& grad, double step_size,
                                 const Eigen::VectorXd& inv_metric, Rng& rng);

/**
 * NUTS with step-size and diagonal-metric adaptation.
 *
 * During burn-in the step size follows dual averaging. Draws from the
 * second half of burn-in (up to 85% of it) estimate the diagonal inverse
 * metric, after which dual averaging restarts. Everything is frozen once
 * burn-in ends.
 */
class NutsSampler {
 public:
  NutsSampler(GradientFn log_p_grad, Eigen::VectorXd theta, int burn_in, double target_accept,
              NutsSettings settings, int step_size_adapt_iters = -1);

  /// Performs transition number `iteration` (0-based).
  const NutsTransition& transition(int iteration, Rng& rng);

  const Eigen::VectorXd& theta() const { return current_.theta; }
  double log_p() const { return current_.log_p; }
  double step_size() const { return step_size_; }
  const Eigen::VectorXd& inv_metric() const { return inv_metric_; }
  bool adapting() const { return !frozen_; }
  const NutsTransition& last() const { return current_; }

 private:
  void initialize_step_size(Rng& rng);

  GradientFn log_p_grad_;
  NutsSettings settings_;
  int burn_in_;
  int step_adapt_end_;
  int metric_begin_, metric_end_;
  DualAveraging dual_;
  NutsTransition current_;
  Eigen::VectorXd inv_metric_;
  double step_size_ = 1.0;
  bool initialized_ = false;
  bool frozen_ = false;
  // Welford accumulators for the metric window.
  long metric_count_ = 0;
  Eigen::VectorXd metric_mean_, metric_m2_;
};

}  // namespace balsam
