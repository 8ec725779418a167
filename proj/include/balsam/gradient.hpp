#pragma once

#include "balsam/model.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace balsam {

/**
 * Unconstrained coordinates of a ParameterState.
 *
 * Layout: log lambda, beta, alpha, gamma (Model Ia only), mu, the lower
 * Cholesky factor of Sigma row-wise with log-transformed diagonal,
 * log sigma2, then the random effects subject by subject.
 */
class ParameterLayout {
 public:
  ParameterLayout(const ModelSpec& spec, int num_subjects);

  int size() const { return size_; }
  int num_subjects() const { return n_; }
  int dim() const { return k_; }
  int num_covariates() const { return p_; }

  int log_lambda() const { return 0; }
  int beta() const { return 1; }
  int alpha() const { return 1 + p_; }
  /// -1 when the model has no gamma.
  int gamma() const { return has_gamma_ ? 2 + p_ : -1; }
  int mu() const { return mu_; }
  int cholesky() const { return chol_; }
  int log_sigma2() const { return chol_ + k_ * (k_ + 1) / 2; }
  int random_effects() const { return log_sigma2() + 1; }
  int random_effect(int i) const { return random_effects() + i * k_; }

  Eigen::VectorXd to_unconstrained(const ParameterState& state) const;
  ParameterState to_state(const Eigen::VectorXd& theta) const;
  /// log |d(constrained) / d(theta)| for lambda, sigma2 and Sigma.
  double log_jacobian(const Eigen::VectorXd& theta) const;
  std::vector<std::string> names() const;

 private:
  int n_, p_, k_;
  bool has_gamma_;
  int mu_, chol_, size_;
};

/// Log posterior plus the log Jacobian, as a function of unconstrained coordinates.
double log_density_unconstrained(const JointModel& model, const ParameterLayout& layout,
                                 const Eigen::VectorXd& theta);

/**
 * Gradient of log_density_unconstrained, returning the density value.
 *
 * The gradient is exact for the discretized objective: the quadrature
 * grid is fixed and the trapezoid sums are differentiated directly.
 * Non-finite components raise NumericalError naming the parameter.
 */
double grad_log_density_unconstrained(const JointModel& model, const ParameterLayout& layout,
                                      const Eigen::VectorXd& theta, Eigen::VectorXd& grad);

/**
 * Non-centered coordinates: the random-effect block holds eta_i with
 * b_i = mu + L eta_i, L the Cholesky factor in the same vector.
 */
Eigen::VectorXd to_noncentered(const ParameterLayout& layout, const Eigen::VectorXd& theta);
Eigen::VectorXd to_centered(const ParameterLayout& layout, const Eigen::VectorXd& theta_nc);

/// Log density and gradient in non-centered coordinates, including |db/deta|.
double grad_log_density_noncentered(const JointModel& model, const ParameterLayout& layout,
                                    const Eigen::VectorXd& theta_nc, Eigen::VectorXd& grad);

/// Same gradient evaluated at a constrained state.
Eigen::VectorXd grad_log_posterior(const JointModel& model, const ParameterState& state);

}  // namespace balsam
