#include "balsam/nuts.hpp"

#include "balsam/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace balsam {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

bool no_u_turn(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
               const Eigen::VectorXd& rho) {
  return p_sharp_plus.dot(rho) > 0.0 && p_sharp_minus.dot(rho) > 0.0;
}

/// Recursive multinomial tree construction with shared bookkeeping.
struct TreeBuilder {
  const GradientFn& log_p_grad;
  const Eigen::VectorXd& inv_metric;
  double step;
  double h0;
  double max_energy_error;
  Rng& rng;
  int n_leapfrog = 0;
  double sum_metro_prob = 0.0;
  bool divergent = false;

  bool build(int depth, PhasePoint& z, PhasePoint& z_propose, Eigen::VectorXd& p_sharp_beg,
             Eigen::VectorXd& p_sharp_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg,
             Eigen::VectorXd& p_end, double& log_sum_weight) {
    if (depth == 0) {
      const bool finite = leapfrog(log_p_grad, z, inv_metric, step, 1);
      ++n_leapfrog;
      double h = finite ? hamiltonian(z, inv_metric) : kInf;
      if (std::isnan(h)) h = kInf;
      if (h - h0 > max_energy_error) divergent = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      sum_metro_prob += (h0 - h > 0.0) ? 1.0 : std::exp(h0 - h);
      z_propose = z;
      p_sharp_beg = inv_metric.cwiseProduct(z.momentum);
      p_sharp_end = p_sharp_beg;
      rho += z.momentum;
      p_beg = z.momentum;
      p_end = p_beg;
      return !divergent;
    }

    const Eigen::Index d = z.theta.size();
    double log_sum_weight_init = -kInf;
    Eigen::VectorXd p_init_end(d), p_sharp_init_end(d);
    Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(d);
    if (!build(depth - 1, z, z_propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg,
               p_init_end, log_sum_weight_init)) {
      return false;
    }

    PhasePoint z_propose_final = z;
    double log_sum_weight_final = -kInf;
    Eigen::VectorXd p_final_beg(d), p_sharp_final_beg(d);
    Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(d);
    if (!build(depth - 1, z, z_propose_final, p_sharp_final_beg, p_sharp_end, rho_final,
               p_final_beg, p_end, log_sum_weight_final)) {
      return false;
    }

    const double log_sum_weight_subtree = log_sum_exp(log_sum_weight_init, log_sum_weight_final);
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);
    if (log_sum_weight_final > log_sum_weight_subtree) {
      z_propose = z_propose_final;
    } else if (rng.uniform() < std::exp(log_sum_weight_final - log_sum_weight_subtree)) {
      z_propose = z_propose_final;
    }

    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = no_u_turn(p_sharp_beg, p_sharp_end, rho_subtree);
    persist = persist && no_u_turn(p_sharp_beg, p_sharp_final_beg, rho_init + p_final_beg);
    persist = persist && no_u_turn(p_sharp_init_end, p_sharp_end, rho_final + p_init_end);
    return persist;
  }
};

}  // namespace

double kinetic_energy(const Eigen::VectorXd& momentum, const Eigen::VectorXd& inv_metric) {
  return 0.5 * momentum.cwiseProduct(inv_metric).dot(momentum);
}

double hamiltonian(const PhasePoint& z, const Eigen::VectorXd& inv_metric) {
  return -z.log_p + kinetic_energy(z.momentum, inv_metric);
}

bool leapfrog(const GradientFn& log_p_grad, PhasePoint& z, const Eigen::VectorXd& inv_metric,
              double step, int n_steps) {
  for (int s = 0; s < n_steps; ++s) {
    z.momentum += 0.5 * step * z.grad;
    z.theta += step * inv_metric.cwiseProduct(z.momentum);
    try {
      z.log_p = log_p_grad(z.theta, z.grad);
    } catch (const NumericalError&) {
      z.log_p = -kInf;
      return false;
    }
    if (!std::isfinite(z.log_p) || !z.grad.allFinite()) return false;
    z.momentum += 0.5 * step * z.grad;
  }
  return true;
}

NutsTransition nuts_transition(const GradientFn& log_p_grad, const Eigen::VectorXd& theta,
                               double log_p, const Eigen::VectorXd& grad, double step_size,
                               const Eigen::VectorXd& inv_metric, const NutsSettings& settings,
                               Rng& rng) {
  const Eigen::Index d = theta.size();
  PhasePoint z{theta, Eigen::VectorXd(d), grad, log_p};
  for (Eigen::Index j = 0; j < d; ++j) z.momentum[j] = rng.normal() / std::sqrt(inv_metric[j]);
  const double h0 = hamiltonian(z, inv_metric);

  PhasePoint z_fwd = z, z_bck = z, z_sample = z, z_propose = z;
  Eigen::VectorXd p_fwd_fwd = z.momentum, p_fwd_bck = z.momentum;
  Eigen::VectorXd p_bck_fwd = z.momentum, p_bck_bck = z.momentum;
  const Eigen::VectorXd p_sharp0 = inv_metric.cwiseProduct(z.momentum);
  Eigen::VectorXd p_sharp_fwd_fwd = p_sharp0, p_sharp_fwd_bck = p_sharp0;
  Eigen::VectorXd p_sharp_bck_fwd = p_sharp0, p_sharp_bck_bck = p_sharp0;
  Eigen::VectorXd rho = z.momentum;
  double log_sum_weight = 0.0;

  TreeBuilder builder{log_p_grad, inv_metric, step_size, h0, settings.max_energy_error, rng};
  int depth = 0;
  while (depth <= settings.max_tree_depth) {
    Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(d), rho_bck = Eigen::VectorXd::Zero(d);
    double log_sum_weight_subtree = -kInf;
    bool valid = false;
    if (rng.uniform() > 0.5) {
      rho_bck = rho;
      p_bck_fwd = p_fwd_bck;
      p_sharp_bck_fwd = p_sharp_fwd_bck;
      builder.step = step_size;
      valid = builder.build(depth, z_fwd, z_propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd,
                            p_fwd_bck, p_fwd_fwd, log_sum_weight_subtree);
    } else {
      rho_fwd = rho;
      p_fwd_bck = p_bck_fwd;
      p_sharp_fwd_bck = p_sharp_bck_fwd;
      builder.step = -step_size;
      valid = builder.build(depth, z_bck, z_propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck,
                            p_bck_fwd, p_bck_bck, log_sum_weight_subtree);
    }
    if (!valid) break;
    ++depth;

    if (log_sum_weight_subtree > log_sum_weight) {
      z_sample = z_propose;
    } else if (rng.uniform() < std::exp(log_sum_weight_subtree - log_sum_weight)) {
      z_sample = z_propose;
    }
    log_sum_weight = log_sum_exp(log_sum_weight, log_sum_weight_subtree);

    rho = rho_bck + rho_fwd;
    bool persist = no_u_turn(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
    persist = persist && no_u_turn(p_sharp_bck_bck, p_sharp_fwd_bck, rho_bck + p_fwd_bck);
    persist = persist && no_u_turn(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_fwd + p_bck_fwd);
    if (!persist) break;
  }

  NutsTransition out;
  out.theta = z_sample.theta;
  out.grad = z_sample.grad;
  out.log_p = z_sample.log_p;
  out.tree_depth = depth;
  out.n_leapfrog = builder.n_leapfrog;
  out.divergent = builder.divergent;
  out.accept_stat = builder.n_leapfrog > 0 ? builder.sum_metro_prob / builder.n_leapfrog : 0.0;
  return out;
}

void DualAveraging::restart(double step_size) {
  mu_ = std::log(10.0 * step_size);
  h_bar_ = 0.0;
  log_step_ = std::log(step_size);
  log_step_bar_ = 0.0;
  count_ = 0.0;
}

double DualAveraging::update(double accept_stat) {
  count_ += 1.0;
  const double eta = 1.0 / (count_ + t0_);
  h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept_stat);
  log_step_ = mu_ - std::sqrt(count_) / gamma_ * h_bar_;
  const double x = std::pow(count_, -kappa_);
  log_step_bar_ = x * log_step_ + (1.0 - x) * log_step_bar_;
  return std::exp(log_step_);
}

double find_reasonable_step_size(const GradientFn& log_p_grad, const Eigen::VectorXd& theta,
                                 double log_p, const Eigen::VectorXd& grad, double step_size,
                                 const Eigen::VectorXd& inv_metric, Rng& rng) {
  int direction = 0;
  for (int attempt = 0; attempt < 100; ++attempt) {
    PhasePoint z{theta, Eigen::VectorXd(theta.size()), grad, log_p};
    for (Eigen::Index j = 0; j < theta.size(); ++j) {
      z.momentum[j] = rng.normal() / std::sqrt(inv_metric[j]);
    }
    const double h0 = hamiltonian(z, inv_metric);
    const bool finite = leapfrog(log_p_grad, z, inv_metric, step_size, 1);
    double h = finite ? hamiltonian(z, inv_metric) : kInf;
    if (std::isnan(h)) h = kInf;
    const int new_direction = (h0 - h > std::log(0.8)) ? 1 : -1;
    if (direction == 0) direction = new_direction;
    if (new_direction != direction) break;
    step_size = direction == 1 ? 2.0 * step_size : 0.5 * step_size;
    if (step_size > 1e7 || step_size < 1e-12) break;
  }
  return step_size;
}

NutsSampler::NutsSampler(GradientFn log_p_grad, Eigen::VectorXd theta, int burn_in,
                         double target_accept, NutsSettings settings, int step_size_adapt_iters)
    : log_p_grad_(std::move(log_p_grad)),
      settings_(settings),
      burn_in_(std::max(0, burn_in)),
      dual_(target_accept) {
  step_adapt_end_ =
      step_size_adapt_iters < 0 ? burn_in_ : std::min(step_size_adapt_iters, burn_in_);
  metric_begin_ = burn_in_ / 2;
  metric_end_ = static_cast<int>(0.85 * burn_in_);
  if (burn_in_ < 40 || metric_end_ >= step_adapt_end_) metric_begin_ = metric_end_ = -1;

  current_.theta = std::move(theta);
  current_.log_p = log_p_grad_(current_.theta, current_.grad);
  if (!std::isfinite(current_.log_p) || !current_.grad.allFinite()) {
    throw NumericalError("NUTS initial point has a non-finite log density or gradient");
  }
  inv_metric_ = Eigen::VectorXd::Ones(current_.theta.size());
  metric_mean_ = Eigen::VectorXd::Zero(current_.theta.size());
  metric_m2_ = Eigen::VectorXd::Zero(current_.theta.size());
}

void NutsSampler::initialize_step_size(Rng& rng) {
  step_size_ = find_reasonable_step_size(log_p_grad_, current_.theta, current_.log_p,
                                         current_.grad, step_size_, inv_metric_, rng);
  dual_.restart(step_size_);
}

const NutsTransition& NutsSampler::transition(int iteration, Rng& rng) {
  if (!initialized_) {
    initialize_step_size(rng);
    initialized_ = true;
    if (burn_in_ == 0) frozen_ = true;
  }
  NutsTransition next = nuts_transition(log_p_grad_, current_.theta, current_.log_p,
                                        current_.grad, step_size_, inv_metric_, settings_, rng);
  current_ = std::move(next);

  if (frozen_ || iteration >= burn_in_) {
    frozen_ = true;
    return current_;
  }
  if (iteration < step_adapt_end_) step_size_ = dual_.update(current_.accept_stat);
  if (iteration >= metric_begin_ && iteration < metric_end_) {
    ++metric_count_;
    const Eigen::VectorXd delta = current_.theta - metric_mean_;
    metric_mean_ += delta / static_cast<double>(metric_count_);
    metric_m2_ += delta.cwiseProduct(current_.theta - metric_mean_);
  }
  if (iteration + 1 == metric_end_ && metric_count_ >= 10) {
    const double n = static_cast<double>(metric_count_);
    const Eigen::VectorXd var = metric_m2_ / (n - 1.0);
    inv_metric_ = (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
    initialize_step_size(rng);
  }
  if (iteration + 1 == step_adapt_end_) step_size_ = dual_.final_step_size();
  if (iteration + 1 == burn_in_) frozen_ = true;
  return current_;
}

}  // namespace balsam
