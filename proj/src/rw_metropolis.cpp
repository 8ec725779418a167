#include "balsam/rw_metropolis.hpp"

#include <algorithm>
#include <cmath>

namespace balsam {

void ProposalScale::adapt(double accept_prob) {
  if (frozen_) return;
  ++updates_;
  const double eta = std::pow(static_cast<double>(updates_), -0.6);
  log_scale_ += eta * (accept_prob - target_);
}

void adapt_scales(std::span<ProposalScale> scales, std::span<const double> accept_probs) {
  const std::size_t n = std::min(scales.size(), accept_probs.size());
  for (std::size_t i = 0; i < n; ++i) scales[i].adapt(accept_probs[i]);
}

bool metropolis_accept(double log_ratio, Rng& rng) {
  if (std::isnan(log_ratio)) return false;
  if (log_ratio >= 0.0) return true;
  return std::log(rng.uniform()) < log_ratio;
}

int componentwise_rw_sweep(const LogDensityFn& log_density, Eigen::VectorXd& x, double& log_p,
                           std::span<ProposalScale> scales, Rng& rng, bool adapt) {
  int accepted = 0;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    auto& sc = scales[static_cast<std::size_t>(j)];
    const double old = x[j];
    x[j] = old + sc.scale() * rng.normal();
    const double proposed = log_density(x);
    const double log_ratio = proposed - log_p;
    const double acc = std::isfinite(log_ratio) ? std::min(1.0, std::exp(log_ratio)) : 0.0;
    if (metropolis_accept(log_ratio, rng)) {
      log_p = proposed;
      ++accepted;
    } else {
      x[j] = old;
    }
    if (adapt) sc.adapt(acc);
  }
  return accepted;
}

}  // namespace balsam
