#pragma once

#include "balsam/model.hpp"
#include "balsam/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace balsam {

enum class Algorithm { MwG, NUTS };

std::string to_string(Algorithm algorithm);
Algorithm parse_algorithm(const std::string& text);

struct SamplerConfig {
  Algorithm algorithm = Algorithm::MwG;
  int chains = 1;
  int iterations = 2000;
  int burn_in = 1000;
  int thin = 1;
  std::uint64_t seed = 1;
  double target_accept = 0.8;
  int max_tree_depth = 10;
  /// Dual-averaging iterations; -1 means all of burn-in.
  int step_size_adapt_iters = -1;
  /// Worker threads for chains; results never depend on it.
  int threads = 1;
  /// NUTS only: sample eta_i with b_i = mu + L eta_i instead of b_i.
  bool noncentered = false;

  int retained_per_chain() const { return (iterations - burn_in) / thin; }
};

void validate(const SamplerConfig& config);

/// Named presets: "table2", "model1-sim", "model2-sim".
SamplerConfig preset(const std::string& name);
std::vector<std::string> preset_names();

struct ChainResult {
  std::uint64_t seed = 0;
  /// Retained draws, one row per draw, columns in population_parameter_names order.
  Eigen::MatrixXd draws;
  std::vector<double> deviance;
  /// Posterior means of the random effects over retained draws.
  Eigen::MatrixXd random_effect_means;
  std::map<std::string, double> acceptance;
  long divergences = 0;
  long burn_in_divergences = 0;
  /// Frozen kernel parameters: proposal scales (MwG) or step size (NUTS).
  std::vector<double> frozen_kernel;
  double step_size = 0.0;
  std::vector<std::string> warnings;
};

struct PosteriorSamples {
  std::vector<std::string> names;
  SamplerConfig config;
  std::vector<ChainResult> chains;

  int retained_per_chain() const { return config.retained_per_chain(); }
  /// Draws of one parameter, chain by chain.
  std::vector<std::vector<double>> parameter(std::size_t column) const;
  std::vector<std::vector<double>> deviance() const;
  /// Random-effect means averaged over chains.
  Eigen::MatrixXd random_effect_means() const;
  ParameterState posterior_mean_state(const ModelSpec& spec) const;
  long divergences() const;
};

/**
 * Data-driven starting point: per-subject least squares shrunk toward the
 * pooled fit, lambda from events over follow-up, beta = alpha = gamma = 0.
 * With `jitter` each quantity gets about 10% relative noise.
 */
ParameterState initial_state(const JointModel& model, Rng& rng, bool jitter);

/// Runs all chains; output is fixed by the seed alone.
PosteriorSamples run(const JointModel& model, const SamplerConfig& config);

}  // namespace balsam
