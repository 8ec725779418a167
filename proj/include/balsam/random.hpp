#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>

namespace balsam {

/// Purpose tags separating independent random streams.
enum class StreamTag : std::uint64_t {
  Covariates = 1,
  RandomEffects = 2,
  EventTime = 3,
  Censoring = 4,
  Longitudinal = 5,
  Chain = 6,
  Initialization = 7,
  Replicate = 8,
  Test = 99,
};

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

/// Seed of the stream keyed by (seed, tag, index); distinct keys give unrelated streams.
std::uint64_t stream_seed(std::uint64_t seed, StreamTag tag, std::uint64_t index);

/**
 * Random stream with the handful of distributions the samplers need.
 *
 * Streams are created from a key rather than split from a parent so that
 * results do not depend on the order in which subjects or chains run.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, StreamTag tag, std::uint64_t index)
      : engine_(stream_seed(seed, tag, index)) {}

  /// Uniform on the open interval (0, 1).
  double uniform();
  double normal() { return normal_(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double gamma(double shape, double rate);
  double exponential(double rate) { return -std::log(uniform()) / rate; }
  bool bernoulli(double p) { return uniform() < p; }
  Eigen::VectorXd standard_normal(Eigen::Index n);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Draw from the inverse-Wishart with `df` degrees of freedom and scale matrix `scale`.
Eigen::MatrixXd draw_inverse_wishart(Rng& rng, double df, const Eigen::MatrixXd& scale);

/// Draw mean + L * eta with L the lower Cholesky factor of the covariance.
Eigen::VectorXd draw_mvnormal(Rng& rng, const Eigen::VectorXd& mean,
                              const Eigen::MatrixXd& chol_lower);

}  // namespace balsam
