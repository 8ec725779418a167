#include "balsam/random.hpp"

#include "balsam/errors.hpp"

#include <cmath>

namespace balsam {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, StreamTag tag, std::uint64_t index) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ static_cast<std::uint64_t>(tag));
  return mix64(h ^ mix64(index + 0x632BE59BD9B4E019ULL));
}

double Rng::uniform() {
  // 53 random bits mapped to the midpoints of 2^-53 cells: never 0 or 1.
  return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::gamma(double shape, double rate) {
  std::gamma_distribution<double> dist(shape, 1.0 / rate);
  return dist(engine_);
}

Eigen::VectorXd Rng::standard_normal(Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
  return v;
}

Eigen::MatrixXd draw_inverse_wishart(Rng& rng, double df, const Eigen::MatrixXd& scale) {
  const Eigen::Index k = scale.rows();
  if (!(df > static_cast<double>(k) - 1.0)) {
    throw ConfigError("inverse-Wishart degrees of freedom must exceed dimension - 1");
  }
  // Sigma^{-1} ~ Wishart(df, scale^{-1}) by the Bartlett decomposition.
  Eigen::LLT<Eigen::MatrixXd> llt_scale(scale);
  if (llt_scale.info() != Eigen::Success) {
    throw NumericalError("inverse-Wishart scale matrix is not positive definite");
  }
  const Eigen::MatrixXd scale_inv = llt_scale.solve(Eigen::MatrixXd::Identity(k, k));
  Eigen::LLT<Eigen::MatrixXd> llt_inv(scale_inv);
  const Eigen::MatrixXd l = llt_inv.matrixL();

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    a(i, i) = std::sqrt(2.0 * rng.gamma(0.5 * (df - static_cast<double>(i)), 1.0));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const Eigen::MatrixXd la = l * a;  // precision = la * la^T
  const Eigen::MatrixXd la_inv =
      la.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(k, k));
  Eigen::MatrixXd sigma = la_inv.transpose() * la_inv;
  return 0.5 * (sigma + sigma.transpose());
}

Eigen::VectorXd draw_mvnormal(Rng& rng, const Eigen::VectorXd& mean,
                              const Eigen::MatrixXd& chol_lower) {
  return mean + chol_lower.triangularView<Eigen::Lower>() * rng.standard_normal(mean.size());
}

}  // namespace balsam
