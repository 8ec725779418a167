#pragma once

#include "balsam/errors.hpp"
#include "balsam/model.hpp"
#include "balsam/random.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace balsam {

struct CovariateLaw {
  enum class Kind { Bernoulli, Normal };
  Kind kind = Kind::Bernoulli;
  double p = 0.5;
  double mean = 0.0;
  double sd = 1.0;

  double draw(Rng& rng) const;
};

struct CensoringSpec {
  double administrative_time = std::numeric_limits<double>::infinity();
  double independent_rate = 0.0;
};

/// Everything needed to generate one joint dataset.
struct SimulationDesign {
  int n = 100;
  ModelSpec spec;
  /// Population block of the truth; `b` is ignored.
  ParameterState truth;
  std::vector<CovariateLaw> covariates;
  std::vector<double> schedule;
  CensoringSpec censoring;
  std::uint64_t seed = 1;
  /// Upper limit of the bracketing search for Model II event times.
  double t_max = 1000.0;
  /// Datasets with a larger fraction of failed inversions are rejected.
  double max_failure_fraction = 0.01;
};

void validate(const SimulationDesign& design);

/// Raised when too many subjects of a dataset could not be generated.
class InversionFailure : public NumericalError {
 public:
  InversionFailure(const std::string& what, int failures)
      : NumericalError(what), failures_(failures) {}
  int failures() const { return failures_; }

 private:
  int failures_;
};

/// b_i = mu + L eta_i with subject-keyed streams; L is the lower Cholesky factor of Sigma.
Eigen::MatrixXd draw_random_effects(const Eigen::VectorXd& mu, const Eigen::MatrixXd& chol_lower,
                                    int n, std::uint64_t seed);
/// Factorizes Sigma first; a Sigma that is not positive definite is rejected.
Eigen::MatrixXd draw_random_effects(const SimulationDesign& design);

/// Closed-form inverse of the Model I cumulative hazard at -log(v); +inf when never reached.
double invert_event_time_model1(double v, double lambda, double linpred, double alpha, double b1);

/// Hazard inputs of one Model II subject.
struct SplineHazardContext {
  const BSplineBasis* basis = nullptr;
  Eigen::VectorXd b;
  double lambda = 1.0;
  double linpred = 0.0;
  double alpha = 0.0;
  int quad_points = 200;

  /// Nested cumulative hazard on [0, t]; +inf on overflow.
  double cumulative_hazard(double t) const;
};

struct RootConfig {
  double t_max = 1000.0;
  double tolerance = 1e-8;
};

struct InversionResult {
  enum class Status { Found, NotBracketed };
  Status status = Status::Found;
  double t = 0.0;
  bool found() const { return status == Status::Found; }
};

/**
 * Solves H(t) = -log(v) for a Model II subject.
 *
 * Doubles an upper bound from t = 1 until H exceeds the target, capped at
 * min(t_max, spline domain end), then bisects to the absolute tolerance.
 */
InversionResult invert_event_time_model2(double v, const SplineHazardContext& ctx,
                                         const RootConfig& cfg);

/// (observed time, event indicator) with censoring at min(administrative, Exp(rate)).
std::pair<double, int> apply_censoring(double event_time, const CensoringSpec& censoring,
                                       Rng& rng);

struct Measurements {
  std::vector<double> times;
  std::vector<double> z;
};

/**
 * Noisy measurements at the schedule times up to t; time 0 is always kept.
 * `mean_at` maps a time to the latent trajectory value.
 */
template <typename MeanFn>
Measurements generate_longitudinal(const std::vector<double>& schedule, double t,
                                   const MeanFn& mean_at, double sigma2, Rng& rng) {
  Measurements out;
  const double sd = std::sqrt(sigma2);
  for (const double s : schedule) {
    if (s > t && s != 0.0) continue;
    out.times.push_back(s);
    out.z.push_back(mean_at(s) + sd * rng.normal());
  }
  return out;
}

/// Latent quantities retained for coverage scoring and round-trip checks.
struct GroundTruth {
  ParameterState state;              ///< population values plus the kept subjects' b
  std::vector<std::string> ids;
  std::vector<double> uniforms;      ///< v_i used by the inversion
  std::vector<double> event_times;   ///< +inf when the event lies beyond the search cap
  std::vector<double> censor_times;
  std::vector<std::string> failed_ids;
};

struct SimulatedDataset {
  std::vector<SubjectRecord> subjects;
  GroundTruth truth;
};

/// Deterministic under the design seed; throws InversionFailure above the failure limit.
SimulatedDataset generate_dataset(const SimulationDesign& design);

}  // namespace balsam
