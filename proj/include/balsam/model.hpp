#pragma once

#include "balsam/splines.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace balsam {

/// I: linear trajectory, Ia: linear plus gamma * x, II: B-spline trajectory.
enum class ModelKind { I, Ia, II };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

/**
 * Prior hyperparameters.
 *
 * lambda ~ Gamma(shape, rate); beta, alpha, gamma and mu components are
 * zero-mean normals with the given standard deviations; sigma2 ~
 * InvGamma(shape, rate); Sigma ~ InvWishart(wishart_df, wishart_scale).
 * A zero `wishart_df` or empty `wishart_scale` resolves to K + 1 and the
 * identity for the random-effect dimension K.
 */
struct PriorSpec {
  double lambda_shape = 0.01;
  double lambda_rate = 0.01;
  double beta_sd = 10.0;
  double alpha_sd = 10.0;
  double gamma_sd = 10.0;
  double mu_sd = 10.0;
  double sigma2_shape = 0.01;
  double sigma2_rate = 0.01;
  double wishart_df = 0.0;
  Eigen::MatrixXd wishart_scale;
};

struct ModelSpec {
  ModelKind kind = ModelKind::I;
  int num_covariates = 1;
  /// Column of x entering the longitudinal mean with coefficient gamma (Model Ia).
  std::optional<int> longitudinal_covariate;
  /// Trajectory basis (Model II).
  std::optional<SplineConfig> spline;
  PriorSpec priors;
  /// Quadrature sub-intervals per subject for the nested cumulative hazard.
  int quad_points = 200;

  int random_effect_dim() const;
  bool has_gamma() const { return kind == ModelKind::Ia; }
};

/// Validates kind-dependent fields and fills resolvable prior defaults.
ModelSpec resolve(ModelSpec spec);
void validate(const ModelSpec& spec);

struct SubjectRecord {
  std::string id;
  double t = 0.0;  ///< observed time min(event, censoring)
  int delta = 0;   ///< 1 when the event was observed
  Eigen::VectorXd x;
  std::vector<double> times;
  std::vector<double> z;
};

/// Throws DataError when a record violates its invariants.
void validate(const SubjectRecord& subject, int num_covariates);

/// One point of the joint parameter space; b holds one row per subject.
struct ParameterState {
  double lambda = 1.0;
  Eigen::VectorXd beta;
  double alpha = 0.0;
  double gamma = 0.0;
  Eigen::VectorXd mu;
  Eigen::MatrixXd Sigma;
  double sigma2 = 1.0;
  Eigen::MatrixXd b;
};

bool satisfies_invariants(const ParameterState& state);

/// Population parameters in reporting order: lambda, beta, alpha, mu, gamma, sigma2, Sigma (lower, row-wise).
std::vector<std::string> population_parameter_names(const ModelSpec& spec);
Eigen::VectorXd population_vector(const ModelSpec& spec, const ParameterState& state);
/// Inverse of population_vector; random effects are left empty.
ParameterState state_from_population(const ModelSpec& spec, const Eigen::VectorXd& v);

/// Per-subject quantities that depend only on the data and the model spec.
struct SubjectCache {
  Eigen::MatrixXd design;       ///< n_i x K, longitudinal mean = design * b_i (+ gamma * x)
  Eigen::MatrixXd slope_basis;  ///< (m + 1) x K, B'(s_k) on the grid over [0, t_i] (Model II)
  double step = 0.0;            ///< t_i / m
};

SubjectCache prepare_subject(const ModelSpec& spec, const SubjectRecord& subject,
                             const BSplineBasis* basis);

/// Switches for sub-problems; the full model keeps both likelihood parts.
struct ModelOptions {
  bool include_survival = true;
  bool include_longitudinal = true;
};

/**
 * Joint longitudinal-survival model on a fixed dataset.
 *
 * Random effects are parameters, so the posterior is evaluated with b
 * held in the state. The survival part of Model II is evaluated on the
 * fixed per-subject grid of `quad_points` sub-intervals.
 */
class JointModel {
 public:
  JointModel(ModelSpec spec, std::vector<SubjectRecord> subjects, ModelOptions options = {});

  const ModelSpec& spec() const { return spec_; }
  const ModelOptions& options() const { return options_; }
  std::span<const SubjectRecord> subjects() const { return subjects_; }
  const SubjectRecord& subject(int i) const { return subjects_[static_cast<std::size_t>(i)]; }
  const SubjectCache& cache(int i) const { return caches_[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(subjects_.size()); }
  int random_effect_dim() const { return spec_.random_effect_dim(); }
  const BSplineBasis* basis() const { return basis_ ? &*basis_ : nullptr; }

  /**
   * Arc-length profile of subject i's trajectory at t_i.
   *
   * Model I/Ia: a single value sqrt(1 + b1^2). Model II: G at the m + 1
   * grid nodes. The profile depends on b_i only, so samplers can reuse it
   * while lambda, beta and alpha move.
   */
  void arc_profile(const Eigen::Ref<const Eigen::VectorXd>& b_i, int i,
                   std::vector<double>& profile) const;
  /// Cumulative hazard H_i(t_i) for the given profile.
  double cumulative_hazard_from_profile(double lambda, const Eigen::VectorXd& beta, double alpha,
                                        int i, std::span<const double> profile) const;
  double log_lik_survival_from_profile(double lambda, const Eigen::VectorXd& beta, double alpha,
                                       int i, std::span<const double> profile) const;

  double log_lik_survival(const ParameterState& state, int i) const;
  double log_lik_longitudinal(const ParameterState& state, int i) const;
  /// Longitudinal residual sum of squares and count for subject i.
  double residual_sum_squares(const ParameterState& state, int i) const;
  double log_prior_random_effects(const ParameterState& state, int i) const;

  /// Population priors (lambda, beta, alpha, gamma, mu, sigma2, Sigma).
  double log_prior(const ParameterState& state) const;
  /// Sum of survival, longitudinal and random-effect terms over subjects.
  double log_likelihood(const ParameterState& state) const;
  /// Minus infinity for states outside the support.
  double log_posterior(const ParameterState& state) const;
  double deviance(const ParameterState& state) const { return -2.0 * log_likelihood(state); }

  /// Linear predictor x_i' beta.
  double linpred(const Eigen::VectorXd& beta, int i) const;

 private:
  ModelSpec spec_;
  ModelOptions options_;
  std::vector<SubjectRecord> subjects_;
  std::optional<BSplineBasis> basis_;
  std::vector<SubjectCache> caches_;
};

// Scalar helpers.

/// (e^a - 1) / a with the series branch near zero.
double expm1_ratio(double a);
/// d/da of expm1_ratio.
double expm1_ratio_derivative(double a);

/// Multivariate normal log-density with Sigma = L L^T.
double mvnormal_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                            const Eigen::LLT<Eigen::MatrixXd>& chol);

/// Model I arc length t * sqrt(1 + b1^2).
double arc_length_model1(double b1, double t);
/// Trapezoid arc length of the spline trajectory sum_l b_l B_l over [0, t].
double arc_length_model2(const Eigen::VectorXd& b, const SplineConfig& spline, double t, int m);

// Single-subject evaluations; `state.b` must hold a row for `subject_index`.
double log_hazard(const ModelSpec& spec, const ParameterState& state, const SubjectRecord& subject,
                  int subject_index, double s);
double log_survival(const ModelSpec& spec, const ParameterState& state,
                    const SubjectRecord& subject, int subject_index, double s);
double log_lik_survival(const ModelSpec& spec, const ParameterState& state,
                        const SubjectRecord& subject, int subject_index);
double log_lik_longitudinal(const ModelSpec& spec, const ParameterState& state,
                            const SubjectRecord& subject, int subject_index);
double log_prior_random_effects(const ParameterState& state, int subject_index);
double log_posterior(const ModelSpec& spec, const ParameterState& state,
                     const std::vector<SubjectRecord>& data);

}  // namespace balsam
