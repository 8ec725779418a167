#include "balsam/model.hpp"

#include "balsam/errors.hpp"
#include "balsam/quadrature.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <numbers>

namespace balsam {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double normal_log_density(double x, double sd) {
  return -0.5 * kLog2Pi - std::log(sd) - 0.5 * (x / sd) * (x / sd);
}

double log_multivariate_gamma(double a, int k) {
  double out = 0.25 * k * (k - 1) * std::log(std::numbers::pi);
  for (int j = 0; j < k; ++j) out += std::lgamma(a - 0.5 * j);
  return out;
}

bool positive_finite(double v) { return v > 0.0 && std::isfinite(v); }

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::I: return "I";
    case ModelKind::Ia: return "Ia";
    case ModelKind::II: return "II";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& text) {
  if (text == "I") return ModelKind::I;
  if (text == "Ia") return ModelKind::Ia;
  if (text == "II") return ModelKind::II;
  throw ConfigError(fmt::format("unknown model kind '{}' (expected I, Ia or II)", text));
}

int ModelSpec::random_effect_dim() const {
  if (kind == ModelKind::II) return spline ? basis_count(*spline) : 0;
  return 2;
}

ModelSpec resolve(ModelSpec spec) {
  if (spec.kind == ModelKind::II && !spec.spline) {
    throw ConfigError("Model II needs a spline configuration");
  }
  const int k = spec.random_effect_dim();
  if (spec.priors.wishart_df == 0.0) spec.priors.wishart_df = k + 1.0;
  if (spec.priors.wishart_scale.size() == 0) {
    spec.priors.wishart_scale = Eigen::MatrixXd::Identity(k, k);
  }
  validate(spec);
  return spec;
}

void validate(const ModelSpec& spec) {
  if (spec.num_covariates < 0) throw ConfigError("number of covariates must be >= 0");
  if (spec.quad_points < 1) throw ConfigError("quad_points must be >= 1");
  if (spec.kind == ModelKind::Ia) {
    if (!spec.longitudinal_covariate) {
      throw ConfigError("Model Ia needs longitudinal_covariate_index");
    }
    if (*spec.longitudinal_covariate < 0 || *spec.longitudinal_covariate >= spec.num_covariates) {
      throw ConfigError(fmt::format("longitudinal_covariate_index {} out of range [0, {})",
                                    *spec.longitudinal_covariate, spec.num_covariates));
    }
  } else if (spec.longitudinal_covariate) {
    throw ConfigError("longitudinal_covariate_index is only valid for Model Ia");
  }
  if (spec.kind == ModelKind::II) {
    if (!spec.spline) throw ConfigError("Model II needs a spline configuration");
    validate(*spec.spline);
    if (spec.spline->start != 0.0) {
      throw ConfigError("Model II spline domain must start at time 0");
    }
  } else if (spec.spline) {
    throw ConfigError("spline configuration is only valid for Model II");
  }

  const auto& p = spec.priors;
  const int k = spec.random_effect_dim();
  for (auto [name, v] : {std::pair{"lambda_shape", p.lambda_shape}, {"lambda_rate", p.lambda_rate},
                         {"beta_sd", p.beta_sd}, {"alpha_sd", p.alpha_sd},
                         {"gamma_sd", p.gamma_sd}, {"mu_sd", p.mu_sd},
                         {"sigma2_shape", p.sigma2_shape}, {"sigma2_rate", p.sigma2_rate}}) {
    if (!positive_finite(v)) throw ConfigError(fmt::format("prior {} must be > 0, got {}", name, v));
  }
  if (!(p.wishart_df > k - 1.0)) {
    throw ConfigError(fmt::format("prior wishart_df must exceed {} , got {}", k - 1, p.wishart_df));
  }
  if (p.wishart_scale.rows() != k || p.wishart_scale.cols() != k) {
    throw ConfigError(fmt::format("prior wishart_scale must be {}x{}", k, k));
  }
  if (!p.wishart_scale.isApprox(p.wishart_scale.transpose(), 1e-12) ||
      Eigen::LLT<Eigen::MatrixXd>(p.wishart_scale).info() != Eigen::Success) {
    throw ConfigError("prior wishart_scale must be symmetric positive definite");
  }
}

void validate(const SubjectRecord& s, int num_covariates) {
  const std::string who = s.id.empty() ? std::string("<unnamed>") : s.id;
  if (!(s.t >= 0.0) || !std::isfinite(s.t)) {
    throw DataError(fmt::format("subject {}: observed time must be >= 0, got {}", who, s.t));
  }
  if (s.delta != 0 && s.delta != 1) {
    throw DataError(fmt::format("subject {}: event indicator must be 0 or 1", who));
  }
  if (s.x.size() != num_covariates) {
    throw DataError(fmt::format("subject {}: expected {} covariates, got {}", who, num_covariates,
                                s.x.size()));
  }
  if (s.times.empty() || s.times.size() != s.z.size()) {
    throw DataError(fmt::format("subject {}: needs >= 1 measurement with matching times/values",
                                who));
  }
  constexpr double kTimeTolerance = 1e-9;
  for (std::size_t j = 0; j < s.times.size(); ++j) {
    if (!(s.times[j] >= 0.0) || s.times[j] > s.t + kTimeTolerance) {
      throw DataError(fmt::format("subject {}: measurement time {} outside [0, {}]", who,
                                  s.times[j], s.t));
    }
    if (j > 0 && !(s.times[j] > s.times[j - 1])) {
      throw DataError(fmt::format("subject {}: measurement times not strictly increasing", who));
    }
    if (!std::isfinite(s.z[j])) {
      throw DataError(fmt::format("subject {}: non-finite measurement value", who));
    }
  }
}

bool satisfies_invariants(const ParameterState& state) {
  if (!positive_finite(state.lambda) || !positive_finite(state.sigma2)) return false;
  if (!std::isfinite(state.alpha) || !std::isfinite(state.gamma)) return false;
  if (!state.beta.allFinite() || !state.mu.allFinite() || !state.b.allFinite()) return false;
  if (state.Sigma.rows() != state.mu.size() || state.Sigma.cols() != state.mu.size()) return false;
  if (!state.Sigma.isApprox(state.Sigma.transpose(), 1e-10)) return false;
  return Eigen::LLT<Eigen::MatrixXd>(state.Sigma).info() == Eigen::Success;
}

std::vector<std::string> population_parameter_names(const ModelSpec& spec) {
  std::vector<std::string> names{"lambda"};
  for (int p = 0; p < spec.num_covariates; ++p) names.push_back(fmt::format("beta{}", p + 1));
  names.emplace_back("alpha");
  const int k = spec.random_effect_dim();
  for (int j = 0; j < k; ++j) names.push_back(fmt::format("mu{}", j + 1));
  if (spec.has_gamma()) names.emplace_back("gamma");
  names.emplace_back("sigma2");
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c <= r; ++c) names.push_back(fmt::format("Sigma{}{}", r + 1, c + 1));
  }
  return names;
}

Eigen::VectorXd population_vector(const ModelSpec& spec, const ParameterState& state) {
  const int k = spec.random_effect_dim();
  const int size = static_cast<int>(population_parameter_names(spec).size());
  Eigen::VectorXd v(size);
  int at = 0;
  v[at++] = state.lambda;
  for (int p = 0; p < spec.num_covariates; ++p) v[at++] = state.beta[p];
  v[at++] = state.alpha;
  for (int j = 0; j < k; ++j) v[at++] = state.mu[j];
  if (spec.has_gamma()) v[at++] = state.gamma;
  v[at++] = state.sigma2;
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c <= r; ++c) v[at++] = state.Sigma(r, c);
  }
  return v;
}

ParameterState state_from_population(const ModelSpec& spec, const Eigen::VectorXd& v) {
  const int k = spec.random_effect_dim();
  ParameterState state;
  int at = 0;
  state.lambda = v[at++];
  state.beta.resize(spec.num_covariates);
  for (int p = 0; p < spec.num_covariates; ++p) state.beta[p] = v[at++];
  state.alpha = v[at++];
  state.mu.resize(k);
  for (int j = 0; j < k; ++j) state.mu[j] = v[at++];
  if (spec.has_gamma()) state.gamma = v[at++];
  state.sigma2 = v[at++];
  state.Sigma.resize(k, k);
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c <= r; ++c) state.Sigma(r, c) = state.Sigma(c, r) = v[at++];
  }
  return state;
}

SubjectCache prepare_subject(const ModelSpec& spec, const SubjectRecord& subject,
                             const BSplineBasis* basis) {
  SubjectCache cache;
  const auto n = static_cast<Eigen::Index>(subject.times.size());
  const int k = spec.random_effect_dim();
  cache.design.resize(n, k);
  if (spec.kind == ModelKind::II) {
    if (!basis) throw ConfigError("Model II needs a spline basis");
    if (subject.t > basis->config().end) {
      throw DomainError(fmt::format("subject {}: observed time {} beyond spline domain end {}",
                                    subject.id, subject.t, basis->config().end));
    }
    Eigen::VectorXd v;
    for (Eigen::Index j = 0; j < n; ++j) {
      basis->eval_into(subject.times[static_cast<std::size_t>(j)], &v, nullptr);
      cache.design.row(j) = v.transpose();
    }
    const Grid grid{subject.t, spec.quad_points};
    cache.step = subject.t / spec.quad_points;
    cache.slope_basis.resize(spec.quad_points + 1, k);
    Eigen::VectorXd d;
    for (int q = 0; q <= spec.quad_points; ++q) {
      basis->eval_into(grid.node(q), nullptr, &d);
      cache.slope_basis.row(q) = d.transpose();
    }
  } else {
    for (Eigen::Index j = 0; j < n; ++j) {
      cache.design(j, 0) = 1.0;
      cache.design(j, 1) = subject.times[static_cast<std::size_t>(j)];
    }
    cache.step = subject.t;
  }
  return cache;
}

double expm1_ratio(double a) {
  if (std::abs(a) < 1e-8) return 1.0 + 0.5 * a;
  return std::expm1(a) / a;
}

double expm1_ratio_derivative(double a) {
  if (std::abs(a) < 1e-3) {
    return 0.5 + a * (1.0 / 3.0 + a * (1.0 / 8.0 + a * (1.0 / 30.0 + a / 144.0)));
  }
  return (a * std::exp(a) - std::expm1(a)) / (a * a);
}

double mvnormal_log_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                            const Eigen::LLT<Eigen::MatrixXd>& chol) {
  const Eigen::VectorXd u = chol.matrixL().solve(x - mean);
  const Eigen::MatrixXd& l = chol.matrixLLT();
  double log_det_half = 0.0;
  for (Eigen::Index j = 0; j < l.rows(); ++j) log_det_half += std::log(l(j, j));
  return -0.5 * static_cast<double>(x.size()) * kLog2Pi - log_det_half - 0.5 * u.squaredNorm();
}

JointModel::JointModel(ModelSpec spec, std::vector<SubjectRecord> subjects, ModelOptions options)
    : spec_(resolve(std::move(spec))), options_(options), subjects_(std::move(subjects)) {
  if (spec_.kind == ModelKind::II) basis_.emplace(*spec_.spline);
  caches_.reserve(subjects_.size());
  for (const auto& s : subjects_) {
    validate(s, spec_.num_covariates);
    caches_.push_back(prepare_subject(spec_, s, basis()));
  }
}

double JointModel::linpred(const Eigen::VectorXd& beta, int i) const {
  return spec_.num_covariates == 0 ? 0.0 : subject(i).x.dot(beta);
}

void JointModel::arc_profile(const Eigen::Ref<const Eigen::VectorXd>& b_i, int i,
                             std::vector<double>& profile) const {
  if (spec_.kind != ModelKind::II) {
    profile.assign(1, speed_from_slope(b_i[1]));
    return;
  }
  const auto& c = cache(i);
  const Eigen::Index nodes = c.slope_basis.rows();
  std::vector<double> speeds(static_cast<std::size_t>(nodes));
  for (Eigen::Index q = 0; q < nodes; ++q) {
    speeds[static_cast<std::size_t>(q)] = speed_from_slope(c.slope_basis.row(q).dot(b_i));
  }
  profile.resize(speeds.size());
  prefix_trapezoid(speeds, c.step, profile);
}

double JointModel::cumulative_hazard_from_profile(double lambda, const Eigen::VectorXd& beta,
                                                  double alpha, int i,
                                                  std::span<const double> profile) const {
  const auto& s = subject(i);
  const double scale = lambda * std::exp(linpred(beta, i));
  if (spec_.kind != ModelKind::II) return scale * s.t * expm1_ratio(alpha * s.t * profile[0]);
  const std::size_t last = profile.size() - 1;
  double acc = 0.5 * std::exp(alpha * profile[0]);
  for (std::size_t k = 1; k < last; ++k) acc += std::exp(alpha * profile[k]);
  acc += 0.5 * std::exp(alpha * profile[last]);
  return scale * acc * cache(i).step;
}

double JointModel::log_lik_survival_from_profile(double lambda, const Eigen::VectorXd& beta,
                                                 double alpha, int i,
                                                 std::span<const double> profile) const {
  const auto& s = subject(i);
  const double g = spec_.kind != ModelKind::II ? s.t * profile[0] : profile.back();
  const double h = cumulative_hazard_from_profile(lambda, beta, alpha, i, profile);
  return s.delta * (std::log(lambda) + linpred(beta, i) + alpha * g) - h;
}

double JointModel::log_lik_survival(const ParameterState& state, int i) const {
  std::vector<double> profile;
  arc_profile(state.b.row(i).transpose(), i, profile);
  return log_lik_survival_from_profile(state.lambda, state.beta, state.alpha, i, profile);
}

double JointModel::residual_sum_squares(const ParameterState& state, int i) const {
  const auto& s = subject(i);
  Eigen::VectorXd mean = cache(i).design * state.b.row(i).transpose();
  if (spec_.has_gamma()) mean.array() += state.gamma * s.x[*spec_.longitudinal_covariate];
  const Eigen::Map<const Eigen::VectorXd> z(s.z.data(), static_cast<Eigen::Index>(s.z.size()));
  return (z - mean).squaredNorm();
}

double JointModel::log_lik_longitudinal(const ParameterState& state, int i) const {
  const double n = static_cast<double>(subject(i).z.size());
  return -0.5 * n * (kLog2Pi + std::log(state.sigma2)) -
         0.5 * residual_sum_squares(state, i) / state.sigma2;
}

double JointModel::log_prior_random_effects(const ParameterState& state, int i) const {
  Eigen::LLT<Eigen::MatrixXd> chol(state.Sigma);
  if (chol.info() != Eigen::Success) throw NumericalError("Sigma is not positive definite");
  return mvnormal_log_density(state.b.row(i).transpose(), state.mu, chol);
}

double JointModel::log_prior(const ParameterState& state) const {
  const auto& p = spec_.priors;
  const int k = random_effect_dim();
  double lp = p.lambda_shape * std::log(p.lambda_rate) - std::lgamma(p.lambda_shape) +
              (p.lambda_shape - 1.0) * std::log(state.lambda) - p.lambda_rate * state.lambda;
  for (Eigen::Index j = 0; j < state.beta.size(); ++j) lp += normal_log_density(state.beta[j], p.beta_sd);
  lp += normal_log_density(state.alpha, p.alpha_sd);
  if (spec_.has_gamma()) lp += normal_log_density(state.gamma, p.gamma_sd);
  for (int j = 0; j < k; ++j) lp += normal_log_density(state.mu[j], p.mu_sd);
  lp += p.sigma2_shape * std::log(p.sigma2_rate) - std::lgamma(p.sigma2_shape) -
        (p.sigma2_shape + 1.0) * std::log(state.sigma2) - p.sigma2_rate / state.sigma2;

  Eigen::LLT<Eigen::MatrixXd> chol(state.Sigma);
  if (chol.info() != Eigen::Success) return kNegInf;
  const Eigen::MatrixXd& l = chol.matrixLLT();
  double log_det = 0.0;
  for (int j = 0; j < k; ++j) log_det += 2.0 * std::log(l(j, j));
  const double log_det_scale = 2.0 * Eigen::MatrixXd(p.wishart_scale.llt().matrixL())
                                         .diagonal().array().log().sum();
  const double nu = p.wishart_df;
  const Eigen::MatrixXd sigma_inv_scale = chol.solve(p.wishart_scale);
  lp += 0.5 * nu * log_det_scale - 0.5 * nu * k * std::numbers::ln2 -
        log_multivariate_gamma(0.5 * nu, k) - 0.5 * (nu + k + 1.0) * log_det -
        0.5 * sigma_inv_scale.trace();
  return lp;
}

double JointModel::log_likelihood(const ParameterState& state) const {
  Eigen::LLT<Eigen::MatrixXd> chol(state.Sigma);
  if (chol.info() != Eigen::Success) return kNegInf;
  double total = 0.0;
  for (int i = 0; i < size(); ++i) {
    if (options_.include_survival) total += log_lik_survival(state, i);
    if (options_.include_longitudinal) total += log_lik_longitudinal(state, i);
    total += mvnormal_log_density(state.b.row(i).transpose(), state.mu, chol);
  }
  return total;
}

double JointModel::log_posterior(const ParameterState& state) const {
  if (!satisfies_invariants(state)) return kNegInf;
  if (state.b.rows() != size() || state.b.cols() != random_effect_dim()) return kNegInf;
  const double value = log_likelihood(state) + log_prior(state);
  return std::isnan(value) ? kNegInf : value;
}

double arc_length_model1(double b1, double t) { return t * speed_from_slope(b1); }

namespace {

SpeedFunction spline_speed(const BSplineBasis& basis, const Eigen::VectorXd& b) {
  return [&basis, &b](double s) {
    Eigen::VectorXd d;
    basis.eval_into(s, nullptr, &d);
    return speed_from_slope(d.dot(b));
  };
}

void check_subject_index(const ParameterState& state, int i) {
  if (i < 0 || i >= state.b.rows()) {
    throw DomainError(fmt::format("subject index {} outside random-effect rows", i));
  }
}

}  // namespace

double arc_length_model2(const Eigen::VectorXd& b, const SplineConfig& spline, double t, int m) {
  const BSplineBasis basis(spline);
  if (b.size() != basis.size()) throw DomainError("coefficient count does not match the basis");
  if (t < spline.start || t > spline.end) {
    throw DomainError(fmt::format("time {} outside spline domain [{}, {}]", t, spline.start,
                                  spline.end));
  }
  if (t == 0.0) return 0.0;
  return trapezoid_arc_length(spline_speed(basis, b), Grid{t, m});
}

double log_hazard(const ModelSpec& spec, const ParameterState& state, const SubjectRecord& subject,
                  int subject_index, double s) {
  check_subject_index(state, subject_index);
  if (s < 0.0) throw DomainError(fmt::format("log_hazard needs s >= 0, got {}", s));
  const Eigen::VectorXd b = state.b.row(subject_index).transpose();
  const double g = spec.kind == ModelKind::II
                       ? arc_length_model2(b, *spec.spline, s, spec.quad_points)
                       : arc_length_model1(b[1], s);
  const double lp = spec.num_covariates == 0 ? 0.0 : subject.x.dot(state.beta);
  return std::log(state.lambda) + lp + state.alpha * g;
}

double log_survival(const ModelSpec& spec, const ParameterState& state,
                    const SubjectRecord& subject, int subject_index, double s) {
  check_subject_index(state, subject_index);
  if (s < 0.0) throw DomainError(fmt::format("log_survival needs s >= 0, got {}", s));
  if (s == 0.0) return 0.0;
  const Eigen::VectorXd b = state.b.row(subject_index).transpose();
  const double lp = spec.num_covariates == 0 ? 0.0 : subject.x.dot(state.beta);
  double h = 0.0;
  if (spec.kind == ModelKind::II) {
    const BSplineBasis basis(*spec.spline);
    if (s > spec.spline->end) {
      throw DomainError(fmt::format("subject {}: time {} beyond spline domain", subject.id, s));
    }
    try {
      const double lambda = state.lambda;
      h = nested_cumulative_hazard([lambda](double) { return lambda; }, lp, state.alpha,
                                   spline_speed(basis, b), Grid{s, spec.quad_points});
    } catch (const NumericalError& e) {
      throw NumericalError(fmt::format("subject {} at s = {}: {}", subject.id, s, e.what()));
    }
  } else {
    const double a = state.alpha * arc_length_model1(b[1], s);
    h = state.lambda * std::exp(lp) * s * expm1_ratio(a);
  }
  if (!std::isfinite(h)) {
    throw NumericalError(
        fmt::format("subject {}: cumulative hazard overflow at s = {}", subject.id, s));
  }
  return -h;
}

double log_lik_survival(const ModelSpec& spec, const ParameterState& state,
                        const SubjectRecord& subject, int subject_index) {
  return subject.delta * log_hazard(spec, state, subject, subject_index, subject.t) +
         log_survival(spec, state, subject, subject_index, subject.t);
}

double log_lik_longitudinal(const ModelSpec& spec, const ParameterState& state,
                            const SubjectRecord& subject, int subject_index) {
  check_subject_index(state, subject_index);
  const Eigen::VectorXd b = state.b.row(subject_index).transpose();
  std::optional<BSplineBasis> basis;
  if (spec.kind == ModelKind::II) basis.emplace(*spec.spline);
  double rss = 0.0;
  for (std::size_t j = 0; j < subject.times.size(); ++j) {
    const double s = subject.times[j];
    double mean = spec.kind == ModelKind::II ? basis->eval(s).dot(b) : b[0] + b[1] * s;
    if (spec.kind == ModelKind::Ia) mean += state.gamma * subject.x[*spec.longitudinal_covariate];
    rss += (subject.z[j] - mean) * (subject.z[j] - mean);
  }
  const double n = static_cast<double>(subject.times.size());
  return -0.5 * n * (kLog2Pi + std::log(state.sigma2)) - 0.5 * rss / state.sigma2;
}

double log_prior_random_effects(const ParameterState& state, int subject_index) {
  check_subject_index(state, subject_index);
  Eigen::LLT<Eigen::MatrixXd> chol(state.Sigma);
  if (chol.info() != Eigen::Success) throw NumericalError("Sigma is not positive definite");
  return mvnormal_log_density(state.b.row(subject_index).transpose(), state.mu, chol);
}

double log_posterior(const ModelSpec& spec, const ParameterState& state,
                     const std::vector<SubjectRecord>& data) {
  return JointModel(spec, data).log_posterior(state);
}

}  // namespace balsam
