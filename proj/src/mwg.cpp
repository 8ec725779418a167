#include "balsam/mwg.hpp"

#include "balsam/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>

namespace balsam {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double accept_probability(double log_ratio) {
  if (!std::isfinite(log_ratio)) return log_ratio > 0.0 ? 1.0 : 0.0;
  return std::min(1.0, std::exp(log_ratio));
}

double normal_log_kernel(double x, double sd) { return -0.5 * x * x / (sd * sd); }

}  // namespace

void MwgAdaptation::freeze() {
  adapting = false;
  lambda.freeze();
  beta.freeze();
  alpha.freeze();
  gamma.freeze();
  for (auto& s : random_effects) s.freeze();
}

std::vector<double> MwgAdaptation::snapshot() const {
  std::vector<double> out{lambda.scale(), beta.scale(), alpha.scale(), gamma.scale()};
  for (const auto& s : random_effects) out.push_back(s.scale());
  return out;
}

MwgAdaptation default_adaptation(const JointModel& model, const MwgOptions& options) {
  const double m = options.scale_multiplier;
  const int p = model.spec().num_covariates;
  const int k = model.random_effect_dim();
  MwgAdaptation a;
  a.lambda = ProposalScale(0.1 * m, kScalarAcceptTarget);
  a.beta = ProposalScale(0.1 * m, p == 1 ? kScalarAcceptTarget : kVectorAcceptTarget);
  a.alpha = ProposalScale(0.02 * m, kScalarAcceptTarget);
  a.gamma = ProposalScale(0.1 * m, kScalarAcceptTarget);
  a.random_effects.assign(static_cast<std::size_t>(model.size()),
                          ProposalScale(0.7 * 2.38 / std::sqrt(static_cast<double>(k)) * m,
                                        kVectorAcceptTarget));
  return a;
}

MwgSampler::MwgSampler(const JointModel& model, ParameterState initial, MwgOptions options)
    : MwgSampler(model, std::move(initial), options, default_adaptation(model, options)) {}

MwgSampler::MwgSampler(const JointModel& model, ParameterState initial, MwgOptions options,
                       MwgAdaptation adaptation)
    : model_(model),
      state_(std::move(initial)),
      options_(options),
      adaptation_(std::move(adaptation)) {
  if (!std::isfinite(model_.log_posterior(state_))) {
    throw NumericalError("Metropolis-within-Gibbs started at a state with zero posterior density");
  }
  if (adaptation_.random_effects.size() != static_cast<std::size_t>(model_.size())) {
    throw ConfigError("adaptation has the wrong number of random-effect scales");
  }
  gram_.reserve(static_cast<std::size_t>(model_.size()));
  for (int i = 0; i < model_.size(); ++i) {
    const auto& d = model_.cache(i).design;
    gram_.push_back(d.transpose() * d);
    total_measurements_ += static_cast<long>(model_.subject(i).z.size());
  }
  refresh_all();
}

void MwgSampler::refresh_all() {
  sigma_chol_.compute(state_.Sigma);
  sigma_inv_ = sigma_chol_.solve(
      Eigen::MatrixXd::Identity(state_.Sigma.rows(), state_.Sigma.cols()));
  terms_.resize(static_cast<std::size_t>(model_.size()));
  for (int i = 0; i < model_.size(); ++i) {
    refresh_survival(i);
    terms_[static_cast<std::size_t>(i)].rss = model_.residual_sum_squares(state_, i);
  }
}

void MwgSampler::refresh_survival(int i) {
  auto& t = terms_[static_cast<std::size_t>(i)];
  model_.arc_profile(state_.b.row(i).transpose(), i, t.profile);
  t.arc_at_t = model_.spec().kind == ModelKind::II ? t.profile.back()
                                                    : model_.subject(i).t * t.profile[0];
  t.unit_hazard =
      model_.cumulative_hazard_from_profile(1.0, state_.beta, state_.alpha, i, t.profile);
}

double MwgSampler::survival_term(int i) const {
  const auto& t = terms_[static_cast<std::size_t>(i)];
  const auto& s = model_.subject(i);
  return s.delta * (std::log(state_.lambda) + model_.linpred(state_.beta, i) +
                    state_.alpha * t.arc_at_t) -
         state_.lambda * t.unit_hazard;
}

double MwgSampler::survival_total() const {
  double total = 0.0;
  for (int i = 0; i < model_.size(); ++i) total += survival_term(i);
  return total;
}

double MwgSampler::longitudinal_term(int i) const {
  const double n = static_cast<double>(model_.subject(i).z.size());
  return -0.5 * n * std::log(2.0 * M_PI * state_.sigma2) -
         0.5 * terms_[static_cast<std::size_t>(i)].rss / state_.sigma2;
}

double MwgSampler::cached_log_likelihood() const {
  double total = 0.0;
  for (int i = 0; i < model_.size(); ++i) {
    if (model_.options().include_survival) total += survival_term(i);
    if (model_.options().include_longitudinal) total += longitudinal_term(i);
    total += mvnormal_log_density(state_.b.row(i).transpose(), state_.mu, sigma_chol_);
  }
  return total;
}

bool MwgSampler::trial_hazards(const Eigen::VectorXd& beta, double alpha,
                               std::vector<double>& unit, std::vector<double>& arc) const {
  unit.resize(terms_.size());
  arc.resize(terms_.size());
  for (int i = 0; i < model_.size(); ++i) {
    const auto& t = terms_[static_cast<std::size_t>(i)];
    const double h = model_.cumulative_hazard_from_profile(1.0, beta, alpha, i, t.profile);
    if (!std::isfinite(h)) return false;
    unit[static_cast<std::size_t>(i)] = h;
    arc[static_cast<std::size_t>(i)] = t.arc_at_t;
  }
  return true;
}

double MwgSampler::survival_total(const Eigen::VectorXd& beta, double alpha,
                                  const std::vector<double>& unit,
                                  const std::vector<double>& arc) const {
  double total = 0.0;
  const double log_lambda = std::log(state_.lambda);
  for (int i = 0; i < model_.size(); ++i) {
    const auto k = static_cast<std::size_t>(i);
    total += model_.subject(i).delta * (log_lambda + model_.linpred(beta, i) + alpha * arc[k]) -
             state_.lambda * unit[k];
  }
  return total;
}

void MwgSampler::update_lambda(Rng& rng) {
  const auto& pr = model_.spec().priors;
  const bool surv = model_.options().include_survival;
  if (options_.conjugate_lambda) {
    double events = 0.0, unit = 0.0;
    if (surv) {
      for (int i = 0; i < model_.size(); ++i) {
        events += model_.subject(i).delta;
        unit += terms_[static_cast<std::size_t>(i)].unit_hazard;
      }
    }
    state_.lambda = rng.gamma(pr.lambda_shape + events, pr.lambda_rate + unit);
    return;
  }
  auto log_target = [&](double lambda) {
    double events = 0.0, unit = 0.0;
    if (surv) {
      for (int i = 0; i < model_.size(); ++i) {
        events += model_.subject(i).delta;
        unit += terms_[static_cast<std::size_t>(i)].unit_hazard;
      }
    }
    // Density of log lambda: the Gamma kernel times lambda.
    return (pr.lambda_shape + events) * std::log(lambda) - (pr.lambda_rate + unit) * lambda;
  };
  auto& sc = adaptation_.lambda;
  const double proposal = state_.lambda * std::exp(sc.scale() * rng.normal());
  const double log_ratio = log_target(proposal) - log_target(state_.lambda);
  auto& c = counters_["lambda"];
  ++c.proposed;
  if (metropolis_accept(log_ratio, rng)) {
    state_.lambda = proposal;
    ++c.accepted;
  }
  if (adaptation_.adapting) sc.adapt(accept_probability(log_ratio));
}

void MwgSampler::update_beta(Rng& rng) {
  const auto& pr = model_.spec().priors;
  const bool surv = model_.options().include_survival;
  auto& sc = adaptation_.beta;
  Eigen::VectorXd proposal = state_.beta;
  for (Eigen::Index j = 0; j < proposal.size(); ++j) proposal[j] += sc.scale() * rng.normal();

  double log_ratio = 0.0;
  for (Eigen::Index j = 0; j < proposal.size(); ++j) {
    log_ratio += normal_log_kernel(proposal[j], pr.beta_sd) -
                 normal_log_kernel(state_.beta[j], pr.beta_sd);
  }
  std::vector<double> unit, arc;
  bool finite = true;
  if (surv) {
    finite = trial_hazards(proposal, state_.alpha, unit, arc);
    if (finite) log_ratio += survival_total(proposal, state_.alpha, unit, arc) - survival_total();
  }
  if (!finite) log_ratio = kNegInf;
  auto& c = counters_["beta"];
  ++c.proposed;
  if (metropolis_accept(log_ratio, rng)) {
    state_.beta = proposal;
    ++c.accepted;
    for (int i = 0; i < model_.size(); ++i) {
      if (surv) {
        terms_[static_cast<std::size_t>(i)].unit_hazard = unit[static_cast<std::size_t>(i)];
      } else {
        refresh_survival(i);
      }
    }
  }
  if (adaptation_.adapting) sc.adapt(accept_probability(log_ratio));
}

void MwgSampler::update_alpha(Rng& rng) {
  const auto& pr = model_.spec().priors;
  const bool surv = model_.options().include_survival;
  auto& sc = adaptation_.alpha;
  const double proposal = state_.alpha + sc.scale() * rng.normal();
  double log_ratio =
      normal_log_kernel(proposal, pr.alpha_sd) - normal_log_kernel(state_.alpha, pr.alpha_sd);
  std::vector<double> unit, arc;
  bool finite = true;
  if (surv) {
    finite = trial_hazards(state_.beta, proposal, unit, arc);
    if (finite) log_ratio += survival_total(state_.beta, proposal, unit, arc) - survival_total();
  }
  if (!finite) log_ratio = kNegInf;
  auto& c = counters_["alpha"];
  ++c.proposed;
  if (metropolis_accept(log_ratio, rng)) {
    state_.alpha = proposal;
    ++c.accepted;
    for (int i = 0; i < model_.size(); ++i) {
      if (surv) {
        terms_[static_cast<std::size_t>(i)].unit_hazard = unit[static_cast<std::size_t>(i)];
      } else {
        refresh_survival(i);
      }
    }
  }
  if (adaptation_.adapting) sc.adapt(accept_probability(log_ratio));
}

void MwgSampler::update_gamma(Rng& rng) {
  const auto& pr = model_.spec().priors;
  const bool lon = model_.options().include_longitudinal;
  const int col = *model_.spec().longitudinal_covariate;
  if (options_.conjugate_gamma) {
    double precision = 1.0 / (pr.gamma_sd * pr.gamma_sd);
    double weighted = 0.0;
    if (lon) {
      for (int i = 0; i < model_.size(); ++i) {
        const auto& s = model_.subject(i);
        const double x = s.x[col];
        const Eigen::VectorXd fit = model_.cache(i).design * state_.b.row(i).transpose();
        double resid = 0.0;
        for (std::size_t j = 0; j < s.z.size(); ++j) resid += s.z[j] - fit[static_cast<Eigen::Index>(j)];
        precision += static_cast<double>(s.z.size()) * x * x / state_.sigma2;
        weighted += x * resid / state_.sigma2;
      }
    }
    state_.gamma = rng.normal(weighted / precision, 1.0 / std::sqrt(precision));
  } else {
    auto& sc = adaptation_.gamma;
    const double old = state_.gamma;
    const double proposal = old + sc.scale() * rng.normal();
    double log_ratio = normal_log_kernel(proposal, pr.gamma_sd) - normal_log_kernel(old, pr.gamma_sd);
    std::vector<double> rss(terms_.size());
    if (lon) {
      state_.gamma = proposal;
      for (int i = 0; i < model_.size(); ++i) {
        const auto k = static_cast<std::size_t>(i);
        rss[k] = model_.residual_sum_squares(state_, i);
        log_ratio -= 0.5 * (rss[k] - terms_[k].rss) / state_.sigma2;
      }
      state_.gamma = old;
    }
    auto& c = counters_["gamma"];
    ++c.proposed;
    if (metropolis_accept(log_ratio, rng)) {
      state_.gamma = proposal;
      ++c.accepted;
    }
    if (adaptation_.adapting) sc.adapt(accept_probability(log_ratio));
  }
  for (int i = 0; i < model_.size(); ++i) {
    terms_[static_cast<std::size_t>(i)].rss = model_.residual_sum_squares(state_, i);
  }
}

void MwgSampler::update_mu(Rng& rng) {
  const auto& pr = model_.spec().priors;
  const Eigen::Index k = state_.mu.size();
  const double n = static_cast<double>(model_.size());
  const Eigen::MatrixXd precision =
      n * sigma_inv_ + Eigen::MatrixXd::Identity(k, k) / (pr.mu_sd * pr.mu_sd);
  const Eigen::VectorXd b_sum = state_.b.colwise().sum().transpose();
  Eigen::LLT<Eigen::MatrixXd> chol(precision);
  const Eigen::VectorXd mean = chol.solve(sigma_inv_ * b_sum);
  // precision = U'U with U upper, so U^{-1} eta has covariance precision^{-1}.
  const Eigen::VectorXd eta = rng.standard_normal(k);
  state_.mu = mean + chol.matrixU().solve(eta);
}

void MwgSampler::update_Sigma(Rng& rng) {
  const auto& pr = model_.spec().priors;
  const Eigen::MatrixXd centered = state_.b.rowwise() - state_.mu.transpose();
  const Eigen::MatrixXd scatter = centered.transpose() * centered;
  Eigen::MatrixXd draw = draw_inverse_wishart(
      rng, pr.wishart_df + static_cast<double>(model_.size()), pr.wishart_scale + scatter);
  state_.Sigma = 0.5 * (draw + draw.transpose());
  sigma_chol_.compute(state_.Sigma);
  if (sigma_chol_.info() != Eigen::Success) {
    throw NumericalError("inverse-Wishart draw for Sigma is not positive definite");
  }
  sigma_inv_ = sigma_chol_.solve(Eigen::MatrixXd::Identity(state_.Sigma.rows(), state_.Sigma.cols()));
}

void MwgSampler::update_sigma2(Rng& rng) {
  const auto& pr = model_.spec().priors;
  double shape = pr.sigma2_shape, rate = pr.sigma2_rate;
  if (model_.options().include_longitudinal) {
    double rss = 0.0;
    for (const auto& t : terms_) rss += t.rss;
    shape += 0.5 * static_cast<double>(total_measurements_);
    rate += 0.5 * rss;
  }
  state_.sigma2 = 1.0 / rng.gamma(shape, rate);
}

void MwgSampler::update_random_effect(int i, Rng& rng) {
  const auto k = static_cast<std::size_t>(i);
  const bool surv = model_.options().include_survival;
  const bool lon = model_.options().include_longitudinal;
  const Eigen::Index dim = state_.mu.size();

  Eigen::MatrixXd precision = sigma_inv_;
  if (lon) precision += gram_[k] / state_.sigma2;
  const Eigen::MatrixXd cov =
      Eigen::LLT<Eigen::MatrixXd>(precision).solve(Eigen::MatrixXd::Identity(dim, dim));
  const Eigen::MatrixXd shape = Eigen::LLT<Eigen::MatrixXd>(cov).matrixL();

  auto& sc = adaptation_.random_effects[k];
  const Eigen::VectorXd current = state_.b.row(i).transpose();
  const Eigen::VectorXd proposal = current + sc.scale() * (shape * rng.standard_normal(dim));

  auto re_kernel = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd d = b - state_.mu;
    return -0.5 * d.dot(sigma_inv_ * d);
  };
  double log_ratio = re_kernel(proposal) - re_kernel(current);

  SubjectTerms trial;
  const double old_survival = surv ? survival_term(i) : 0.0;
  const SubjectTerms saved = terms_[k];
  state_.b.row(i) = proposal.transpose();
  if (lon) {
    trial.rss = model_.residual_sum_squares(state_, i);
    log_ratio -= 0.5 * (trial.rss - saved.rss) / state_.sigma2;
  }
  refresh_survival(i);
  if (surv) log_ratio += survival_term(i) - old_survival;
  if (!lon) trial.rss = model_.residual_sum_squares(state_, i);
  terms_[k].rss = trial.rss;

  auto& c = counters_["random_effects"];
  ++c.proposed;
  if (metropolis_accept(log_ratio, rng)) {
    ++c.accepted;
  } else {
    state_.b.row(i) = current.transpose();
    terms_[k] = saved;
  }
  if (adaptation_.adapting) sc.adapt(accept_probability(log_ratio));
}

void MwgSampler::sweep(Rng& rng) {
  if (options_.update_lambda) update_lambda(rng);
  if (options_.update_beta) update_beta(rng);
  if (options_.update_alpha) update_alpha(rng);
  if (options_.update_gamma && model_.spec().has_gamma()) update_gamma(rng);
  if (options_.update_mu) update_mu(rng);
  if (options_.update_Sigma) update_Sigma(rng);
  if (options_.update_sigma2) update_sigma2(rng);
  if (options_.update_random_effects) {
    for (int i = 0; i < model_.size(); ++i) update_random_effect(i, rng);
  }
  if (!std::isfinite(cached_log_likelihood())) {
    throw NumericalError("Metropolis-within-Gibbs reached a state with zero likelihood");
  }
}

void MwgSampler::end_burn_in() {
  adaptation_.freeze();
  counters_.clear();
}

std::map<std::string, double> MwgSampler::acceptance_rates() const {
  std::map<std::string, double> out;
  for (const auto& [name, c] : counters_) out[name] = c.rate();
  return out;
}

ParameterState mwg_step(const JointModel& model, const ParameterState& state,
                        MwgAdaptation& adaptation, Rng& rng, const MwgOptions& options) {
  MwgSampler sampler(model, state, options, adaptation);
  sampler.sweep(rng);
  adaptation = sampler.adaptation();
  return sampler.state();
}

}  // namespace balsam
