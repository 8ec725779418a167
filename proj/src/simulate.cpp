#include "balsam/simulate.hpp"

#include "balsam/quadrature.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <optional>

namespace balsam {

double CovariateLaw::draw(Rng& rng) const {
  return kind == Kind::Bernoulli ? (rng.bernoulli(p) ? 1.0 : 0.0) : rng.normal(mean, sd);
}

void validate(const SimulationDesign& d) {
  if (d.n < 1) throw ConfigError("design needs n >= 1");
  validate(resolve(d.spec));
  if (static_cast<int>(d.covariates.size()) != d.spec.num_covariates) {
    throw ConfigError(fmt::format("design lists {} covariate laws for {} covariates",
                                  d.covariates.size(), d.spec.num_covariates));
  }
  for (const auto& law : d.covariates) {
    if (law.kind == CovariateLaw::Kind::Bernoulli && !(law.p >= 0.0 && law.p <= 1.0)) {
      throw ConfigError("Bernoulli covariate probability must lie in [0, 1]");
    }
    if (law.kind == CovariateLaw::Kind::Normal && !(law.sd >= 0.0)) {
      throw ConfigError("normal covariate sd must be >= 0");
    }
  }
  if (d.schedule.empty()) throw ConfigError("measurement schedule must not be empty");
  if (d.schedule.front() != 0.0) throw ConfigError("measurement schedule must start at time 0");
  if (!std::is_sorted(d.schedule.begin(), d.schedule.end()) ||
      std::adjacent_find(d.schedule.begin(), d.schedule.end()) != d.schedule.end()) {
    throw ConfigError("measurement schedule must be strictly increasing");
  }
  if (!(d.censoring.administrative_time > 0.0)) {
    throw ConfigError("administrative censoring time must be > 0");
  }
  if (!(d.censoring.independent_rate >= 0.0)) {
    throw ConfigError("independent censoring rate must be >= 0");
  }
  const int k = d.spec.random_effect_dim();
  const auto& t = d.truth;
  if (!(t.lambda > 0.0) || !(t.sigma2 > 0.0)) {
    throw ConfigError("truth needs lambda > 0 and sigma2 > 0");
  }
  if (t.beta.size() != d.spec.num_covariates) throw ConfigError("truth beta has wrong length");
  if (t.mu.size() != k) throw ConfigError(fmt::format("truth mu must have {} entries", k));
  if (t.Sigma.rows() != k || t.Sigma.cols() != k) {
    throw ConfigError(fmt::format("truth Sigma must be {}x{}", k, k));
  }
  if (!t.Sigma.isApprox(t.Sigma.transpose(), 1e-12) ||
      Eigen::LLT<Eigen::MatrixXd>(t.Sigma).info() != Eigen::Success) {
    throw ConfigError("truth Sigma is not symmetric positive definite");
  }
  if (d.spec.kind == ModelKind::II) {
    if (d.schedule.back() > d.spec.spline->end) {
      throw ConfigError("measurement schedule extends beyond the spline domain");
    }
  }
  if (!(d.t_max > 0.0)) throw ConfigError("t_max must be > 0");
}

Eigen::MatrixXd draw_random_effects(const Eigen::VectorXd& mu, const Eigen::MatrixXd& chol_lower,
                                    int n, std::uint64_t seed) {
  Eigen::MatrixXd b(n, mu.size());
  for (int i = 0; i < n; ++i) {
    Rng rng(seed, StreamTag::RandomEffects, static_cast<std::uint64_t>(i));
    b.row(i) = draw_mvnormal(rng, mu, chol_lower).transpose();
  }
  return b;
}

Eigen::MatrixXd draw_random_effects(const SimulationDesign& design) {
  Eigen::LLT<Eigen::MatrixXd> llt(design.truth.Sigma);
  if (llt.info() != Eigen::Success) {
    throw ConfigError("Sigma is not positive definite; refusing to draw random effects");
  }
  return draw_random_effects(design.truth.mu, llt.matrixL(), design.n, design.seed);
}

double invert_event_time_model1(double v, double lambda, double linpred, double alpha,
                                double b1) {
  if (!(v > 0.0 && v < 1.0)) throw DomainError(fmt::format("v must lie in (0, 1), got {}", v));
  const double target = -std::log(v);
  const double scale = lambda * std::exp(linpred);
  const double rate = alpha * speed_from_slope(b1);
  if (std::abs(rate) < 1e-10) return target / scale;
  const double arg = rate * target / scale;
  if (arg <= -1.0) return std::numeric_limits<double>::infinity();
  return std::log1p(arg) / rate;
}

double SplineHazardContext::cumulative_hazard(double t) const {
  if (t <= 0.0) return 0.0;
  const double l = lambda;
  try {
    return nested_cumulative_hazard(
        [l](double) { return l; }, linpred, alpha,
        [this](double s) {
          Eigen::VectorXd d;
          basis->eval_into(s, nullptr, &d);
          return speed_from_slope(d.dot(b));
        },
        Grid{t, quad_points});
  } catch (const NumericalError&) {
    return std::numeric_limits<double>::infinity();
  }
}

InversionResult invert_event_time_model2(double v, const SplineHazardContext& ctx,
                                         const RootConfig& cfg) {
  if (!(v > 0.0 && v < 1.0)) throw DomainError(fmt::format("v must lie in (0, 1), got {}", v));
  const double target = -std::log(v);
  const double cap = std::min(cfg.t_max, ctx.basis->config().end);

  double lo = 0.0;
  double hi = std::min(1.0, cap);
  while (ctx.cumulative_hazard(hi) < target) {
    if (hi >= cap) return {InversionResult::Status::NotBracketed, cap};
    lo = hi;
    hi = std::min(2.0 * hi, cap);
  }
  while (hi - lo > cfg.tolerance) {
    const double mid = 0.5 * (lo + hi);
    if (ctx.cumulative_hazard(mid) < target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return {InversionResult::Status::Found, 0.5 * (lo + hi)};
}

std::pair<double, int> apply_censoring(double event_time, const CensoringSpec& censoring,
                                       Rng& rng) {
  if (!(censoring.administrative_time > 0.0)) {
    throw ConfigError("administrative censoring time must be > 0");
  }
  double c = censoring.administrative_time;
  if (censoring.independent_rate > 0.0) {
    c = std::min(c, rng.exponential(censoring.independent_rate));
  }
  if (event_time <= c) return {event_time, 1};
  return {c, 0};
}

SimulatedDataset generate_dataset(const SimulationDesign& design) {
  validate(design);
  const ModelSpec spec = resolve(design.spec);
  const auto& truth = design.truth;
  const int k = spec.random_effect_dim();
  const Eigen::MatrixXd b_all = draw_random_effects(design);

  std::optional<BSplineBasis> basis;
  if (spec.kind == ModelKind::II) basis.emplace(*spec.spline);

  SimulatedDataset out;
  std::vector<Eigen::VectorXd> kept_b;
  const auto idx = [](int i) { return static_cast<std::uint64_t>(i); };

  for (int i = 0; i < design.n; ++i) {
    const std::string id = std::to_string(i + 1);
    Rng cov_rng(design.seed, StreamTag::Covariates, idx(i));
    Rng event_rng(design.seed, StreamTag::EventTime, idx(i));
    Rng censor_rng(design.seed, StreamTag::Censoring, idx(i));
    Rng long_rng(design.seed, StreamTag::Longitudinal, idx(i));

    Eigen::VectorXd x(spec.num_covariates);
    for (int p = 0; p < spec.num_covariates; ++p) x[p] = design.covariates[p].draw(cov_rng);
    const Eigen::VectorXd b = b_all.row(i).transpose();
    const double lp = spec.num_covariates == 0 ? 0.0 : x.dot(truth.beta);
    const double v = event_rng.uniform();

    double event_time = 0.0;
    if (spec.kind == ModelKind::II) {
      const SplineHazardContext ctx{&*basis, b, truth.lambda, lp, truth.alpha, spec.quad_points};
      const auto inv = invert_event_time_model2(v, ctx, RootConfig{design.t_max, 1e-8});
      event_time = inv.found() ? inv.t : std::numeric_limits<double>::infinity();
    } else {
      event_time = invert_event_time_model1(v, truth.lambda, lp, truth.alpha, b[1]);
    }

    auto [t, delta] = apply_censoring(event_time, design.censoring, censor_rng);
    if (!std::isfinite(t)) {
      out.truth.failed_ids.push_back(id);
      continue;
    }
    if (spec.kind == ModelKind::II && t > spec.spline->end) {
      // Censored beyond the trajectory domain: cannot be represented.
      out.truth.failed_ids.push_back(id);
      continue;
    }

    const double gx = spec.has_gamma() ? truth.gamma * x[*spec.longitudinal_covariate] : 0.0;
    auto mean_at = [&](double s) {
      if (spec.kind == ModelKind::II) return basis->eval(s).dot(b);
      return b[0] + b[1] * s + gx;
    };
    auto meas = generate_longitudinal(design.schedule, t, mean_at, truth.sigma2, long_rng);

    SubjectRecord rec;
    rec.id = id;
    rec.t = t;
    rec.delta = delta;
    rec.x = x;
    rec.times = std::move(meas.times);
    rec.z = std::move(meas.z);
    out.subjects.push_back(std::move(rec));
    kept_b.push_back(b);
    out.truth.ids.push_back(id);
    out.truth.uniforms.push_back(v);
    out.truth.event_times.push_back(event_time);
    out.truth.censor_times.push_back(delta == 1 ? std::numeric_limits<double>::infinity() : t);
  }

  const int failures = static_cast<int>(out.truth.failed_ids.size());
  if (failures > design.max_failure_fraction * design.n) {
    throw InversionFailure(fmt::format("{} of {} subjects failed event-time inversion", failures,
                                       design.n),
                           failures);
  }

  out.truth.state = truth;
  out.truth.state.b.resize(static_cast<Eigen::Index>(kept_b.size()), k);
  for (std::size_t i = 0; i < kept_b.size(); ++i) {
    out.truth.state.b.row(static_cast<Eigen::Index>(i)) = kept_b[i].transpose();
  }
  return out;
}

}  // namespace balsam
