#include "balsam/diagnostics.hpp"

#include "balsam/errors.hpp"
#include "balsam/quadrature.hpp"
#include "balsam/simulate.hpp"
#include "balsam/splines.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace balsam {

namespace {

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double sample_variance(std::span<const double> x) {
  if (x.size() < 2) return 0.0;
  const double m = mean_of(x);
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return ss / static_cast<double>(x.size() - 1);
}

void check_chains(const ChainDraws& chains, std::size_t min_draws) {
  if (chains.empty()) throw DomainError("diagnostics need at least one chain");
  const std::size_t n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw DomainError("chains must have equal length");
  }
  if (n < min_draws) throw DomainError(fmt::format("chains need at least {} draws", min_draws));
}

/// Biased autocovariance at `lag`, divided by n.
double autocovariance(std::span<const double> x, double mean, std::size_t lag) {
  double acc = 0.0;
  for (std::size_t i = 0; i + lag < x.size(); ++i) acc += (x[i] - mean) * (x[i + lag] - mean);
  return acc / static_cast<double>(x.size());
}

}  // namespace

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw DomainError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::optional<double> split_rhat(const ChainDraws& chains) {
  check_chains(chains, 4);
  const std::size_t half = chains.front().size() / 2;
  const std::size_t total = chains.front().size();
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    const std::span<const double> first(c.data(), half);
    const std::span<const double> second(c.data() + (total - half), half);
    for (auto part : {first, second}) {
      means.push_back(mean_of(part));
      vars.push_back(sample_variance(part));
    }
  }
  const double n = static_cast<double>(half);
  const double w = mean_of(vars);
  if (!(w > 0.0)) return std::nullopt;
  const double b_over_n = sample_variance(means);
  return std::sqrt(((n - 1.0) / n * w + b_over_n) / w);
}

std::optional<EssEstimate> effective_sample_size(const ChainDraws& chains) {
  check_chains(chains, 4);
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  std::vector<double> chain_mean(m), chain_var(m);
  for (std::size_t c = 0; c < m; ++c) {
    chain_mean[c] = mean_of(chains[c]);
    chain_var[c] = sample_variance(chains[c]);
  }
  const double mean_var = mean_of(chain_var);
  double var_plus = mean_var * (static_cast<double>(n) - 1.0) / static_cast<double>(n);
  if (m > 1) var_plus += sample_variance(chain_mean);
  if (!(mean_var > 0.0) || !(var_plus > 0.0)) return std::nullopt;

  auto rho = [&](std::size_t lag) {
    double acov = 0.0;
    for (std::size_t c = 0; c < m; ++c) acov += autocovariance(chains[c], chain_mean[c], lag);
    acov /= static_cast<double>(m);
    return 1.0 - (mean_var - acov) / var_plus;
  };

  std::vector<double> rho_hat(n + 1, 0.0);
  double rho_even = 1.0;
  double rho_odd = rho(1);
  rho_hat[0] = rho_even;
  rho_hat[1] = rho_odd;
  std::size_t t = 0;
  while (t + 5 < n && !std::isnan(rho_even + rho_odd) && rho_even + rho_odd > 0.0) {
    t += 2;
    rho_even = rho(t);
    rho_odd = rho(t + 1);
    if (rho_even + rho_odd >= 0.0) {
      rho_hat[t] = rho_even;
      rho_hat[t + 1] = rho_odd;
    }
  }
  const std::size_t max_t = t;
  if (rho_even > 0.0) rho_hat[max_t] = rho_even;

  for (std::size_t k = 1; k + 3 <= max_t; k += 2) {
    if (rho_hat[k + 1] + rho_hat[k + 2] > rho_hat[k - 1] + rho_hat[k]) {
      rho_hat[k + 1] = 0.5 * (rho_hat[k - 1] + rho_hat[k]);
      rho_hat[k + 2] = rho_hat[k + 1];
    }
  }
  double tau = -1.0 + rho_hat[max_t];
  for (std::size_t k = 0; k < max_t; ++k) tau += 2.0 * rho_hat[k];
  const double total = static_cast<double>(m * n);
  tau = std::max(tau, 1.0 / std::log10(total));
  EssEstimate out;
  out.value = total / tau;
  out.exceeds_draws = out.value > total;
  return out;
}

DicResult dic(std::span<const double> deviance) {
  if (deviance.size() < 2) throw DomainError("DIC needs at least two deviance draws");
  DicResult r;
  r.mean_deviance = mean_of(deviance);
  r.p_d = 0.5 * sample_variance(deviance);
  r.dic = r.mean_deviance + r.p_d;
  return r;
}

SummaryRow summarize_parameter(const std::string& name, const ChainDraws& chains) {
  std::vector<double> pooled;
  for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
  if (pooled.empty()) throw DomainError("cannot summarize an empty sample");
  SummaryRow row;
  row.name = name;
  row.mean = mean_of(pooled);
  row.sd = std::sqrt(sample_variance(pooled));
  row.q025 = percentile(pooled, 0.025);
  row.q975 = percentile(pooled, 0.975);
  if (chains.front().size() >= 4) {
    row.rhat = split_rhat(chains);
    if (auto ess = effective_sample_size(chains)) {
      const double total = static_cast<double>(pooled.size());
      row.ess_capped = ess->value > total;
      row.ess = std::min(ess->value, total);
    }
  }
  return row;
}

std::vector<SummaryRow> summarize(const PosteriorSamples& samples) {
  std::vector<SummaryRow> rows;
  for (std::size_t j = 0; j < samples.names.size(); ++j) {
    rows.push_back(summarize_parameter(samples.names[j], samples.parameter(j)));
  }
  return rows;
}

CoverageReport score_coverage(const std::vector<std::vector<SummaryRow>>& replicates,
                              std::span<const double> truth, int failures) {
  CoverageReport report;
  report.failures = failures;
  report.replicates = static_cast<int>(replicates.size());
  if (replicates.empty()) return report;
  const auto& first = replicates.front();
  if (truth.size() != first.size()) {
    throw DomainError(fmt::format("truth has {} values but summaries have {} rows", truth.size(),
                                  first.size()));
  }
  for (const auto& row : first) report.names.push_back(row.name);
  report.covered.assign(first.size(), 0);
  for (const auto& rep : replicates) {
    for (std::size_t j = 0; j < first.size(); ++j) {
      if (rep[j].q025 <= truth[j] && truth[j] <= rep[j].q975) ++report.covered[j];
    }
  }
  for (int c : report.covered) {
    report.rates.push_back(static_cast<double>(c) / static_cast<double>(report.replicates));
  }
  return report;
}

std::vector<bool> flag_high_risk(std::span<const double> arc, std::span<const double> times,
                                 const RiskRule& rule) {
  if (arc.size() != times.size()) throw DomainError("arc lengths and times differ in length");
  std::vector<bool> flags(arc.size(), false);
  if (arc.empty()) return flags;
  const std::vector<double> a(arc.begin(), arc.end()), t(times.begin(), times.end());
  const double arc_limit = percentile(a, rule.arc_percentile / 100.0);
  const double time_limit = percentile(t, rule.time_percentile / 100.0);
  auto beyond = [](double v, double limit, RiskDirection d) {
    return d == RiskDirection::Above ? v > limit : v < limit;
  };
  for (std::size_t i = 0; i < arc.size(); ++i) {
    const bool on_arc = beyond(a[i], arc_limit, rule.arc_direction);
    const bool on_time = beyond(t[i], time_limit, rule.time_direction);
    flags[i] = rule.combine == RiskCombine::All ? (on_arc && on_time) : (on_arc || on_time);
  }
  return flags;
}

CurveTable curve_table(const ModelSpec& spec, const ParameterState& means,
                       const Eigen::VectorXd& covariate_profile, std::span<const double> grid,
                       std::span<const SubjectRecord> subjects, const CurveOptions& options) {
  if (covariate_profile.size() != spec.num_covariates) {
    throw DomainError(fmt::format("covariate profile has {} entries, the model has {} covariates",
                                  covariate_profile.size(), spec.num_covariates));
  }
  const int k = spec.random_effect_dim();
  const bool spline = spec.kind == ModelKind::II;
  if (!spline && (options.slope_index < 0 || options.slope_index >= k)) {
    throw DomainError(fmt::format("slope index {} outside 0..{}", options.slope_index, k - 1));
  }
  const double linpred = covariate_profile.dot(means.beta);
  const double scale = means.lambda * std::exp(linpred);

  std::optional<BSplineBasis> basis;
  if (spline) basis.emplace(*spec.spline);

  CurveTable table;
  for (double t : grid) {
    if (t < 0.0) throw DomainError("curve grid times must be non-negative");
    CurvePoint p;
    p.t = t;
    if (spline) {
      p.arc = t == 0.0 ? 0.0 : arc_length_model2(means.mu, *spec.spline, t, spec.quad_points);
      SplineHazardContext ctx{&*basis, means.mu, means.lambda, linpred, means.alpha,
                              spec.quad_points};
      p.survival = t == 0.0 ? 1.0 : std::exp(-ctx.cumulative_hazard(t));
    } else {
      const double c = speed_from_slope(means.mu[options.slope_index]);
      p.arc = t * c;
      p.survival = std::exp(-scale * t * expm1_ratio(means.alpha * c * t));
    }
    p.hazard = scale * std::exp(means.alpha * p.arc);
    table.population.push_back(p);
  }

  if (subjects.empty()) return table;
  if (means.b.rows() != static_cast<Eigen::Index>(subjects.size())) {
    throw DomainError("random-effect means do not match the subject list");
  }
  std::vector<double> arcs, times;
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    const auto& s = subjects[i];
    const Eigen::VectorXd b = means.b.row(static_cast<Eigen::Index>(i)).transpose();
    const double g = spline ? arc_length_model2(b, *spec.spline, s.t, spec.quad_points)
                            : s.t * speed_from_slope(b[options.slope_index]);
    table.subjects.push_back({s.id, s.t, g, false});
    arcs.push_back(g);
    times.push_back(s.t);
  }
  const auto flags = flag_high_risk(arcs, times, options.risk);
  for (std::size_t i = 0; i < flags.size(); ++i) table.subjects[i].flag = flags[i];
  return table;
}

}  // namespace balsam
