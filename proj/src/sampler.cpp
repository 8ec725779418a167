#include "balsam/sampler.hpp"

#include "balsam/errors.hpp"
#include "balsam/gradient.hpp"
#include "balsam/mwg.hpp"
#include "balsam/nuts.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <stdexcept>
#include <thread>

namespace balsam {

std::string to_string(Algorithm algorithm) {
  return algorithm == Algorithm::MwG ? "MwG" : "NUTS";
}

Algorithm parse_algorithm(const std::string& text) {
  if (text == "MwG" || text == "mwg") return Algorithm::MwG;
  if (text == "NUTS" || text == "nuts") return Algorithm::NUTS;
  throw ConfigError(fmt::format("unknown algorithm '{}' (expected MwG or NUTS)", text));
}

void validate(const SamplerConfig& c) {
  if (c.chains < 1) throw ConfigError("chains must be at least 1");
  if (c.iterations < 1) throw ConfigError("iterations must be at least 1");
  if (c.burn_in < 0 || c.burn_in >= c.iterations) {
    throw ConfigError("burn_in must be non-negative and below iterations");
  }
  if (c.thin < 1) throw ConfigError("thin must be at least 1");
  if (!(c.target_accept > 0.0 && c.target_accept < 1.0)) {
    throw ConfigError("target_accept must lie in (0, 1)");
  }
  if (c.max_tree_depth < 0) throw ConfigError("max_tree_depth must be non-negative");
  if (c.threads < 1) throw ConfigError("threads must be at least 1");
}

SamplerConfig preset(const std::string& name) {
  SamplerConfig c;
  if (name == "table2") {
    c.algorithm = Algorithm::MwG;
    c.chains = 3;
    c.iterations = 100000;
    c.burn_in = 10000;
    c.thin = 10;
  } else if (name == "model1-sim") {
    c.algorithm = Algorithm::MwG;
    c.chains = 2;
    c.iterations = 20000;
    c.burn_in = 5000;
    c.thin = 5;
  } else if (name == "model2-sim") {
    c.algorithm = Algorithm::NUTS;
    c.chains = 2;
    c.iterations = 3000;
    c.burn_in = 1000;
    c.thin = 1;
    c.noncentered = true;
  } else {
    throw ConfigError(fmt::format("unknown preset '{}'", name));
  }
  return c;
}

std::vector<std::string> preset_names() { return {"table2", "model1-sim", "model2-sim"}; }

std::vector<std::vector<double>> PosteriorSamples::parameter(std::size_t column) const {
  std::vector<std::vector<double>> out;
  for (const auto& ch : chains) {
    const auto col = static_cast<Eigen::Index>(column);
    out.emplace_back(ch.draws.col(col).data(), ch.draws.col(col).data() + ch.draws.rows());
  }
  return out;
}

std::vector<std::vector<double>> PosteriorSamples::deviance() const {
  std::vector<std::vector<double>> out;
  for (const auto& ch : chains) out.push_back(ch.deviance);
  return out;
}

Eigen::MatrixXd PosteriorSamples::random_effect_means() const {
  Eigen::MatrixXd sum = chains.front().random_effect_means;
  for (std::size_t c = 1; c < chains.size(); ++c) sum += chains[c].random_effect_means;
  return sum / static_cast<double>(chains.size());
}

ParameterState PosteriorSamples::posterior_mean_state(const ModelSpec& spec) const {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(names.size()));
  long rows = 0;
  for (const auto& ch : chains) {
    mean += ch.draws.colwise().sum().transpose();
    rows += ch.draws.rows();
  }
  ParameterState state = state_from_population(spec, mean / static_cast<double>(rows));
  state.b = random_effect_means();
  return state;
}

long PosteriorSamples::divergences() const {
  long total = 0;
  for (const auto& ch : chains) total += ch.divergences;
  return total;
}

namespace {

ParameterState least_squares_start(const JointModel& model) {
  const int n = model.size();
  const int k = model.random_effect_dim();
  const auto& spec = model.spec();
  Eigen::MatrixXd xtx = 1e-8 * Eigen::MatrixXd::Identity(k, k);
  Eigen::VectorXd xtz = Eigen::VectorXd::Zero(k);
  std::vector<Eigen::VectorXd> zs;
  for (int i = 0; i < n; ++i) {
    const auto& s = model.subject(i);
    const auto& d = model.cache(i).design;
    zs.emplace_back(Eigen::Map<const Eigen::VectorXd>(s.z.data(), static_cast<Eigen::Index>(s.z.size())));
    xtx += d.transpose() * d;
    xtz += d.transpose() * zs.back();
  }
  const Eigen::VectorXd pooled = xtx.ldlt().solve(xtz);

  constexpr double kRidge = 1.0;
  ParameterState state;
  state.b.resize(n, k);
  double sse = 0.0;
  long count = 0;
  for (int i = 0; i < n; ++i) {
    const auto& d = model.cache(i).design;
    const Eigen::MatrixXd a = d.transpose() * d + kRidge * Eigen::MatrixXd::Identity(k, k);
    const Eigen::VectorXd bi = a.ldlt().solve(d.transpose() * zs[static_cast<std::size_t>(i)] + kRidge * pooled);
    state.b.row(i) = bi.transpose();
    sse += (zs[static_cast<std::size_t>(i)] - d * bi).squaredNorm();
    count += d.rows();
  }
  state.mu = state.b.colwise().mean().transpose();
  const Eigen::MatrixXd centered = state.b.rowwise() - state.mu.transpose();
  Eigen::MatrixXd cov = centered.transpose() * centered / std::max(1.0, n - 1.0);
  const double ridge = 0.05 * cov.diagonal().mean() + 1e-3;
  state.Sigma = cov + ridge * Eigen::MatrixXd::Identity(k, k);
  state.sigma2 = std::max(1e-3, count > 0 ? sse / static_cast<double>(count) : 1.0);

  double events = 0.0, follow_up = 0.0;
  for (int i = 0; i < n; ++i) {
    events += model.subject(i).delta;
    follow_up += model.subject(i).t;
  }
  state.lambda = std::max(events, 0.5) / follow_up;
  state.beta = Eigen::VectorXd::Zero(spec.num_covariates);
  state.alpha = 0.0;
  state.gamma = 0.0;
  return state;
}

double jitter_value(double x, Rng& rng) { return x + 0.1 * std::max(std::abs(x), 0.1) * rng.normal(); }

ParameterState jittered(const ParameterState& base, Rng& rng) {
  ParameterState s = base;
  s.lambda = base.lambda * std::exp(0.1 * rng.normal());
  for (Eigen::Index j = 0; j < s.beta.size(); ++j) s.beta[j] = jitter_value(base.beta[j], rng);
  s.alpha = jitter_value(base.alpha, rng);
  s.gamma = jitter_value(base.gamma, rng);
  for (Eigen::Index j = 0; j < s.mu.size(); ++j) s.mu[j] = jitter_value(base.mu[j], rng);
  s.Sigma = base.Sigma * std::exp(0.1 * rng.normal());
  s.sigma2 = base.sigma2 * std::exp(0.1 * rng.normal());
  for (Eigen::Index i = 0; i < s.b.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.b.cols(); ++j) s.b(i, j) = jitter_value(base.b(i, j), rng);
  }
  return s;
}

void check_invariants(const ParameterState& state, long draw) {
  if (!satisfies_invariants(state)) {
    throw NumericalError(fmt::format("retained draw {} violates the parameter invariants", draw));
  }
}

void assert_frozen(const std::vector<double>& at_freeze, const std::vector<double>& at_end) {
  if (at_freeze != at_end) throw std::logic_error("sampler kernel changed after burn-in");
}

ChainResult run_mwg_chain(const JointModel& model, const SamplerConfig& config,
                          const ParameterState& init, Rng& rng) {
  ChainResult out;
  const auto& spec = model.spec();
  const int retained = config.retained_per_chain();
  out.draws.resize(retained, static_cast<Eigen::Index>(population_parameter_names(spec).size()));
  out.deviance.reserve(static_cast<std::size_t>(retained));
  out.random_effect_means = Eigen::MatrixXd::Zero(model.size(), model.random_effect_dim());

  MwgSampler sampler(model, init);
  if (config.burn_in == 0) {
    sampler.end_burn_in();
    out.frozen_kernel = sampler.adaptation().snapshot();
  }
  long row = 0;
  for (int it = 0; it < config.iterations; ++it) {
    sampler.sweep(rng);
    if (it + 1 == config.burn_in) {
      sampler.end_burn_in();
      out.frozen_kernel = sampler.adaptation().snapshot();
    }
    if (it < config.burn_in || (it - config.burn_in + 1) % config.thin != 0) continue;
    const auto& state = sampler.state();
    if (row % 100 == 0) check_invariants(state, row);
    out.draws.row(row) = population_vector(spec, state).transpose();
    out.deviance.push_back(-2.0 * sampler.cached_log_likelihood());
    out.random_effect_means += state.b;
    ++row;
  }
  assert_frozen(out.frozen_kernel, sampler.adaptation().snapshot());
  out.random_effect_means /= static_cast<double>(std::max<long>(row, 1));
  out.acceptance = sampler.acceptance_rates();
  return out;
}

ChainResult run_nuts_chain(const JointModel& model, const SamplerConfig& config,
                           const ParameterState& init, Rng& rng) {
  ChainResult out;
  const auto& spec = model.spec();
  const ParameterLayout layout(spec, model.size());
  const int retained = config.retained_per_chain();
  out.draws.resize(retained, static_cast<Eigen::Index>(population_parameter_names(spec).size()));
  out.deviance.reserve(static_cast<std::size_t>(retained));
  out.random_effect_means = Eigen::MatrixXd::Zero(model.size(), model.random_effect_dim());

  const bool nc = config.noncentered;
  GradientFn fn = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    return nc ? grad_log_density_noncentered(model, layout, theta, grad)
              : grad_log_density_unconstrained(model, layout, theta, grad);
  };
  const Eigen::VectorXd theta0 = layout.to_unconstrained(init);
  NutsSettings settings;
  settings.max_tree_depth = config.max_tree_depth;
  NutsSampler sampler(fn, nc ? to_noncentered(layout, theta0) : theta0, config.burn_in, config.target_accept,
                      settings, config.step_size_adapt_iters);

  long row = 0;
  double accept_sum = 0.0, depth_sum = 0.0;
  for (int it = 0; it < config.iterations; ++it) {
    const NutsTransition& t = sampler.transition(it, rng);
    if (it < config.burn_in) {
      out.burn_in_divergences += t.divergent ? 1 : 0;
    } else {
      if (it == config.burn_in) out.frozen_kernel = {sampler.step_size()};
      out.divergences += t.divergent ? 1 : 0;
      accept_sum += t.accept_stat;
      depth_sum += t.tree_depth;
    }
    if (it < config.burn_in || (it - config.burn_in + 1) % config.thin != 0) continue;
    const ParameterState state = layout.to_state(nc ? to_centered(layout, t.theta) : t.theta);
    if (row % 100 == 0) check_invariants(state, row);
    out.draws.row(row) = population_vector(spec, state).transpose();
    out.deviance.push_back(model.deviance(state));
    out.random_effect_means += state.b;
    ++row;
  }
  assert_frozen(out.frozen_kernel, {sampler.step_size()});
  out.step_size = sampler.step_size();
  out.random_effect_means /= static_cast<double>(std::max<long>(row, 1));
  const double kept = std::max(1, config.iterations - config.burn_in);
  out.acceptance["accept_stat"] = accept_sum / kept;
  out.acceptance["tree_depth"] = depth_sum / kept;
  if (config.burn_in > 0 && 2 * out.burn_in_divergences > config.burn_in) {
    out.warnings.push_back(fmt::format("{} of {} burn-in transitions diverged",
                                       out.burn_in_divergences, config.burn_in));
  }
  if (out.divergences > 0) {
    out.warnings.push_back(fmt::format("{} divergent transitions after burn-in", out.divergences));
  }
  return out;
}

}  // namespace

ParameterState initial_state(const JointModel& model, Rng& rng, bool jitter) {
  const ParameterState base = least_squares_start(model);
  constexpr int kAttempts = 100;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    const bool perturb = jitter || attempt > 0;
    ParameterState s = perturb ? jittered(base, rng) : base;
    if (std::isfinite(model.log_posterior(s))) return s;
  }
  throw NumericalError(fmt::format("no starting point with finite posterior in {} attempts", kAttempts));
}

PosteriorSamples run(const JointModel& model, const SamplerConfig& config) {
  validate(config);
  PosteriorSamples samples;
  samples.names = population_parameter_names(model.spec());
  samples.config = config;
  samples.chains.resize(static_cast<std::size_t>(config.chains));
  std::vector<std::exception_ptr> errors(samples.chains.size());

  auto run_chain = [&](int c) {
    try {
      Rng init_rng(config.seed, StreamTag::Initialization, static_cast<std::uint64_t>(c));
      const ParameterState init = initial_state(model, init_rng, true);
      Rng rng(config.seed, StreamTag::Chain, static_cast<std::uint64_t>(c));
      ChainResult result = config.algorithm == Algorithm::MwG
                               ? run_mwg_chain(model, config, init, rng)
                               : run_nuts_chain(model, config, init, rng);
      result.seed = stream_seed(config.seed, StreamTag::Chain, static_cast<std::uint64_t>(c));
      samples.chains[static_cast<std::size_t>(c)] = std::move(result);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };

  const int workers = std::min(config.threads, config.chains);
  if (workers <= 1) {
    for (int c = 0; c < config.chains; ++c) run_chain(c);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int c = next++; c < config.chains; c = next++) run_chain(c);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return samples;
}

}  // namespace balsam
