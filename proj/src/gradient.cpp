#include "balsam/gradient.hpp"

#include "balsam/errors.hpp"
#include "balsam/quadrature.hpp"

#include <fmt/format.h>

#include <cmath>
#include <limits>
#include <numbers>

namespace balsam {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

ParameterLayout::ParameterLayout(const ModelSpec& spec, int num_subjects)
    : n_(num_subjects),
      p_(spec.num_covariates),
      k_(spec.random_effect_dim()),
      has_gamma_(spec.has_gamma()) {
  mu_ = 2 + p_ + (has_gamma_ ? 1 : 0);
  chol_ = mu_ + k_;
  size_ = chol_ + k_ * (k_ + 1) / 2 + 1 + n_ * k_;
}

Eigen::VectorXd ParameterLayout::to_unconstrained(const ParameterState& state) const {
  Eigen::VectorXd theta(size_);
  theta[log_lambda()] = std::log(state.lambda);
  theta.segment(beta(), p_) = state.beta;
  theta[alpha()] = state.alpha;
  if (has_gamma_) theta[gamma()] = state.gamma;
  theta.segment(mu_, k_) = state.mu;
  Eigen::LLT<Eigen::MatrixXd> llt(state.Sigma);
  if (llt.info() != Eigen::Success) throw NumericalError("Sigma is not positive definite");
  const Eigen::MatrixXd l = llt.matrixL();
  int at = chol_;
  for (int r = 0; r < k_; ++r) {
    for (int c = 0; c <= r; ++c) theta[at++] = (c == r) ? std::log(l(r, r)) : l(r, c);
  }
  theta[log_sigma2()] = std::log(state.sigma2);
  for (int i = 0; i < n_; ++i) theta.segment(random_effect(i), k_) = state.b.row(i).transpose();
  return theta;
}

ParameterState ParameterLayout::to_state(const Eigen::VectorXd& theta) const {
  ParameterState s;
  s.lambda = std::exp(theta[log_lambda()]);
  s.beta = theta.segment(beta(), p_);
  s.alpha = theta[alpha()];
  s.gamma = has_gamma_ ? theta[gamma()] : 0.0;
  s.mu = theta.segment(mu_, k_);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(k_, k_);
  int at = chol_;
  for (int r = 0; r < k_; ++r) {
    for (int c = 0; c <= r; ++c) {
      l(r, c) = (c == r) ? std::exp(theta[at]) : theta[at];
      ++at;
    }
  }
  const Eigen::MatrixXd sigma = l * l.transpose();
  s.Sigma = 0.5 * (sigma + sigma.transpose());
  s.sigma2 = std::exp(theta[log_sigma2()]);
  s.b.resize(n_, k_);
  for (int i = 0; i < n_; ++i) s.b.row(i) = theta.segment(random_effect(i), k_).transpose();
  return s;
}

double ParameterLayout::log_jacobian(const Eigen::VectorXd& theta) const {
  double lj = theta[log_lambda()] + theta[log_sigma2()] + k_ * std::numbers::ln2;
  int at = chol_;
  for (int r = 0; r < k_; ++r) {
    at += r;  // off-diagonal entries of row r
    lj += (k_ - r + 1) * theta[at];
    ++at;
  }
  return lj;
}

std::vector<std::string> ParameterLayout::names() const {
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(size_));
  out.emplace_back("log_lambda");
  for (int p = 0; p < p_; ++p) out.push_back(fmt::format("beta{}", p + 1));
  out.emplace_back("alpha");
  if (has_gamma_) out.emplace_back("gamma");
  for (int j = 0; j < k_; ++j) out.push_back(fmt::format("mu{}", j + 1));
  for (int r = 0; r < k_; ++r) {
    for (int c = 0; c <= r; ++c) {
      out.push_back(c == r ? fmt::format("log_L{}{}", r + 1, c + 1)
                           : fmt::format("L{}{}", r + 1, c + 1));
    }
  }
  out.emplace_back("log_sigma2");
  for (int i = 0; i < n_; ++i) {
    for (int j = 0; j < k_; ++j) out.push_back(fmt::format("b[{},{}]", i + 1, j + 1));
  }
  return out;
}

double log_density_unconstrained(const JointModel& model, const ParameterLayout& layout,
                                 const Eigen::VectorXd& theta) {
  const double lp = model.log_posterior(layout.to_state(theta));
  return lp + layout.log_jacobian(theta);
}

double grad_log_density_unconstrained(const JointModel& model, const ParameterLayout& layout,
                                      const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
  const ModelSpec& spec = model.spec();
  const ParameterState st = layout.to_state(theta);
  const int n = model.size();
  const int k = layout.dim();
  const auto& priors = spec.priors;

  grad.setZero(layout.size());
  double value = 0.0;
  double g_loglam = 0.0, g_alpha = 0.0, g_gamma = 0.0, g_logs2 = 0.0;
  Eigen::VectorXd g_beta = Eigen::VectorXd::Zero(layout.num_covariates());
  Eigen::VectorXd g_mu = Eigen::VectorXd::Zero(k);
  Eigen::MatrixXd scatter = Eigen::MatrixXd::Zero(k, k);

  const Eigen::LLT<Eigen::MatrixXd> chol(st.Sigma);
  const double log_lambda = std::log(st.lambda);
  double half_log_det = 0.0;
  for (int j = 0; j < k; ++j) half_log_det += std::log(chol.matrixLLT()(j, j));

  std::vector<double> speeds, arc, slopes;
  for (int i = 0; i < n; ++i) {
    const auto& subj = model.subject(i);
    const auto& cache = model.cache(i);
    const Eigen::VectorXd b_i = st.b.row(i).transpose();
    Eigen::VectorXd g_b = Eigen::VectorXd::Zero(k);

    if (model.options().include_survival) {
      const double lp = model.linpred(st.beta, i);
      const double scale = st.lambda * std::exp(lp);
      double ll = 0.0, hazard_total = 0.0;
      if (spec.kind != ModelKind::II) {
        const double b1 = b_i[1];
        const double c = speed_from_slope(b1);
        const double t = subj.t;
        const double a = st.alpha * c * t;
        hazard_total = scale * t * expm1_ratio(a);
        ll = subj.delta * (log_lambda + lp + st.alpha * c * t) - hazard_total;
        const double de = scale * t * expm1_ratio_derivative(a);
        g_alpha += subj.delta * c * t - de * c * t;
        g_b[1] += (subj.delta - de) * st.alpha * t * b1 / c;
      } else {
        const Eigen::Index nodes = cache.slope_basis.rows();
        const auto m = static_cast<std::size_t>(nodes - 1);
        const double step = cache.step;
        speeds.resize(m + 1);
        slopes.resize(m + 1);
        arc.resize(m + 1);
        for (std::size_t q = 0; q <= m; ++q) {
          slopes[q] = cache.slope_basis.row(static_cast<Eigen::Index>(q)).dot(b_i);
          speeds[q] = speed_from_slope(slopes[q]);
        }
        prefix_trapezoid(speeds, step, arc);
        // weighted hazard A_q = w_q h_q and its suffix sums
        double dh_dalpha = 0.0;
        std::vector<double> weighted(m + 1);
        for (std::size_t q = 0; q <= m; ++q) {
          const double w = (q == 0 || q == m) ? 0.5 * step : step;
          weighted[q] = w * scale * std::exp(st.alpha * arc[q]);
          hazard_total += weighted[q];
          dh_dalpha += weighted[q] * arc[q];
        }
        ll = subj.delta * (log_lambda + lp + st.alpha * arc[m]) - hazard_total;
        g_alpha += subj.delta * arc[m] - dh_dalpha;

        // coef_j = delta * dG_m/dv_j - sum_{q >= j} A_q dG_q/dv_j
        double suffix = 0.0;  // sum_{q > j} A_q
        for (std::size_t jj = m + 1; jj-- > 0;) {
          double r_j;
          double c_mj;
          if (jj == 0) {
            r_j = 0.5 * step * suffix;
            c_mj = m == 0 ? 0.0 : 0.5 * step;
          } else {
            r_j = 0.5 * step * weighted[jj] + step * suffix;
            c_mj = (jj == m) ? 0.5 * step : step;
          }
          const double coef = subj.delta * c_mj - r_j;
          const double dv = slopes[jj] / speeds[jj];
          g_b.noalias() += (st.alpha * coef * dv) *
                           cache.slope_basis.row(static_cast<Eigen::Index>(jj)).transpose();
          suffix += weighted[jj];
        }
      }
      value += ll;
      g_loglam += subj.delta - hazard_total;
      if (layout.num_covariates() > 0) g_beta += (subj.delta - hazard_total) * subj.x;
    }

    if (model.options().include_longitudinal) {
      Eigen::VectorXd resid =
          Eigen::Map<const Eigen::VectorXd>(subj.z.data(), static_cast<Eigen::Index>(subj.z.size())) -
          cache.design * b_i;
      double xg = 0.0;
      if (spec.has_gamma()) {
        xg = subj.x[*spec.longitudinal_covariate];
        resid.array() -= st.gamma * xg;
      }
      const double rss = resid.squaredNorm();
      const double count = static_cast<double>(resid.size());
      value += -0.5 * count * (kLog2Pi + std::log(st.sigma2)) - 0.5 * rss / st.sigma2;
      g_logs2 += -0.5 * count + 0.5 * rss / st.sigma2;
      g_b.noalias() += cache.design.transpose() * resid / st.sigma2;
      if (spec.has_gamma()) g_gamma += xg * resid.sum() / st.sigma2;
    }

    const Eigen::VectorXd e = b_i - st.mu;
    const Eigen::VectorXd u = chol.solve(e);
    value += -0.5 * k * kLog2Pi - half_log_det - 0.5 * e.dot(u);
    g_b -= u;
    g_mu += u;
    scatter.noalias() += e * e.transpose();
    grad.segment(layout.random_effect(i), k) = g_b;
  }

  // Population priors with the log-scale Jacobians folded in.
  value += model.log_prior(st) + layout.log_jacobian(theta);
  g_loglam += priors.lambda_shape - priors.lambda_rate * st.lambda;
  g_beta -= st.beta / (priors.beta_sd * priors.beta_sd);
  g_alpha -= st.alpha / (priors.alpha_sd * priors.alpha_sd);
  if (spec.has_gamma()) g_gamma -= st.gamma / (priors.gamma_sd * priors.gamma_sd);
  g_mu -= st.mu / (priors.mu_sd * priors.mu_sd);
  g_logs2 += -priors.sigma2_shape + priors.sigma2_rate / st.sigma2;

  // d/dSigma of the random-effect densities and the inverse-Wishart prior.
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(k, k);
  const Eigen::MatrixXd sigma_inv = chol.solve(eye);
  const Eigen::MatrixXd outer = scatter + priors.wishart_scale;
  const Eigen::MatrixXd g_sigma = -0.5 * (n + priors.wishart_df + k + 1.0) * sigma_inv +
                                  0.5 * sigma_inv * outer * sigma_inv;
  const Eigen::MatrixXd l = chol.matrixL();
  const Eigen::MatrixXd g_l = 2.0 * g_sigma * l;

  grad[layout.log_lambda()] = g_loglam;
  grad.segment(layout.beta(), layout.num_covariates()) = g_beta;
  grad[layout.alpha()] = g_alpha;
  if (layout.gamma() >= 0) grad[layout.gamma()] = g_gamma;
  grad.segment(layout.mu(), k) = g_mu;
  int at = layout.cholesky();
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c <= r; ++c) {
      grad[at++] = (c == r) ? g_l(r, r) * l(r, r) + (k - r + 1) : g_l(r, c);
    }
  }
  grad[layout.log_sigma2()] = g_logs2;

  if (!grad.allFinite()) {
    const auto names = layout.names();
    for (int j = 0; j < grad.size(); ++j) {
      if (!std::isfinite(grad[j])) {
        throw NumericalError(fmt::format("non-finite gradient component {}", names[static_cast<std::size_t>(j)]));
      }
    }
  }
  return std::isnan(value) ? -std::numeric_limits<double>::infinity() : value;
}

Eigen::VectorXd grad_log_posterior(const JointModel& model, const ParameterState& state) {
  const ParameterLayout layout(model.spec(), model.size());
  Eigen::VectorXd grad;
  grad_log_density_unconstrained(model, layout, layout.to_unconstrained(state), grad);
  return grad;
}

}  // namespace balsam

namespace balsam {

namespace {

Eigen::MatrixXd cholesky_factor(const ParameterLayout& layout, const Eigen::VectorXd& theta) {
  const int k = layout.dim();
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(k, k);
  int at = layout.cholesky();
  for (int r = 0; r < k; ++r) {
    for (int c = 0; c <= r; ++c) {
      l(r, c) = (c == r) ? std::exp(theta[at]) : theta[at];
      ++at;
    }
  }
  return l;
}

}  // namespace

Eigen::VectorXd to_noncentered(const ParameterLayout& layout, const Eigen::VectorXd& theta) {
  const int k = layout.dim();
  const Eigen::MatrixXd l = cholesky_factor(layout, theta);
  const Eigen::VectorXd mu = theta.segment(layout.mu(), k);
  Eigen::VectorXd out = theta;
  for (int i = 0; i < layout.num_subjects(); ++i) {
    out.segment(layout.random_effect(i), k) =
        l.triangularView<Eigen::Lower>().solve(theta.segment(layout.random_effect(i), k) - mu);
  }
  return out;
}

Eigen::VectorXd to_centered(const ParameterLayout& layout, const Eigen::VectorXd& theta_nc) {
  const int k = layout.dim();
  const Eigen::MatrixXd l = cholesky_factor(layout, theta_nc);
  const Eigen::VectorXd mu = theta_nc.segment(layout.mu(), k);
  Eigen::VectorXd out = theta_nc;
  for (int i = 0; i < layout.num_subjects(); ++i) {
    out.segment(layout.random_effect(i), k) = mu + l * theta_nc.segment(layout.random_effect(i), k);
  }
  return out;
}

double grad_log_density_noncentered(const JointModel& model, const ParameterLayout& layout,
                                    const Eigen::VectorXd& theta_nc, Eigen::VectorXd& grad) {
  const int k = layout.dim();
  const int n = layout.num_subjects();
  const Eigen::MatrixXd l = cholesky_factor(layout, theta_nc);
  Eigen::VectorXd gc;
  double value = grad_log_density_unconstrained(model, layout, to_centered(layout, theta_nc), gc);
  grad = gc;
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd gb = gc.segment(layout.random_effect(i), k);
    const Eigen::VectorXd eta = theta_nc.segment(layout.random_effect(i), k);
    grad.segment(layout.random_effect(i), k) = l.transpose() * gb;
    grad.segment(layout.mu(), k) += gb;
    int at = layout.cholesky();
    for (int r = 0; r < k; ++r) {
      for (int c = 0; c <= r; ++c) {
        grad[at] += gb[r] * eta[c] * (c == r ? l(r, r) : 1.0);
        ++at;
      }
    }
  }
  int at = layout.cholesky();
  for (int r = 0; r < k; ++r) {
    at += r;
    value += n * std::log(l(r, r));
    grad[at] += n;
    ++at;
  }
  return value;
}

}  // namespace balsam
