#pragma once

#include "balsam/model.hpp"
#include "balsam/random.hpp"
#include "balsam/rw_metropolis.hpp"

#include <Eigen/Dense>

#include <map>
#include <string>
#include <vector>

namespace balsam {

/// Which blocks a sweep updates, and how.
struct MwgOptions {
  bool update_lambda = true;
  bool update_beta = true;
  bool update_alpha = true;
  bool update_gamma = true;
  bool update_mu = true;
  bool update_Sigma = true;
  bool update_sigma2 = true;
  bool update_random_effects = true;
  /// Exact Gamma / normal draws for lambda and gamma instead of random-walk moves.
  bool conjugate_lambda = true;
  bool conjugate_gamma = true;
  /// Multiplies every initial random-walk scale; zero freezes the random-walk blocks.
  double scale_multiplier = 1.0;
};

/// Proposal scales of the random-walk blocks.
struct MwgAdaptation {
  ProposalScale lambda;
  ProposalScale beta;
  ProposalScale alpha;
  ProposalScale gamma;
  std::vector<ProposalScale> random_effects;
  bool adapting = true;

  void freeze();
  /// Flattened scales, for checking that nothing moves after burn-in.
  std::vector<double> snapshot() const;
};

MwgAdaptation default_adaptation(const JointModel& model, const MwgOptions& options = {});

/// Proposal and acceptance counts for one block.
struct BlockCounter {
  long proposed = 0;
  long accepted = 0;
  double rate() const { return proposed > 0 ? static_cast<double>(accepted) / proposed : 0.0; }
};

/**
 * Metropolis-within-Gibbs sampler over a ParameterState.
 *
 * Blocks run in the fixed order lambda, beta, alpha, gamma, mu, Sigma,
 * sigma2, then each b_i. mu, Sigma and sigma2 are always exact conjugate
 * draws; lambda and gamma are conjugate unless the options say otherwise.
 * Per-subject arc profiles and survival terms are cached so that a block
 * touching one subject costs one subject's work.
 */
class MwgSampler {
 public:
  MwgSampler(const JointModel& model, ParameterState initial, MwgOptions options = {});
  MwgSampler(const JointModel& model, ParameterState initial, MwgOptions options,
             MwgAdaptation adaptation);

  /// One full sweep; scales adapt only while the adaptation is not frozen.
  void sweep(Rng& rng);

  const ParameterState& state() const { return state_; }
  const MwgAdaptation& adaptation() const { return adaptation_; }
  MwgAdaptation& adaptation() { return adaptation_; }
  /// Freezes adaptation and clears the acceptance counters.
  void end_burn_in();
  std::map<std::string, double> acceptance_rates() const;
  /// Sum of cached survival, longitudinal and random-effect terms.
  double cached_log_likelihood() const;

 private:
  struct SubjectTerms {
    std::vector<double> profile;
    double arc_at_t = 0.0;
    double unit_hazard = 0.0;  ///< H_i(t_i) with lambda = 1
    double rss = 0.0;
  };

  void refresh_all();
  void refresh_survival(int i);
  double survival_term(int i) const;
  double survival_total() const;
  double longitudinal_term(int i) const;

  void update_lambda(Rng& rng);
  void update_beta(Rng& rng);
  void update_alpha(Rng& rng);
  void update_gamma(Rng& rng);
  void update_mu(Rng& rng);
  void update_Sigma(Rng& rng);
  void update_sigma2(Rng& rng);
  void update_random_effect(int i, Rng& rng);

  /// Recomputes unit hazards for trial (beta, alpha); false when any is non-finite.
  bool trial_hazards(const Eigen::VectorXd& beta, double alpha, std::vector<double>& unit,
                     std::vector<double>& arc) const;
  double survival_total(const Eigen::VectorXd& beta, double alpha,
                        const std::vector<double>& unit, const std::vector<double>& arc) const;

  const JointModel& model_;
  ParameterState state_;
  MwgOptions options_;
  MwgAdaptation adaptation_;
  std::vector<SubjectTerms> terms_;
  Eigen::LLT<Eigen::MatrixXd> sigma_chol_;
  Eigen::MatrixXd sigma_inv_;
  std::vector<Eigen::MatrixXd> gram_;  ///< design' design per subject
  long total_measurements_ = 0;
  std::map<std::string, BlockCounter> counters_;
};

/// One sweep from `state`, for callers that do not keep a sampler around.
ParameterState mwg_step(const JointModel& model, const ParameterState& state,
                        MwgAdaptation& adaptation, Rng& rng, const MwgOptions& options = {});

}  // namespace balsam
