#pragma once

#include "balsam/model.hpp"
#include "balsam/sampler.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace balsam {

using ChainDraws = std::vector<std::vector<double>>;

/// Type-7 sample quantile (linear interpolation between order statistics), p in [0, 1].
double percentile(std::vector<double> values, double p);

/// Split-Rhat; nullopt when the within-half variance is zero.
std::optional<double> split_rhat(const ChainDraws& chains);

struct EssEstimate {
  double value = 0.0;
  /// True when the estimate exceeds the number of draws (antithetic chains).
  bool exceeds_draws = false;
};

/**
 * Multi-chain ESS from autocorrelations with Geyer's initial monotone
 * sequence truncation. The value is reported uncapped. nullopt when the
 * draws have no variance.
 */
std::optional<EssEstimate> effective_sample_size(const ChainDraws& chains);

struct DicResult {
  double dic = 0.0;
  double p_d = 0.0;
  double mean_deviance = 0.0;
};

/// p_D = sample variance / 2 of the deviance draws, DIC = mean + p_D.
DicResult dic(std::span<const double> deviance);

struct SummaryRow {
  std::string name;
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q975 = 0.0;
  std::optional<double> rhat;
  /// Capped at the total retained draw count.
  std::optional<double> ess;
  bool ess_capped = false;
};

SummaryRow summarize_parameter(const std::string& name, const ChainDraws& chains);
std::vector<SummaryRow> summarize(const PosteriorSamples& samples);

struct CoverageReport {
  std::vector<std::string> names;
  std::vector<double> rates;
  std::vector<int> covered;
  int replicates = 0;
  int failures = 0;
};

/**
 * Per-parameter fraction of replicates whose [q2.5, q97.5] interval
 * contains the truth (closed interval). `truth` follows the row order.
 */
CoverageReport score_coverage(const std::vector<std::vector<SummaryRow>>& replicates,
                              std::span<const double> truth, int failures = 0);

enum class RiskDirection { Above, Below };
enum class RiskCombine { All, Any };

struct RiskRule {
  double arc_percentile = 95.0;
  RiskDirection arc_direction = RiskDirection::Above;
  double time_percentile = 95.0;
  RiskDirection time_direction = RiskDirection::Above;
  RiskCombine combine = RiskCombine::All;
};

/// True for subjects strictly beyond the percentile limits in the configured directions.
std::vector<bool> flag_high_risk(std::span<const double> arc, std::span<const double> times,
                                 const RiskRule& rule = {});

struct CurvePoint {
  double t = 0.0;
  double arc = 0.0;
  double hazard = 0.0;
  double survival = 1.0;
};

struct SubjectCurve {
  std::string id;
  double t = 0.0;
  double arc = 0.0;
  bool flag = false;
};

struct CurveTable {
  std::vector<CurvePoint> population;
  std::vector<SubjectCurve> subjects;
};

struct CurveOptions {
  /// Column of mu (and b_i) used as the trajectory slope for Model I / Ia.
  int slope_index = 1;
  RiskRule risk;
};

/**
 * Population curves at a covariate profile from posterior means, plus
 * per-subject arc lengths G_i(t_i) and risk flags when subjects are given.
 */
CurveTable curve_table(const ModelSpec& spec, const ParameterState& means,
                       const Eigen::VectorXd& covariate_profile, std::span<const double> grid,
                       std::span<const SubjectRecord> subjects = {},
                       const CurveOptions& options = {});

}  // namespace balsam
