#pragma once

#include "balsam/config.hpp"
#include "balsam/diagnostics.hpp"
#include "balsam/sampler.hpp"
#include "balsam/simulate.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace balsam {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNumerical = 3;

/// Maps an exception from a command to its exit code.
int exit_code_for(const std::exception& e);

void cmd_simulate(const RunConfig& config, const std::string& out_dir);
void cmd_fit(const RunConfig& config, const std::string& out_dir, std::ostream* log = nullptr);
void cmd_study(const RunConfig& config, const std::string& out_dir, std::ostream* log = nullptr);
void cmd_curves(const RunConfig& config, const std::string& out_dir);

/// Parses the config file and runs the command, printing errors; returns the exit code.
int run_command(Command command, const std::string& config_path, const std::string& out_dir,
                const Overrides& overrides, std::ostream& out, std::ostream& err);

struct FitSummary {
  std::vector<SummaryRow> rows;
  DicResult dic;
  long divergences = 0;
  long post_burn_in_transitions = 0;
};

FitSummary summarize_fit(const PosteriorSamples& samples);

/// Table-style text rendering of a fit summary.
std::string summary_text(const FitSummary& summary);

struct StudyReplicate {
  int index = 0;
  bool failed = false;
  std::string failure;
  std::uint64_t simulation_seed = 0;
  std::uint64_t sampler_seed = 0;
  std::vector<SummaryRow> summary;
  long divergences = 0;
  long transitions = 0;
  int dropped_subjects = 0;
};

struct StudyResult {
  std::vector<double> truth;
  std::vector<StudyReplicate> replicates;
  CoverageReport coverage;
  double divergence_rate = 0.0;
};

/**
 * Simulate, fit and score `replicates` datasets. Per-replicate seeds come
 * from the master seed. Replicates whose simulation or fit fails are
 * excluded and counted; more than `max_failed_fraction` of them is an error.
 */
StudyResult run_study(const SimulationDesign& design, const SamplerConfig& sampler,
                      int replicates, std::uint64_t seed, double max_failed_fraction,
                      const std::function<void(const StudyReplicate&)>& progress = {});

Json study_json(const StudyResult& result);

}  // namespace balsam
