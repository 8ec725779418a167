#pragma once

#include "balsam/diagnostics.hpp"
#include "balsam/model.hpp"
#include "balsam/sampler.hpp"
#include "balsam/simulate.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace balsam {

using Json = nlohmann::ordered_json;

enum class Command { Simulate, Fit, Study, Curves };

std::string to_string(Command command);

/// How the fit command reads its CSV inputs.
struct DataOptions {
  std::string longitudinal;
  std::string survival;
  /// Survival columns used as x1..xP; empty means every column after delta.
  std::vector<std::string> covariate_columns;
  /// "none" or "sqrt", applied to z on ingestion.
  std::string transform = "none";
};

struct StudyOptions {
  int replicates = 100;
  /// Study-level error when more than this fraction of replicates fail.
  double max_failed_fraction = 0.2;
};

struct CurveGrid {
  double start = 0.0;
  double end = 24.0;
  int points = 49;

  std::vector<double> nodes() const;
};

struct CurvesOptions {
  std::string fit_dir;
  std::vector<Eigen::VectorXd> profiles;
  CurveGrid grid;
  CurveOptions curve;
};

/**
 * One command's configuration with every default made explicit.
 * Sections the command does not use stay empty.
 */
struct RunConfig {
  Command command = Command::Fit;
  std::uint64_t seed = 1;
  std::optional<ModelSpec> model;
  std::optional<SimulationDesign> simulation;
  std::optional<SamplerConfig> sampler;
  DataOptions data;
  StudyOptions study;
  CurvesOptions curves;
};

/// Command-line values that take precedence over the document.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::string> preset;
  std::optional<std::string> longitudinal;
  std::optional<std::string> survival;
  std::optional<std::string> fit_dir;
};

/**
 * Parses a command document. Unknown keys and type mismatches raise
 * ConfigError carrying the JSON pointer of the offending value. A run
 * manifest is accepted too: its "resolved_config" member is used.
 */
RunConfig parse_run_config(const Json& doc, Command command, const Overrides& overrides = {});
RunConfig load_run_config(const std::string& path, Command command,
                          const Overrides& overrides = {});

/// Resolved configuration; parsing it back yields the same RunConfig.
Json to_json(const RunConfig& config);

Json to_json(const ModelSpec& spec);
Json to_json(const SamplerConfig& config);
Json to_json(const SimulationDesign& design);
Json population_json(const ModelSpec& spec, const ParameterState& state);

ModelSpec parse_model_spec(const Json& j, const std::string& pointer = "/model");
SamplerConfig parse_sampler_config(const Json& j, const std::string& pointer = "/sampler",
                                   const SamplerConfig& base = {});

}  // namespace balsam
