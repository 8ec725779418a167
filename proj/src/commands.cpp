#include "balsam/commands.hpp"

#include "balsam/csv_io.hpp"
#include "balsam/errors.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <ostream>
#include <sstream>

namespace balsam {

namespace fs = std::filesystem;

namespace {

std::string num(double v) { return fmt::format("{}", v); }

Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json optional_json(const std::optional<double>& v) { return v ? number_or_null(*v) : Json(nullptr); }

std::string join_path(const std::string& dir, const std::string& name) {
  return (fs::path(dir) / name).string();
}

void write_json(const std::string& path, const Json& j) { write_file_atomic(path, j.dump(2) + "\n"); }

Json summary_rows_json(const std::vector<SummaryRow>& rows) {
  Json a = Json::array();
  for (const auto& r : rows) {
    Json j;
    j["name"] = r.name;
    j["mean"] = r.mean;
    j["sd"] = r.sd;
    j["q2.5"] = r.q025;
    j["q97.5"] = r.q975;
    j["rhat"] = optional_json(r.rhat);
    j["ess"] = optional_json(r.ess);
    j["ess_capped"] = r.ess_capped;
    a.push_back(j);
  }
  return a;
}

std::string chain_csv(const PosteriorSamples& samples, std::size_t c) {
  const auto& ch = samples.chains[c];
  std::string out = "draw";
  for (const auto& n : samples.names) out += "," + n;
  out += ",deviance\n";
  for (Eigen::Index r = 0; r < ch.draws.rows(); ++r) {
    out += fmt::format("{}", r);
    for (Eigen::Index k = 0; k < ch.draws.cols(); ++k) out += "," + num(ch.draws(r, k));
    out += "," + num(ch.deviance[static_cast<std::size_t>(r)]) + "\n";
  }
  return out;
}

std::string random_effects_csv(const std::vector<SubjectRecord>& subjects, const Eigen::MatrixXd& b) {
  std::string out = "id,t,delta";
  for (Eigen::Index k = 0; k < b.cols(); ++k) out += fmt::format(",b{}", k + 1);
  out += "\n";
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    out += fmt::format("{},{},{}", subjects[i].id, num(subjects[i].t), subjects[i].delta);
    for (Eigen::Index k = 0; k < b.cols(); ++k) out += "," + num(b(static_cast<Eigen::Index>(i), k));
    out += "\n";
  }
  return out;
}

Json chain_meta_json(const ChainResult& ch) {
  Json j;
  j["seed"] = ch.seed;
  Json acc;
  for (const auto& [k, v] : ch.acceptance) acc[k] = v;
  j["acceptance"] = acc;
  j["divergences"] = ch.divergences;
  j["burn_in_divergences"] = ch.burn_in_divergences;
  j["step_size"] = ch.step_size;
  j["frozen_kernel"] = ch.frozen_kernel;
  j["warnings"] = ch.warnings;
  return j;
}

Json load_json(const std::string& path) {
  try {
    return Json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(fmt::format("{}: invalid JSON: {}", path, e.what()));
  }
}

double elapsed_seconds(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericalError*>(&e)) return kExitNumerical;
  if (dynamic_cast<const Error*>(&e)) return kExitConfig;
  if (dynamic_cast<const nlohmann::json::exception*>(&e)) return kExitConfig;
  return kExitNumerical;
}

FitSummary summarize_fit(const PosteriorSamples& samples) {
  FitSummary s;
  s.rows = summarize(samples);
  std::vector<double> dev;
  for (const auto& ch : samples.chains) dev.insert(dev.end(), ch.deviance.begin(), ch.deviance.end());
  if (dev.size() >= 2) s.dic = dic(dev);
  s.divergences = samples.divergences();
  s.post_burn_in_transitions = static_cast<long>(samples.config.iterations - samples.config.burn_in) *
                               static_cast<long>(samples.chains.size());
  return s;
}

std::string summary_text(const FitSummary& summary) {
  std::string out = fmt::format("{:<12} {:>22} {:>12} {:>12} {:>8} {:>10}\n", "Parameter",
                                "Mean (SD)", "2.5%", "97.5%", "Rhat", "ESS");
  for (const auto& r : summary.rows) {
    const std::string mean_sd = fmt::format("{:.4f} ({:.4f})", r.mean, r.sd);
    const std::string rhat = r.rhat ? fmt::format("{:.3f}", *r.rhat) : "NA";
    const std::string ess = r.ess ? fmt::format("{:.0f}", *r.ess) : "NA";
    out += fmt::format("{:<12} {:>22} {:>12.4f} {:>12.4f} {:>8} {:>10}\n", r.name, mean_sd, r.q025,
                       r.q975, rhat, ess);
  }
  out += fmt::format("\nDIC = {:.2f}, pD = {:.2f}\n", summary.dic.dic, summary.dic.p_d);
  if (summary.divergences > 0) {
    out += fmt::format("Divergent transitions after burn-in: {}\n", summary.divergences);
  }
  return out;
}

void cmd_simulate(const RunConfig& config, const std::string& out_dir) {
  const SimulatedDataset data = generate_dataset(*config.simulation);
  write_file_atomic(join_path(out_dir, "longitudinal.csv"), longitudinal_csv(data.subjects));
  write_file_atomic(join_path(out_dir, "survival.csv"), survival_csv(data.subjects));

  const auto& t = data.truth;
  Json truth;
  truth["population"] = population_json(config.simulation->spec, t.state);
  Json b = Json::array();
  for (Eigen::Index i = 0; i < t.state.b.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < t.state.b.cols(); ++k) row.push_back(t.state.b(i, k));
    b.push_back(row);
  }
  truth["ids"] = t.ids;
  truth["random_effects"] = b;
  Json uniforms = Json::array(), events = Json::array(), censor = Json::array();
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    uniforms.push_back(t.uniforms[i]);
    events.push_back(number_or_null(t.event_times[i]));
    censor.push_back(number_or_null(t.censor_times[i]));
  }
  truth["uniforms"] = uniforms;
  truth["event_times"] = events;
  truth["censor_times"] = censor;
  truth["failed_ids"] = t.failed_ids;
  write_json(join_path(out_dir, "truth.json"), truth);

  Json manifest;
  manifest["command"] = "simulate";
  manifest["seed"] = config.seed;
  manifest["resolved_config"] = to_json(config);
  manifest["subjects"] = data.subjects.size();
  manifest["failed_inversions"] = t.failed_ids.size();
  manifest["outputs"] = {"longitudinal.csv", "survival.csv", "truth.json"};
  write_json(join_path(out_dir, "manifest.json"), manifest);
}

void cmd_fit(const RunConfig& config, const std::string& out_dir, std::ostream* log) {
  const auto start = std::chrono::steady_clock::now();
  IngestOptions ingest;
  ingest.covariate_columns = config.data.covariate_columns;
  ingest.sqrt_transform = config.data.transform == "sqrt";
  IngestReport report;
  std::vector<SubjectRecord> subjects =
      read_dataset(config.data.longitudinal, config.data.survival, ingest, &report);
  if (static_cast<int>(report.covariate_names.size()) != config.model->num_covariates) {
    throw DataError(fmt::format("survival.csv provides {} covariates but the model expects {}",
                                report.covariate_names.size(), config.model->num_covariates));
  }
  if (log && report.dropped_missing > 0) {
    *log << fmt::format("warning: dropped {} longitudinal rows with missing z\n", report.dropped_missing);
  }
  const JointModel model(*config.model, subjects);
  const PosteriorSamples samples = run(model, *config.sampler);
  const FitSummary summary = summarize_fit(samples);

  for (std::size_t c = 0; c < samples.chains.size(); ++c) {
    write_file_atomic(join_path(out_dir, fmt::format("chains/chain_{}.csv", c + 1)), chain_csv(samples, c));
  }
  write_file_atomic(join_path(out_dir, "random_effects.csv"),
                    random_effects_csv(subjects, samples.random_effect_means()));

  Json sj;
  sj["parameters"] = summary_rows_json(summary.rows);
  sj["dic"] = summary.dic.dic;
  sj["p_d"] = summary.dic.p_d;
  sj["mean_deviance"] = summary.dic.mean_deviance;
  sj["divergences"] = summary.divergences;
  sj["retained_per_chain"] = samples.retained_per_chain();
  sj["chains"] = samples.chains.size();
  write_json(join_path(out_dir, "summary.json"), sj);
  write_file_atomic(join_path(out_dir, "summary.txt"), summary_text(summary));

  RunConfig echoed = config;
  echoed.data.longitudinal = fs::absolute(config.data.longitudinal).string();
  echoed.data.survival = fs::absolute(config.data.survival).string();
  Json manifest;
  manifest["command"] = "fit";
  manifest["seed"] = config.seed;
  manifest["resolved_config"] = to_json(echoed);
  manifest["runtime_seconds"] = elapsed_seconds(start);
  Json ingest_json;
  ingest_json["subjects"] = report.subjects;
  ingest_json["measurements"] = report.measurements;
  ingest_json["dropped_missing"] = report.dropped_missing;
  ingest_json["covariates"] = report.covariate_names;
  manifest["ingest"] = ingest_json;
  Json chains = Json::array();
  std::vector<std::string> warnings;
  for (const auto& ch : samples.chains) {
    chains.push_back(chain_meta_json(ch));
    warnings.insert(warnings.end(), ch.warnings.begin(), ch.warnings.end());
  }
  manifest["chains"] = chains;
  manifest["divergences"] = summary.divergences;
  manifest["dic"] = summary.dic.dic;
  manifest["p_d"] = summary.dic.p_d;
  manifest["warnings"] = warnings;
  Json outputs = Json::array();
  for (std::size_t c = 0; c < samples.chains.size(); ++c) outputs.push_back(fmt::format("chains/chain_{}.csv", c + 1));
  for (const char* f : {"random_effects.csv", "summary.json", "summary.txt"}) outputs.push_back(f);
  manifest["outputs"] = outputs;
  write_json(join_path(out_dir, "manifest.json"), manifest);
  if (log) {
    for (const auto& w : warnings) *log << "warning: " << w << "\n";
  }
}

StudyResult run_study(const SimulationDesign& design, const SamplerConfig& sampler,
                      int replicates, std::uint64_t seed, double max_failed_fraction,
                      const std::function<void(const StudyReplicate&)>& progress) {
  StudyResult result;
  const Eigen::VectorXd truth = population_vector(design.spec, design.truth);
  result.truth.assign(truth.data(), truth.data() + truth.size());
  std::vector<std::vector<SummaryRow>> summaries;
  long divergences = 0, transitions = 0;
  int failures = 0;
  for (int r = 0; r < replicates; ++r) {
    StudyReplicate rep;
    rep.index = r;
    rep.simulation_seed = stream_seed(seed, StreamTag::Replicate, 2 * static_cast<std::uint64_t>(r));
    rep.sampler_seed = stream_seed(seed, StreamTag::Replicate, 2 * static_cast<std::uint64_t>(r) + 1);
    try {
      SimulationDesign d = design;
      d.seed = rep.simulation_seed;
      const SimulatedDataset data = generate_dataset(d);
      rep.dropped_subjects = static_cast<int>(data.truth.failed_ids.size());
      const JointModel model(design.spec, data.subjects);
      SamplerConfig sc = sampler;
      sc.seed = rep.sampler_seed;
      const PosteriorSamples samples = run(model, sc);
      rep.summary = summarize(samples);
      rep.divergences = samples.divergences();
      rep.transitions = static_cast<long>(sc.iterations - sc.burn_in) * sc.chains;
      divergences += rep.divergences;
      transitions += rep.transitions;
      summaries.push_back(rep.summary);
    } catch (const NumericalError& e) {
      rep.failed = true;
      rep.failure = e.what();
      ++failures;
    }
    if (progress) progress(rep);
    result.replicates.push_back(std::move(rep));
  }
  result.coverage = score_coverage(summaries, result.truth, failures);
  result.divergence_rate = transitions > 0 ? static_cast<double>(divergences) / transitions : 0.0;
  if (failures > max_failed_fraction * replicates) {
    throw NumericalError(fmt::format("{} of {} replicates failed, above the allowed fraction {}",
                                     failures, replicates, max_failed_fraction));
  }
  return result;
}

Json study_json(const StudyResult& result) {
  const auto& c = result.coverage;
  Json j;
  j["replicates"] = c.replicates;
  j["failures"] = c.failures;
  j["divergence_rate"] = result.divergence_rate;
  Json params = Json::array();
  for (std::size_t k = 0; k < c.names.size(); ++k) {
    Json p;
    p["name"] = c.names[k];
    p["truth"] = result.truth[k];
    p["coverage"] = c.rates[k];
    p["covered"] = c.covered[k];
    params.push_back(p);
  }
  j["parameters"] = params;
  Json reps = Json::array();
  for (const auto& r : result.replicates) {
    Json rj;
    rj["index"] = r.index;
    rj["simulation_seed"] = r.simulation_seed;
    rj["sampler_seed"] = r.sampler_seed;
    rj["failed"] = r.failed;
    if (r.failed) rj["failure"] = r.failure;
    rj["dropped_subjects"] = r.dropped_subjects;
    rj["divergences"] = r.divergences;
    Json intervals = Json::array();
    for (const auto& row : r.summary) intervals.push_back({row.name, row.mean, row.q025, row.q975});
    rj["intervals"] = intervals;
    reps.push_back(rj);
  }
  j["replicate_results"] = reps;
  return j;
}

void cmd_study(const RunConfig& config, const std::string& out_dir, std::ostream* log) {
  auto progress = [&](const StudyReplicate& r) {
    if (!log) return;
    *log << fmt::format("replicate {}/{}: {}\n", r.index + 1, config.study.replicates,
                        r.failed ? "failed (" + r.failure + ")" : std::string("ok"));
  };
  const StudyResult result = run_study(*config.simulation, *config.sampler, config.study.replicates,
                                       config.seed, config.study.max_failed_fraction, progress);
  Json j = study_json(result);
  write_json(join_path(out_dir, "coverage.json"), j);
  Json manifest;
  manifest["command"] = "study";
  manifest["seed"] = config.seed;
  manifest["resolved_config"] = to_json(config);
  manifest["outputs"] = {"coverage.json"};
  write_json(join_path(out_dir, "manifest.json"), manifest);
}

void cmd_curves(const RunConfig& config, const std::string& out_dir) {
  const std::string dir = config.curves.fit_dir;
  const Json manifest = load_json(join_path(dir, "manifest.json"));
  if (!manifest.contains("resolved_config") || !manifest["resolved_config"].contains("model")) {
    throw DataError(fmt::format("{}: not a fit manifest", join_path(dir, "manifest.json")));
  }
  const ModelSpec spec = parse_model_spec(manifest["resolved_config"]["model"]);
  const Json summary = load_json(join_path(dir, "summary.json"));
  const auto names = population_parameter_names(spec);
  Eigen::VectorXd means(static_cast<Eigen::Index>(names.size()));
  for (std::size_t k = 0; k < names.size(); ++k) {
    bool found = false;
    for (const auto& p : summary.at("parameters")) {
      if (p.at("name") == names[k]) {
        means[static_cast<Eigen::Index>(k)] = p.at("mean").get<double>();
        found = true;
      }
    }
    if (!found) throw DataError(fmt::format("summary.json lacks parameter '{}'", names[k]));
  }
  ParameterState state = state_from_population(spec, means);

  const std::string re_text = read_file(join_path(dir, "random_effects.csv"));
  std::vector<SubjectRecord> subjects;
  std::vector<std::vector<double>> b_rows;
  {
    std::istringstream in(re_text);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto f = split_csv_line(line);
      const std::size_t k = static_cast<std::size_t>(spec.random_effect_dim());
      if (f.size() != 3 + k) throw DataError("random_effects.csv has the wrong number of columns");
      SubjectRecord s;
      s.id = f[0];
      s.t = std::stod(f[1]);
      s.delta = std::stoi(f[2]);
      subjects.push_back(s);
      std::vector<double> b;
      for (std::size_t j = 0; j < k; ++j) b.push_back(std::stod(f[3 + j]));
      b_rows.push_back(b);
    }
  }
  state.b.resize(static_cast<Eigen::Index>(b_rows.size()), spec.random_effect_dim());
  for (std::size_t i = 0; i < b_rows.size(); ++i) {
    for (std::size_t j = 0; j < b_rows[i].size(); ++j) {
      state.b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = b_rows[i][j];
    }
  }

  std::vector<Eigen::VectorXd> profiles = config.curves.profiles;
  if (profiles.empty()) profiles.push_back(Eigen::VectorXd::Zero(spec.num_covariates));
  const auto grid = config.curves.grid.nodes();
  std::string curves = "profile,t,G,hazard,survival\n";
  CurveTable last;
  for (std::size_t p = 0; p < profiles.size(); ++p) {
    last = curve_table(spec, state, profiles[p], grid, subjects, config.curves.curve);
    for (const auto& pt : last.population) {
      curves += fmt::format("{},{},{},{},{}\n", p + 1, num(pt.t), num(pt.arc), num(pt.hazard), num(pt.survival));
    }
  }
  std::string per_subject = "id,t,G,flag\n";
  for (const auto& s : last.subjects) {
    per_subject += fmt::format("{},{},{},{}\n", s.id, num(s.t), num(s.arc), s.flag ? 1 : 0);
  }
  write_file_atomic(join_path(out_dir, "curves.csv"), curves);
  write_file_atomic(join_path(out_dir, "subjects.csv"), per_subject);
  Json m;
  m["command"] = "curves";
  m["resolved_config"] = to_json(config);
  m["outputs"] = {"curves.csv", "subjects.csv"};
  write_json(join_path(out_dir, "manifest.json"), m);
}

int run_command(Command command, const std::string& config_path, const std::string& out_dir,
                const Overrides& overrides, std::ostream& out, std::ostream& err) {
  try {
    const RunConfig config = load_run_config(config_path, command, overrides);
    fs::create_directories(out_dir);
    switch (command) {
      case Command::Simulate: cmd_simulate(config, out_dir); break;
      case Command::Fit: cmd_fit(config, out_dir, &err); break;
      case Command::Study: cmd_study(config, out_dir, &err); break;
      case Command::Curves: cmd_curves(config, out_dir); break;
    }
    out << fmt::format("{} finished; outputs in {}\n", to_string(command), out_dir);
    return kExitOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace balsam
