#include "balsam/config.hpp"

#include "balsam/errors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <set>

namespace balsam {

namespace {

std::string escape_pointer_token(const std::string& key) {
  std::string out;
  for (char c : key) {
    if (c == '~') out += "~0";
    else if (c == '/') out += "~1";
    else out += c;
  }
  return out;
}

std::string json_type(const Json& j) { return j.type_name(); }

[[noreturn]] void fail(const std::string& pointer, const std::string& message) {
  throw ConfigError(fmt::format("{}: {}", pointer.empty() ? "/" : pointer, message));
}

/// Walks one JSON object, remembering which keys were consumed.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string pointer) : j_(j), pointer_(std::move(pointer)) {
    if (!j_.is_object()) fail(pointer_, fmt::format("expected an object, found {}", json_type(j_)));
  }

  std::string at(const std::string& key) const { return pointer_ + "/" + escape_pointer_token(key); }

  const Json* find(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return nullptr;
    return &*it;
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  double number(const std::string& key, double fallback) {
    const Json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number()) fail(at(key), fmt::format("expected a number, found {}", json_type(*v)));
    return v->get<double>();
  }

  std::optional<double> optional_number(const std::string& key) {
    const Json* v = find(key);
    if (!v) return std::nullopt;
    if (!v->is_number()) fail(at(key), fmt::format("expected a number, found {}", json_type(*v)));
    return v->get<double>();
  }

  long long integer(const std::string& key, long long fallback) {
    const Json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number_integer()) {
      fail(at(key), fmt::format("expected an integer, found {}", json_type(*v)));
    }
    return v->get<long long>();
  }

  std::uint64_t unsigned_integer(const std::string& key, std::uint64_t fallback) {
    const Json* v = find(key);
    if (!v) return fallback;
    if (!v->is_number_unsigned()) {
      fail(at(key), fmt::format("expected a non-negative integer, found {}", json_type(*v)));
    }
    return v->get<std::uint64_t>();
  }

  std::string string(const std::string& key, const std::string& fallback) {
    const Json* v = find(key);
    if (!v) return fallback;
    if (!v->is_string()) fail(at(key), fmt::format("expected a string, found {}", json_type(*v)));
    return v->get<std::string>();
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    const Json* v = find(key);
    if (!v) return fallback;
    return number_array(*v, at(key));
  }

  static std::vector<double> number_array(const Json& v, const std::string& pointer) {
    if (!v.is_array()) fail(pointer, fmt::format("expected an array, found {}", json_type(v)));
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!v[i].is_number()) {
        fail(fmt::format("{}/{}", pointer, i), fmt::format("expected a number, found {}", json_type(v[i])));
      }
      out.push_back(v[i].get<double>());
    }
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(at(it.key()), "unknown key");
    }
  }

 private:
  const Json& j_;
  std::string pointer_;
  std::set<std::string> seen_;
};

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

Eigen::MatrixXd parse_matrix(const Json& j, const std::string& pointer) {
  if (!j.is_array() || j.empty()) fail(pointer, "expected a non-empty array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  Eigen::MatrixXd m;
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = ObjectReader::number_array(j[static_cast<std::size_t>(r)],
                                                fmt::format("{}/{}", pointer, r));
    if (r == 0) m.resize(rows, static_cast<Eigen::Index>(row.size()));
    if (static_cast<Eigen::Index>(row.size()) != m.cols()) {
      fail(fmt::format("{}/{}", pointer, r), "rows have different lengths");
    }
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Json vector_json(const Eigen::VectorXd& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

template <typename F>
auto with_pointer(const std::string& pointer, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    if (!what.empty() && what.front() == '/') throw;
    fail(pointer, what);
  }
}

PriorSpec parse_priors(const Json& j, const std::string& pointer) {
  ObjectReader r(j, pointer);
  PriorSpec p;
  p.lambda_shape = r.number("lambda_shape", p.lambda_shape);
  p.lambda_rate = r.number("lambda_rate", p.lambda_rate);
  p.beta_sd = r.number("beta_sd", p.beta_sd);
  p.alpha_sd = r.number("alpha_sd", p.alpha_sd);
  p.gamma_sd = r.number("gamma_sd", p.gamma_sd);
  p.mu_sd = r.number("mu_sd", p.mu_sd);
  p.sigma2_shape = r.number("sigma2_shape", p.sigma2_shape);
  p.sigma2_rate = r.number("sigma2_rate", p.sigma2_rate);
  p.wishart_df = r.number("wishart_df", p.wishart_df);
  if (const Json* s = r.find("wishart_scale")) p.wishart_scale = parse_matrix(*s, r.at("wishart_scale"));
  r.finish();
  for (double v : {p.lambda_shape, p.lambda_rate, p.beta_sd, p.alpha_sd, p.gamma_sd, p.mu_sd,
                   p.sigma2_shape, p.sigma2_rate}) {
    if (!(v > 0.0)) fail(pointer, "prior shapes, rates and standard deviations must be > 0");
  }
  return p;
}

SplineConfig parse_spline(const Json& j, const std::string& pointer) {
  ObjectReader r(j, pointer);
  SplineConfig s;
  s.order = static_cast<int>(r.integer("order", s.order));
  s.inner_knots = r.numbers("inner_knots", {});
  s.start = r.number("start", s.start);
  s.end = r.number("end", s.end);
  r.finish();
  return s;
}

CovariateLaw parse_covariate_law(const Json& j, const std::string& pointer) {
  ObjectReader r(j, pointer);
  CovariateLaw law;
  const std::string kind = r.string("law", "bernoulli");
  if (kind == "bernoulli") {
    law.kind = CovariateLaw::Kind::Bernoulli;
    law.p = r.number("p", law.p);
  } else if (kind == "normal") {
    law.kind = CovariateLaw::Kind::Normal;
    law.mean = r.number("mean", law.mean);
    law.sd = r.number("sd", law.sd);
  } else {
    fail(r.at("law"), fmt::format("unknown covariate law '{}' (expected bernoulli or normal)", kind));
  }
  r.finish();
  return law;
}

ParameterState parse_truth(const Json& j, const std::string& pointer, const ModelSpec& spec) {
  ObjectReader r(j, pointer);
  ParameterState t;
  t.lambda = r.number("lambda", 0.02);
  t.beta = to_vector(r.numbers("beta", std::vector<double>(static_cast<std::size_t>(spec.num_covariates), 0.0)));
  t.alpha = r.number("alpha", 0.0);
  t.gamma = r.number("gamma", 0.0);
  const Json* mu = r.find("mu");
  if (!mu) fail(r.at("mu"), "missing required key");
  t.mu = to_vector(ObjectReader::number_array(*mu, r.at("mu")));
  const Json* sigma = r.find("Sigma");
  if (!sigma) fail(r.at("Sigma"), "missing required key");
  t.Sigma = parse_matrix(*sigma, r.at("Sigma"));
  t.sigma2 = r.number("sigma2", 1.0);
  r.finish();
  return t;
}

CensoringSpec parse_censoring(const Json& j, const std::string& pointer) {
  ObjectReader r(j, pointer);
  CensoringSpec c;
  if (auto v = r.optional_number("administrative_time")) c.administrative_time = *v;
  c.independent_rate = r.number("independent_rate", c.independent_rate);
  r.finish();
  return c;
}

SimulationDesign parse_design(const Json& j, const std::string& pointer, const ModelSpec& spec,
                              std::uint64_t seed) {
  ObjectReader r(j, pointer);
  SimulationDesign d;
  d.spec = spec;
  d.seed = seed;
  d.n = static_cast<int>(r.integer("n", d.n));
  const Json* truth = r.find("truth");
  if (!truth) fail(r.at("truth"), "missing required key");
  d.truth = parse_truth(*truth, r.at("truth"), spec);
  if (const Json* cov = r.find("covariates")) {
    if (!cov->is_array()) fail(r.at("covariates"), "expected an array");
    for (std::size_t i = 0; i < cov->size(); ++i) {
      d.covariates.push_back(parse_covariate_law((*cov)[i], fmt::format("{}/{}", r.at("covariates"), i)));
    }
  } else {
    d.covariates.assign(static_cast<std::size_t>(spec.num_covariates), CovariateLaw{});
  }
  d.schedule = r.numbers("schedule", {0, 2, 4, 6, 8, 10, 12, 14, 16, 18, 20, 22, 24});
  if (const Json* c = r.find("censoring")) {
    d.censoring = parse_censoring(*c, r.at("censoring"));
  } else {
    d.censoring.administrative_time = 24.0;
  }
  d.t_max = r.number("t_max", d.t_max);
  d.max_failure_fraction = r.number("max_failure_fraction", d.max_failure_fraction);
  r.finish();
  with_pointer(pointer, [&] { validate(d); });
  return d;
}

Json censoring_json(const CensoringSpec& c) {
  Json j;
  j["administrative_time"] =
      std::isfinite(c.administrative_time) ? Json(c.administrative_time) : Json(nullptr);
  j["independent_rate"] = c.independent_rate;
  return j;
}

RiskDirection parse_direction(const std::string& s, const std::string& pointer) {
  if (s == "above") return RiskDirection::Above;
  if (s == "below") return RiskDirection::Below;
  fail(pointer, fmt::format("unknown direction '{}' (expected above or below)", s));
}

RiskRule parse_risk(const Json& j, const std::string& pointer) {
  ObjectReader r(j, pointer);
  RiskRule rule;
  rule.arc_percentile = r.number("arc_percentile", rule.arc_percentile);
  rule.arc_direction = parse_direction(r.string("arc_direction", "above"), r.at("arc_direction"));
  rule.time_percentile = r.number("time_percentile", rule.time_percentile);
  rule.time_direction = parse_direction(r.string("time_direction", "above"), r.at("time_direction"));
  const std::string combine = r.string("combine", "all");
  if (combine == "all") rule.combine = RiskCombine::All;
  else if (combine == "any") rule.combine = RiskCombine::Any;
  else fail(r.at("combine"), fmt::format("unknown combine rule '{}' (expected all or any)", combine));
  r.finish();
  for (double p : {rule.arc_percentile, rule.time_percentile}) {
    if (!(p >= 0.0 && p <= 100.0)) fail(pointer, "percentiles must lie in [0, 100]");
  }
  return rule;
}

Json risk_json(const RiskRule& rule) {
  auto dir = [](RiskDirection d) { return d == RiskDirection::Above ? "above" : "below"; };
  Json j;
  j["arc_percentile"] = rule.arc_percentile;
  j["arc_direction"] = dir(rule.arc_direction);
  j["time_percentile"] = rule.time_percentile;
  j["time_direction"] = dir(rule.time_direction);
  j["combine"] = rule.combine == RiskCombine::All ? "all" : "any";
  return j;
}

}  // namespace

std::string to_string(Command command) {
  switch (command) {
    case Command::Simulate: return "simulate";
    case Command::Fit: return "fit";
    case Command::Study: return "study";
    case Command::Curves: return "curves";
  }
  return "fit";
}

std::vector<double> CurveGrid::nodes() const {
  std::vector<double> out;
  if (points == 1) return {start};
  for (int k = 0; k < points; ++k) {
    out.push_back(k == points - 1 ? end : start + (end - start) * k / (points - 1));
  }
  return out;
}

ModelSpec parse_model_spec(const Json& j, const std::string& pointer) {
  ObjectReader r(j, pointer);
  ModelSpec spec;
  spec.kind = with_pointer(r.at("kind"), [&] { return parse_model_kind(r.string("kind", "I")); });
  spec.num_covariates = static_cast<int>(r.integer("num_covariates", spec.num_covariates));
  if (const Json* lc = r.find("longitudinal_covariate")) {
    if (!lc->is_number_integer()) fail(r.at("longitudinal_covariate"), "expected an integer");
    spec.longitudinal_covariate = lc->get<int>();
  }
  if (const Json* s = r.find("spline")) spec.spline = parse_spline(*s, r.at("spline"));
  if (const Json* p = r.find("priors")) spec.priors = parse_priors(*p, r.at("priors"));
  spec.quad_points = static_cast<int>(r.integer("quad_points", spec.quad_points));
  r.finish();
  return with_pointer(pointer, [&] { return resolve(spec); });
}

SamplerConfig parse_sampler_config(const Json& j, const std::string& pointer,
                                   const SamplerConfig& base) {
  ObjectReader r(j, pointer);
  SamplerConfig c = base;
  c.algorithm = with_pointer(r.at("algorithm"), [&] {
    return parse_algorithm(r.string("algorithm", to_string(base.algorithm)));
  });
  c.chains = static_cast<int>(r.integer("chains", c.chains));
  c.iterations = static_cast<int>(r.integer("iterations", c.iterations));
  c.burn_in = static_cast<int>(r.integer("burn_in", c.burn_in));
  c.thin = static_cast<int>(r.integer("thin", c.thin));
  c.target_accept = r.number("target_accept", c.target_accept);
  c.max_tree_depth = static_cast<int>(r.integer("max_tree_depth", c.max_tree_depth));
  c.step_size_adapt_iters = static_cast<int>(r.integer("step_size_adapt_iters", c.step_size_adapt_iters));
  c.threads = static_cast<int>(r.integer("threads", c.threads));
  const std::string param = r.string("parameterization", c.noncentered ? "noncentered" : "centered");
  if (param != "centered" && param != "noncentered") {
    fail(r.at("parameterization"), "expected \"centered\" or \"noncentered\"");
  }
  c.noncentered = param == "noncentered";
  r.finish();
  with_pointer(pointer, [&] { validate(c); });
  return c;
}

RunConfig parse_run_config(const Json& input, Command command, const Overrides& o) {
  const Json& doc = input.is_object() && input.contains("resolved_config") ? input["resolved_config"] : input;
  ObjectReader r(doc, "");
  RunConfig cfg;
  cfg.command = command;
  const std::string declared = r.string("command", to_string(command));
  if (declared != to_string(command)) {
    fail("/command", fmt::format("document is for '{}', not '{}'", declared, to_string(command)));
  }
  const std::uint64_t declared_seed = r.unsigned_integer("seed", 1);
  cfg.seed = o.seed ? *o.seed : declared_seed;

  const bool needs_model = command != Command::Curves;
  if (const Json* m = r.find("model")) {
    cfg.model = parse_model_spec(*m, "/model");
  } else if (needs_model) {
    fail("/model", "missing required key");
  }

  if (command == Command::Simulate || command == Command::Study) {
    const Json* s = r.find("simulation");
    if (!s) fail("/simulation", "missing required key");
    cfg.simulation = parse_design(*s, "/simulation", *cfg.model, cfg.seed);
  }

  if (command == Command::Fit || command == Command::Study) {
    SamplerConfig base;
    if (o.preset) base = with_pointer("/sampler", [&] { return preset(*o.preset); });
    const Json empty = Json::object();
    const Json* s = r.find("sampler");
    cfg.sampler = parse_sampler_config(s ? *s : empty, "/sampler", base);
    cfg.sampler->seed = cfg.seed;
    if (o.threads) cfg.sampler->threads = *o.threads;
    with_pointer("/sampler", [&] { validate(*cfg.sampler); });
  }

  if (command == Command::Fit) {
    const Json empty = Json::object();
    const Json* d = r.find("data");
    ObjectReader dr(d ? *d : empty, "/data");
    cfg.data.longitudinal = dr.string("longitudinal", "");
    cfg.data.survival = dr.string("survival", "");
    if (const Json* cols = dr.find("covariate_columns")) {
      if (!cols->is_array()) fail(dr.at("covariate_columns"), "expected an array of strings");
      for (std::size_t i = 0; i < cols->size(); ++i) {
        if (!(*cols)[i].is_string()) fail(fmt::format("{}/{}", dr.at("covariate_columns"), i), "expected a string");
        cfg.data.covariate_columns.push_back((*cols)[i].get<std::string>());
      }
    }
    cfg.data.transform = dr.string("transform", "none");
    if (cfg.data.transform != "none" && cfg.data.transform != "sqrt") {
      fail(dr.at("transform"), "expected \"none\" or \"sqrt\"");
    }
    dr.finish();
    if (o.longitudinal) cfg.data.longitudinal = *o.longitudinal;
    if (o.survival) cfg.data.survival = *o.survival;
    if (cfg.data.longitudinal.empty()) fail("/data/longitudinal", "no longitudinal CSV given");
    if (cfg.data.survival.empty()) fail("/data/survival", "no survival CSV given");
    if (!cfg.data.covariate_columns.empty() &&
        static_cast<int>(cfg.data.covariate_columns.size()) != cfg.model->num_covariates) {
      fail("/data/covariate_columns", "column count differs from model num_covariates");
    }
  }

  if (command == Command::Study) {
    const Json empty = Json::object();
    const Json* s = r.find("study");
    ObjectReader sr(s ? *s : empty, "/study");
    cfg.study.replicates = static_cast<int>(sr.integer("replicates", cfg.study.replicates));
    cfg.study.max_failed_fraction = sr.number("max_failed_fraction", cfg.study.max_failed_fraction);
    sr.finish();
    if (cfg.study.replicates < 1) fail("/study/replicates", "must be at least 1");
  }

  if (command == Command::Curves) {
    const Json empty = Json::object();
    const Json* c = r.find("curves");
    ObjectReader cr(c ? *c : empty, "/curves");
    cfg.curves.fit_dir = cr.string("fit_dir", "");
    if (const Json* p = cr.find("profiles")) {
      if (!p->is_array()) fail(cr.at("profiles"), "expected an array of covariate vectors");
      for (std::size_t i = 0; i < p->size(); ++i) {
        cfg.curves.profiles.push_back(
            to_vector(ObjectReader::number_array((*p)[i], fmt::format("{}/{}", cr.at("profiles"), i))));
      }
    }
    if (const Json* g = cr.find("grid")) {
      ObjectReader gr(*g, cr.at("grid"));
      cfg.curves.grid.start = gr.number("start", cfg.curves.grid.start);
      cfg.curves.grid.end = gr.number("end", cfg.curves.grid.end);
      cfg.curves.grid.points = static_cast<int>(gr.integer("points", cfg.curves.grid.points));
      gr.finish();
      if (cfg.curves.grid.points < 1 || !(cfg.curves.grid.end >= cfg.curves.grid.start) ||
          cfg.curves.grid.start < 0.0) {
        fail(cr.at("grid"), "grid needs points >= 1 and 0 <= start <= end");
      }
    }
    cfg.curves.curve.slope_index = static_cast<int>(cr.integer("slope_index", 1));
    if (const Json* k = cr.find("risk")) cfg.curves.curve.risk = parse_risk(*k, cr.at("risk"));
    cr.finish();
    if (o.fit_dir) cfg.curves.fit_dir = *o.fit_dir;
    if (cfg.curves.fit_dir.empty()) fail("/curves/fit_dir", "no fit directory given");
  }
  r.finish();
  return cfg;
}

RunConfig load_run_config(const std::string& path, Command command, const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path));
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(fmt::format("{}: invalid JSON: {}", path, e.what()));
  }
  return parse_run_config(doc, command, overrides);
}

Json to_json(const ModelSpec& spec) {
  Json j;
  j["kind"] = to_string(spec.kind);
  j["num_covariates"] = spec.num_covariates;
  j["longitudinal_covariate"] =
      spec.longitudinal_covariate ? Json(*spec.longitudinal_covariate) : Json(nullptr);
  if (spec.spline) {
    Json s;
    s["order"] = spec.spline->order;
    s["inner_knots"] = spec.spline->inner_knots;
    s["start"] = spec.spline->start;
    s["end"] = spec.spline->end;
    j["spline"] = s;
  } else {
    j["spline"] = nullptr;
  }
  const auto& p = spec.priors;
  Json pr;
  pr["lambda_shape"] = p.lambda_shape;
  pr["lambda_rate"] = p.lambda_rate;
  pr["beta_sd"] = p.beta_sd;
  pr["alpha_sd"] = p.alpha_sd;
  pr["gamma_sd"] = p.gamma_sd;
  pr["mu_sd"] = p.mu_sd;
  pr["sigma2_shape"] = p.sigma2_shape;
  pr["sigma2_rate"] = p.sigma2_rate;
  pr["wishart_df"] = p.wishart_df;
  pr["wishart_scale"] = matrix_json(p.wishart_scale);
  j["priors"] = pr;
  j["quad_points"] = spec.quad_points;
  return j;
}

Json to_json(const SamplerConfig& c) {
  Json j;
  j["algorithm"] = to_string(c.algorithm);
  j["chains"] = c.chains;
  j["iterations"] = c.iterations;
  j["burn_in"] = c.burn_in;
  j["thin"] = c.thin;
  j["target_accept"] = c.target_accept;
  j["max_tree_depth"] = c.max_tree_depth;
  j["step_size_adapt_iters"] = c.step_size_adapt_iters;
  j["threads"] = c.threads;
  j["parameterization"] = c.noncentered ? "noncentered" : "centered";
  return j;
}

Json population_json(const ModelSpec& spec, const ParameterState& t) {
  Json j;
  j["lambda"] = t.lambda;
  j["beta"] = vector_json(t.beta);
  j["alpha"] = t.alpha;
  if (spec.has_gamma()) j["gamma"] = t.gamma;
  j["mu"] = vector_json(t.mu);
  j["Sigma"] = matrix_json(t.Sigma);
  j["sigma2"] = t.sigma2;
  return j;
}

Json to_json(const SimulationDesign& d) {
  Json j;
  j["n"] = d.n;
  j["truth"] = population_json(d.spec, d.truth);
  Json laws = Json::array();
  for (const auto& law : d.covariates) {
    Json l;
    if (law.kind == CovariateLaw::Kind::Bernoulli) {
      l["law"] = "bernoulli";
      l["p"] = law.p;
    } else {
      l["law"] = "normal";
      l["mean"] = law.mean;
      l["sd"] = law.sd;
    }
    laws.push_back(l);
  }
  j["covariates"] = laws;
  j["schedule"] = d.schedule;
  j["censoring"] = censoring_json(d.censoring);
  j["t_max"] = d.t_max;
  j["max_failure_fraction"] = d.max_failure_fraction;
  return j;
}

Json to_json(const RunConfig& cfg) {
  Json j;
  j["command"] = to_string(cfg.command);
  j["seed"] = cfg.seed;
  if (cfg.model) j["model"] = to_json(*cfg.model);
  if (cfg.simulation) j["simulation"] = to_json(*cfg.simulation);
  if (cfg.sampler) j["sampler"] = to_json(*cfg.sampler);
  if (cfg.command == Command::Fit) {
    Json d;
    d["longitudinal"] = cfg.data.longitudinal;
    d["survival"] = cfg.data.survival;
    d["covariate_columns"] = cfg.data.covariate_columns;
    d["transform"] = cfg.data.transform;
    j["data"] = d;
  }
  if (cfg.command == Command::Study) {
    Json s;
    s["replicates"] = cfg.study.replicates;
    s["max_failed_fraction"] = cfg.study.max_failed_fraction;
    j["study"] = s;
  }
  if (cfg.command == Command::Curves) {
    Json c;
    c["fit_dir"] = cfg.curves.fit_dir;
    Json profiles = Json::array();
    for (const auto& p : cfg.curves.profiles) profiles.push_back(vector_json(p));
    c["profiles"] = profiles;
    c["grid"] = {{"start", cfg.curves.grid.start}, {"end", cfg.curves.grid.end},
                 {"points", cfg.curves.grid.points}};
    c["slope_index"] = cfg.curves.curve.slope_index;
    c["risk"] = risk_json(cfg.curves.curve.risk);
    j["curves"] = c;
  }
  return j;
}

}  // namespace balsam
