#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "histctl/errors.hpp"
#include "histctl/pipeline.hpp"

namespace histctl {

using nlohmann::json;

namespace {

json::json_pointer pointer(const std::string& dotted) {
  std::string p;
  std::stringstream ss(dotted);
  for (std::string part; std::getline(ss, part, '.');) p += "/" + part;
  return json::json_pointer(p);
}

std::string_view scale_name(EffectScale s) {
  return s == EffectScale::log_hazard ? "log_hazard" : "probability";
}

// Every setting, in file order. The same list drives writing, reading and the
// override whitelist.
template <class V>
void visit(V&& v, PipelineConfig& c) {
  v("paths.registry", c.paths.registry);
  v("paths.out_dir", c.paths.out_dir);
  v("paths.placebo", c.paths.placebo);
  v("seed", c.seed);
  v("workers", c.workers);

  auto& s = c.scenario;
  v("scenario.n_treated", s.n_treated_target);
  v("scenario.n_comparison", s.n_comparison_target);
  v("scenario.confounding_strength", s.confounding_strength);
  v("scenario.follow_up_months", s.follow_up_months);
  v("scenario.education_missing_rate", s.education_missing_rate);
  v("scenario.max_attempts_per_treated", s.max_attempts_per_treated);
  v("scenario.progression.initial_mean", s.progression.initial_mean);
  v("scenario.progression.initial_sd", s.progression.initial_sd);
  v("scenario.progression.drift_mean", s.progression.drift_mean);
  v("scenario.progression.drift_sd", s.progression.drift_sd);
  v("scenario.progression.volatility", s.progression.volatility);
  v("scenario.assignment.base", s.assignment.base);
  v("scenario.assignment.severity", s.assignment.severity);
  v("scenario.assignment.skeletal", s.assignment.skeletal);
  v("scenario.assignment.gnrh", s.assignment.gnrh);
  v("scenario.assignment.age", s.assignment.age);
  v("scenario.assignment.comorbidity", s.assignment.comorbidity);
  v("scenario.markers.node_base", s.markers.node_base);
  v("scenario.markers.node_severity", s.markers.node_severity);
  v("scenario.markers.visceral_base", s.markers.visceral_base);
  v("scenario.markers.visceral_severity", s.markers.visceral_severity);
  v("scenario.markers.skeletal_base", s.markers.skeletal_base);
  v("scenario.markers.skeletal_severity", s.markers.skeletal_severity);
  v("scenario.markers.bicalutamide_base", s.markers.bicalutamide_base);
  v("scenario.markers.bicalutamide_severity", s.markers.bicalutamide_severity);
  v("scenario.markers.gnrh_base", s.markers.gnrh_base);
  v("scenario.markers.gnrh_severity", s.markers.gnrh_severity);
  v("scenario.markers.visits_base", s.markers.visits_base);
  v("scenario.markers.visits_severity", s.markers.visits_severity);
  for (auto [name, h] : {std::pair{"death", &s.outcome_model.death},
                         std::pair{"pain", &s.outcome_model.pain},
                         std::pair{"sre", &s.outcome_model.sre}}) {
    const std::string k = std::string("scenario.outcome_model.") + name;
    v(k + ".base", h->base);
    v(k + ".severity", h->severity);
    v(k + ".age", h->age);
    v(k + ".comorbidity", h->comorbidity);
  }
  v("scenario.true_effects.death", s.true_effects.death);
  v("scenario.true_effects.pain", s.true_effects.pain);
  v("scenario.true_effects.sre", s.true_effects.sre);
  v("scenario.true_effects.death_dtp_slope", s.true_effects.death_dtp_slope);
  v("scenario.true_effects.scale", s.true_effects.scale);
  v("scenario.placebo.psa_base", s.placebo.psa_base);
  v("scenario.placebo.psa_severity", s.placebo.psa_severity);
  v("scenario.placebo.psa_noise", s.placebo.psa_noise);
  v("scenario.placebo.gleason_base", s.placebo.gleason_base);
  v("scenario.placebo.gleason_severity", s.placebo.gleason_severity);
  v("scenario.placebo.gleason_noise", s.placebo.gleason_noise);
  v("scenario.placebo.mets_base", s.placebo.mets_base);
  v("scenario.placebo.mets_severity", s.placebo.mets_severity);

  v("eligibility.treated_from", c.eligibility.treated_from);
  v("eligibility.treated_to", c.eligibility.treated_to);
  v("eligibility.comparison_from", c.eligibility.comparison_from);
  v("eligibility.comparison_to", c.eligibility.comparison_to);
  v("eligibility.nam_atc", c.eligibility.nam_atc);
  v("eligibility.max_dtp", c.eligibility.max_dtp);

  v("balance.base", c.constraints.base);
  v("balance.interactions", c.constraints.interactions);
  v("balance.polynomials", c.constraints.polynomials);
  v("balance.variance", c.constraints.variance);
  v("balance.tolerance", c.constraints.tolerance);
  v("balance.max_iter", c.constraints.max_iter);
  v("balance.w_min", c.w_min);
  v("balance.w_max", c.w_max);

  v("outcomes.dead", c.horizons.dead);
  v("outcomes.pain", c.horizons.pain);
  v("outcomes.sre", c.horizons.sre);

  auto& a = c.analyses;
  v("analyses.bounds", a.bounds);
  v("analyses.subgroups", a.subgroups);
  v("analyses.placebo", a.placebo);
  v("analyses.cll", a.cll);
  v("analyses.pooled", a.pooled);
  v("analyses.subgroup_quantile", a.subgroup_quantile);
  v("analyses.family_size", a.family_size);
  v("analyses.overall_alpha", a.overall_alpha);
  v("analyses.cll_horizon", a.cll_horizon);
  v("analyses.cll_max_iter", a.cll_options.max_iter);
  v("analyses.cll_tol", a.cll_options.tol);
}

struct Writer {
  json& doc;
  template <class T>
  void operator()(const std::string& key, const T& value) {
    doc[pointer(key)] = value;
  }
  void operator()(const std::string& key, const Date& d) { doc[pointer(key)] = d.iso(); }
  void operator()(const std::string& key, const EffectScale& s) {
    doc[pointer(key)] = std::string(scale_name(s));
  }
};

struct Reader {
  const json& doc;
  std::set<std::string>& known;

  template <class T>
  void operator()(const std::string& key, T& value) {
    known.insert(key);
    const auto p = pointer(key);
    if (!doc.contains(p)) return;
    try {
      read(doc.at(p), value);
    } catch (const json::exception& e) {
      throw ConfigError("setting " + key + ": " + e.what());
    } catch (const Error& e) {
      throw ConfigError("setting " + key + ": " + e.what());
    }
  }

  static void read(const json& j, std::string& v) { v = j.get<std::string>(); }
  static void read(const json& j, bool& v) { v = j.get<bool>(); }
  static void read(const json& j, double& v) {
    if (!j.is_number()) throw ConfigError("expected a number");
    v = j.get<double>();
  }
  static void read(const json& j, int& v) {
    if (!j.is_number_integer()) throw ConfigError("expected an integer");
    v = j.get<int>();
  }
  static void read(const json& j, std::uint64_t& v) {
    if (!j.is_number_unsigned()) throw ConfigError("expected a nonnegative integer");
    v = j.get<std::uint64_t>();
  }
  static void read(const json& j, Date& v) { v = Date::parse(j.get<std::string>()); }
  static void read(const json& j, EffectScale& v) {
    const auto s = j.get<std::string>();
    if (s == "log_hazard") v = EffectScale::log_hazard;
    else if (s == "probability") v = EffectScale::probability;
    else throw ConfigError("unknown effect scale '" + s + "'");
  }
  template <class T>
  static void read(const json& j, T& v) {
    v = j.get<T>();
  }
};

void collect_leaves(const json& j, const std::string& prefix, std::vector<std::string>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it)
      collect_leaves(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), out);
  } else {
    out.push_back(prefix);
  }
}

void check_ranges(const PipelineConfig& c) {
  if (c.w_min < 1 || c.w_max > 36 || c.w_min > c.w_max)
    throw ConfigError("balance strata must satisfy 1 <= w_min <= w_max <= 36");
  if (c.workers < 1) throw ConfigError("workers must be >= 1");
  for (int h : {c.horizons.dead, c.horizons.pain, c.horizons.sre})
    if (h < 1 || h > 36) throw ConfigError("outcome horizons must lie in [1, 36]");
  if (c.analyses.family_size < 1) throw ConfigError("analyses.family_size must be >= 1");
  if (!(c.analyses.overall_alpha > 0.0 && c.analyses.overall_alpha < 1.0))
    throw ConfigError("analyses.overall_alpha must lie in (0, 1)");
  if (!(c.analyses.subgroup_quantile > 0.0 && c.analyses.subgroup_quantile < 1.0))
    throw ConfigError("analyses.subgroup_quantile must lie in (0, 1)");
  if (!(c.constraints.tolerance > 0.0)) throw ConfigError("balance.tolerance must be positive");
  if (c.constraints.max_iter < 1) throw ConfigError("balance.max_iter must be >= 1");
  if (c.eligibility.max_dtp < 1 || c.eligibility.max_dtp > 36)
    throw ConfigError("eligibility.max_dtp must lie in [1, 36]");
  c.resolved_scenario().validate();
}

}  // namespace

ScenarioConfig PipelineConfig::resolved_scenario() const {
  ScenarioConfig s = scenario;
  s.seed = seed;
  s.windows = eligibility;
  return s;
}

json config_to_json(const PipelineConfig& cfg) {
  json doc = json::object();
  PipelineConfig copy = cfg;
  visit(Writer{doc}, copy);
  return doc;
}

PipelineConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config must be an object");
  PipelineConfig cfg;
  std::set<std::string> known;
  visit(Reader{doc, known}, cfg);
  std::vector<std::string> leaves;
  collect_leaves(doc, "", leaves);
  for (const auto& k : leaves)
    if (!known.count(k)) throw ConfigError("unknown setting '" + k + "'");
  check_ranges(cfg);
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path + ": " + e.what());
  }
  return config_from_json(doc);
}

void save_config(const std::string& path, const PipelineConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << config_to_json(cfg).dump(2) << "\n";
}

void apply_override(json& doc, const std::string& dotted, const std::string& value) {
  const auto p = pointer(dotted);
  if (!doc.contains(p)) throw ConfigError("unknown setting '" + dotted + "'");
  json& slot = doc[p];
  if (slot.is_string()) {
    slot = value;
    return;
  }
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) throw ConfigError("cannot parse value for " + dotted + ": " + value);
  slot = std::move(parsed);
}

PipelineConfig resolve_config(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
  json doc = config_to_json(path.empty() ? PipelineConfig{} : load_config(path));
  for (const auto& [k, v] : overrides) apply_override(doc, k, v);
  if (const char* dir = std::getenv("HISTCTL_OUT_DIR"); dir && *dir) doc["paths"]["out_dir"] = dir;
  return config_from_json(doc);
}

std::string fnv1a_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_checksum(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a_hex(ss.str());
}

std::string config_hash(const PipelineConfig& cfg) {
  json doc = config_to_json(cfg);
  doc["paths"].erase("out_dir");
  doc.erase("workers");
  return fnv1a_hex(doc.dump());
}

}  // namespace histctl
