#include "histctl/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "histctl/covariates.hpp"
#include "histctl/design.hpp"
#include "histctl/errors.hpp"
#include "histctl/table.hpp"

namespace histctl {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string registry_path(const PipelineConfig& cfg) {
  return cfg.paths.registry.empty() ? (fs::path(cfg.paths.out_dir) / "registry.jsonl").string()
                                    : cfg.paths.registry;
}

std::string out_file(const PipelineConfig& cfg, const std::string& name) {
  return (fs::path(cfg.paths.out_dir) / name).string();
}

const std::string kBannerPrefix = "# config_hash: ";

// Hash recorded in an existing artifact, if any.
std::optional<std::string> recorded_hash(const std::string& path) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  if (path.ends_with(".json")) {
    const json doc = json::parse(in, nullptr, false);
    if (doc.is_object() && doc.contains("config_hash") && doc["config_hash"].is_string())
      return doc["config_hash"].get<std::string>();
    return std::string();
  }
  std::string first;
  std::getline(in, first);
  if (first.starts_with(kBannerPrefix)) return first.substr(kBannerPrefix.size());
  return std::string();
}

void guard_overwrite(const std::string& path, const std::string& hash, bool force) {
  const auto old = recorded_hash(path);
  if (!old || *old == hash || force) return;
  throw Error("refusing to overwrite " + path + " written under config hash " +
              (old->empty() ? std::string("<none>") : *old) + " (current " + hash +
              "); rerun with --force or choose another output directory");
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

template <class F>
auto stage(const std::string& name, F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const CommonSupportError& e) {
    throw StageError(name, e.stratum(), e.what());
  } catch (const std::exception& e) {
    throw StageError(name, 0, e.what());
  }
}

// ------------------------------------------------------------ balance cache

std::string balance_key(const PipelineConfig& cfg, const std::string& registry_sum) {
  json doc = config_to_json(cfg);
  json key = {{"registry", registry_sum},
              {"eligibility", doc["eligibility"]},
              {"balance", doc["balance"]}};
  return fnv1a_hex(key.dump());
}

json solution_to_json(const WeightSolution& s) {
  return {{"w", s.stratum_w},
          {"weights", std::vector<double>(s.weights.data(), s.weights.data() + s.weights.size())},
          {"multipliers", std::vector<double>(s.multipliers.data(),
                                              s.multipliers.data() + s.multipliers.size())},
          {"converged", s.converged},
          {"max_violation", s.max_constraint_violation},
          {"iterations", s.iterations},
          {"dropped", s.dropped},
          {"warnings", s.warnings}};
}

WeightSolution solution_from_json(const json& j) {
  WeightSolution s;
  s.stratum_w = j.at("w").get<int>();
  const auto w = j.at("weights").get<std::vector<double>>();
  s.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
  const auto m = j.at("multipliers").get<std::vector<double>>();
  s.multipliers = Eigen::Map<const Eigen::VectorXd>(m.data(), static_cast<Eigen::Index>(m.size()));
  s.converged = j.at("converged").get<bool>();
  s.max_constraint_violation = j.at("max_violation").get<double>();
  s.iterations = j.at("iterations").get<int>();
  s.dropped = j.at("dropped").get<std::vector<std::string>>();
  s.warnings = j.at("warnings").get<std::vector<std::string>>();
  return s;
}

std::optional<BalanceAll> load_balance_cache(const std::string& path, const std::string& key,
                                             const std::vector<StratumData>& strata) {
  std::ifstream in(path);
  if (!in) return std::nullopt;
  const json doc = json::parse(in, nullptr, false);
  if (!doc.is_object() || doc.value("key", "") != key) return std::nullopt;
  std::map<int, const StratumData*> by_w;
  for (const auto& d : strata) by_w[d.w] = &d;
  BalanceAll all;
  try {
    for (const auto& j : doc.at("strata")) {
      WeightSolution s = solution_from_json(j);
      const auto it = by_w.find(s.stratum_w);
      if (it == by_w.end() || s.weights.size() != it->second->comparison.rows()) return std::nullopt;
      const StratumData& d = *it->second;
      BalanceReport rep = balance_report(d.w, d.treated, d.comparison, d.names, s.weights);
      all.strata.emplace(d.w, StratumResult{std::move(s), std::move(rep)});
    }
    for (const auto& j : doc.at("failures"))
      all.failures.push_back({j.at("w").get<int>(), j.at("message").get<std::string>()});
    all.log = doc.at("log").get<std::vector<std::string>>();
  } catch (const json::exception&) {
    return std::nullopt;
  }
  return all;
}

void save_balance_cache(const std::string& path, const std::string& key, const BalanceAll& all) {
  json doc = {{"key", key}, {"strata", json::array()}, {"failures", json::array()}, {"log", all.log}};
  for (const auto& [w, r] : all.strata) doc["strata"].push_back(solution_to_json(r.solution));
  for (const auto& f : all.failures) doc["failures"].push_back({{"w", f.w}, {"message", f.message}});
  write_text(path, doc.dump());
}

// ------------------------------------------------------------ tables

const std::vector<std::string> kEstimateHeader = {
    "outcome", "month", "beta", "se", "ci_lo", "ci_hi", "p", "threshold",
    "significant", "analysis_tag", "n", "degenerate"};

void write_estimates(const std::string& path, const std::vector<EffectEstimate>& rows,
                     const std::string& hash) {
  CsvWriter csv(path, kEstimateHeader, "config_hash: " + hash);
  for (const auto& e : rows)
    csv.row({e.outcome, std::to_string(e.month), format_number(e.beta), format_number(e.se),
             format_number(e.ci_lo), format_number(e.ci_hi), format_number(e.p_raw),
             format_number(e.p_threshold), e.significant ? "1" : "0", e.analysis_tag,
             std::to_string(e.n), e.degenerate ? "1" : "0"});
}

void write_balance_tables(const PipelineConfig& cfg, const RunReport& rep,
                          const std::vector<StratumData>& strata, const BalanceAll& all,
                          const Registry& registry, const std::string& hash) {
  const std::string banner = "config_hash: " + hash;
  {
    CsvWriter csv(out_file(cfg, "strata.csv"),
                  {"w", "n_treated", "n_comparison", "converged", "max_violation", "iterations",
                   "share_above_001", "max_abs_smd_after", "dropped"},
                  banner);
    for (const auto& s : rep.strata) {
      std::string dropped;
      for (const auto& d : s.dropped) dropped += (dropped.empty() ? "" : ";") + d;
      csv.row({std::to_string(s.w), std::to_string(s.n_treated), std::to_string(s.n_comparison),
               s.converged ? "1" : "0", format_number(s.max_violation),
               std::to_string(s.iterations), format_number(s.share_above_001),
               format_number(s.max_abs_smd_after), dropped});
    }
  }
  {
    CsvWriter csv(out_file(cfg, "balance.csv"),
                  {"w", "covariate", "treated_mean", "treated_sd", "comparison_mean",
                   "weighted_mean", "smd_before", "smd_after"},
                  banner);
    for (const auto& b : rep.balance)
      for (const auto& c : b.covariates)
        csv.row({std::to_string(b.stratum_w), c.name, format_number(c.treated_mean),
                 format_number(c.treated_sd), format_number(c.comparison_mean),
                 format_number(c.weighted_mean), format_number(c.smd_before),
                 format_number(c.smd_after)});
  }
  {
    CsvWriter csv(out_file(cfg, "weight_histogram.csv"), {"w", "log10_lo", "log10_hi", "count"},
                  banner);
    for (const auto& b : rep.balance)
      for (std::size_t k = 0; k < b.histogram_counts.size(); ++k)
        csv.row({std::to_string(b.stratum_w), format_number(b.histogram_edges[k]),
                 format_number(b.histogram_edges[k + 1]), std::to_string(b.histogram_counts[k])});
  }
  {
    CsvWriter csv(out_file(cfg, "weights.csv"), {"w", "patient_id", "weight"}, banner);
    for (const auto& d : strata) {
      const auto it = all.strata.find(d.w);
      if (it == all.strata.end()) continue;
      const auto& wts = it->second.solution.weights;
      for (std::size_t r = 0; r < d.comparison_index.size(); ++r)
        csv.row({std::to_string(d.w), registry.at(d.comparison_index[r]).id,
                 format_number(wts(static_cast<Eigen::Index>(r)))});
    }
  }
}

void write_attrition(const std::string& path, const std::vector<AttritionStep>& steps,
                     const std::string& hash) {
  CsvWriter csv(path, {"chain", "step", "input", "output"}, "config_hash: " + hash);
  for (const auto& s : steps)
    csv.row({s.chain, s.step, std::to_string(s.input), std::to_string(s.output)});
}

void write_descriptives(const std::string& path, const std::vector<DescriptiveRow>& rows,
                        const std::string& hash) {
  CsvWriter csv(path,
                {"description", "soc_mean", "soc_sd", "nam_mean", "nam_sd", "difference", "p"},
                "config_hash: " + hash);
  for (const auto& r : rows)
    csv.row({r.label, format_number(r.comparison_mean), format_number(r.comparison_sd),
             format_number(r.treated_mean), format_number(r.treated_sd),
             format_number(r.difference), format_number(r.p_value)});
}

std::vector<std::string> artifact_names(RunScope scope, const PipelineConfig& cfg) {
  std::vector<std::string> names = {"attrition.csv",  "descriptives.csv", "factors.txt",
                                    "strata.csv",     "balance.csv",      "weight_histogram.csv",
                                    "weights.csv",    "summary.json"};
  if (scope == RunScope::estimate || scope == RunScope::full) names.push_back("estimates.csv");
  if (scope == RunScope::placebo) names.push_back("placebo_estimates.csv");
  (void)cfg;
  return names;
}

void check_all_outputs(const PipelineConfig& cfg, RunScope scope, const std::string& hash) {
  for (const auto& n : artifact_names(scope, cfg)) {
    if (n.ends_with(".txt")) continue;
    guard_overwrite(out_file(cfg, n), hash, cfg.force);
  }
}

}  // namespace

// ------------------------------------------------------------ generate

GenerateSummary cmd_generate(const PipelineConfig& cfg) {
  const std::string hash = config_hash(cfg);
  fs::create_directories(cfg.paths.out_dir);
  const std::string manifest_path = out_file(cfg, "manifest.json");
  guard_overwrite(manifest_path, hash, cfg.force);

  const ScenarioConfig scenario = cfg.resolved_scenario();
  GeneratedData data = stage("generate", [&] { return generate(scenario); });

  const std::string reg = registry_path(cfg);
  if (const auto parent = fs::path(reg).parent_path(); !parent.empty())
    fs::create_directories(parent);
  {
    std::ofstream out(reg, std::ios::binary);
    if (!out) throw Error("cannot write " + reg);
    write_registry(out, data.registry);
  }
  const std::string csv_dir = out_file(cfg, "csv");
  export_registry_csv(csv_dir, data.registry);
  const std::string truth_path = out_file(cfg, "ground_truth.jsonl");
  {
    std::ofstream out(truth_path, std::ios::binary);
    write_ground_truth(out, data.truth);
  }
  const std::string placebo_path = out_file(cfg, "placebo.csv");
  write_placebo_csv(placebo_path, emit_placebo_covariates(data.registry, data.truth, scenario),
                    "config_hash: " + hash);

  json files = json::object();
  files[fs::path(reg).filename().string()] = file_checksum(reg);
  files["ground_truth.jsonl"] = file_checksum(truth_path);
  files["placebo.csv"] = file_checksum(placebo_path);
  std::vector<std::string> csvs;
  for (const auto& e : fs::directory_iterator(csv_dir)) csvs.push_back(e.path().filename().string());
  std::sort(csvs.begin(), csvs.end());
  for (const auto& c : csvs) files["csv/" + c] = file_checksum((fs::path(csv_dir) / c).string());

  GenerateSummary out;
  out.out_dir = cfg.paths.out_dir;
  out.patients = data.registry.size();
  out.treated = data.cohorts.treated.size();
  out.comparison = data.cohorts.comparison.size();
  out.manifest = {{"config_hash", hash},
                  {"seed", cfg.seed},
                  {"config", config_to_json(cfg)},
                  {"elixhauser_checksum", ElixhauserMap::bundled().checksum()},
                  {"patients", out.patients},
                  {"treated", out.treated},
                  {"comparison", out.comparison},
                  {"files", files}};
  write_text(manifest_path, out.manifest.dump(2) + "\n");
  return out;
}

// ------------------------------------------------------------ run

RunReport cmd_run(const PipelineConfig& cfg, RunScope scope) {
  RunReport rep;
  rep.config = config_to_json(cfg);
  rep.config_hash = config_hash(cfg);
  const std::string& hash = rep.config_hash;
  fs::create_directories(cfg.paths.out_dir);
  check_all_outputs(cfg, scope, hash);

  const std::string reg_path = registry_path(cfg);
  LoadResult loaded = stage("load", [&] {
    if (!fs::exists(reg_path)) throw Error("registry not found: " + reg_path);
    return load_registry_file(reg_path);
  });
  if (!loaded.errors.empty()) {
    rep.warnings.push_back(std::to_string(loaded.errors.size()) + " registry rows rejected");
    for (std::size_t k = 0; k < std::min<std::size_t>(5, loaded.errors.size()); ++k) {
      const auto& e = loaded.errors[k];
      rep.warnings.push_back("line " + std::to_string(e.line) + " (" + e.patient_id +
                             "): " + e.message);
    }
  }
  const Registry& registry = loaded.registry;

  CohortSelection cohorts = stage("select", [&] { return select_cohorts(registry, cfg.eligibility); });
  rep.attrition = cohorts.attrition;

  CohortCovariates cov =
      stage("covariates", [&] { return compute_covariates(registry, cohorts, cfg.workers); });
  for (const auto& w : cov.warnings) rep.warnings.push_back(w);
  rep.descriptives = descriptive_table(registry, cohorts, cov.pre);
  rep.factor_table = render_factor_table(cov.factor_model);

  std::vector<StratumData> strata = stage("strata", [&] {
    return assemble_strata(registry, cohorts, cov, nullptr, cfg.w_min, cfg.w_max);
  });

  // Balance, cached by the inputs that determine it.
  const std::string key = balance_key(cfg, file_checksum(reg_path));
  const std::string cache_path =
      (fs::path(cfg.paths.out_dir) / "cache" / ("balance-" + key + ".json")).string();
  std::optional<BalanceAll> cached = load_balance_cache(cache_path, key, strata);
  BalanceAll bal;
  if (cached) {
    bal = std::move(*cached);
    rep.stages_cached.push_back("balance");
  } else {
    bal = stage("balance", [&] { return balance_all(strata, cfg.constraints, cfg.workers); });
    fs::create_directories(fs::path(cache_path).parent_path());
    save_balance_cache(cache_path, key, bal);
  }
  for (const auto& l : bal.log) rep.warnings.push_back(l);
  rep.failures = bal.failures;
  for (const auto& f : bal.failures)
    rep.warnings.push_back("stratum " + std::to_string(f.w) + " excluded: " + f.message);
  if (bal.strata.empty()) {
    const int w = bal.failures.empty() ? 0 : bal.failures.front().w;
    throw StageError("balance", w, "no stratum could be balanced; the analysis cannot proceed");
  }
  for (const auto& [w, r] : bal.strata) {
    rep.balance.push_back(r.report);
    const auto& s = r.solution;
    rep.strata.push_back({w, r.report.n_treated, r.report.n_comparison, s.converged,
                          s.max_constraint_violation, s.iterations, r.report.share_above_001,
                          r.report.max_abs_smd_after, s.dropped});
    if (!s.converged)
      rep.warnings.push_back("stratum " + std::to_string(w) + " did not converge (violation " +
                             format_number(s.max_constraint_violation) + ")");
    for (const auto& msg : s.warnings)
      rep.warnings.push_back("stratum " + std::to_string(w) + ": " + msg);
  }

  // Treated attrition continues through stratum range and common support.
  {
    std::size_t in_range = 0, balanced = 0;
    for (const auto& t : cohorts.treated) {
      const int d = *t.dtp_months;
      if (d < cfg.w_min || d > cfg.w_max) continue;
      ++in_range;
      if (bal.strata.count(d)) ++balanced;
    }
    const std::size_t selected = cohorts.treated.size();
    rep.attrition.push_back({"treated",
                             "DTP within strata " + std::to_string(cfg.w_min) + ".." +
                                 std::to_string(cfg.w_max),
                             selected, in_range});
    rep.attrition.push_back({"treated", "stratum balanced", in_range, balanced});
    std::size_t alive = 0;
    for (const auto& c : cohorts.comparison) {
      const auto& p = registry.at(c.index);
      if (p.alive_before(add_months(p.diagnosis, cfg.w_min))) ++alive;
    }
    rep.attrition.push_back({"comparison",
                             "alive " + std::to_string(cfg.w_min) + " months after diagnosis",
                             cohorts.comparison.size(), alive});
    std::stable_partition(rep.attrition.begin(), rep.attrition.end(),
                          [](const AttritionStep& a) { return a.chain == "treated"; });
  }

  std::vector<EffectEstimate>& est = rep.estimates;
  const double threshold = cfg.threshold();
  auto guarded = [&](const std::string& what, auto&& body) {
    try {
      body();
    } catch (const EstimationError& e) {
      rep.warnings.push_back(what + ": " + e.what());
    }
  };

  std::vector<StratumWeights> weights = stratum_weights(strata, bal);
  const bool estimate_stage = scope == RunScope::estimate || scope == RunScope::full;
  const bool placebo_stage = (scope == RunScope::placebo) ||
                             (scope == RunScope::full && cfg.analyses.placebo);

  if (estimate_stage) {
    const OutcomePanel panel =
        stage("outcomes", [&] { return derive_outcomes(registry, weights, cfg.horizons); });
    const std::vector<Outcome> outcomes = {Outcome::dead, Outcome::pain, Outcome::sre};

    stage("estimate", [&] {
      for (Outcome o : outcomes)
        for (int m = 1; m <= cfg.horizons.of(o); ++m)
          guarded(std::string(to_string(o)) + " month " + std::to_string(m),
                  [&] { est.push_back(wls_atet(panel, o, m, threshold)); });
      if (cfg.analyses.pooled)
        for (Outcome o : outcomes)
          guarded(std::string(to_string(o)) + " pooled", [&] {
            est.push_back(wls_atet_pooled(panel, o, cfg.horizons.of(o), threshold));
          });
      for (const auto& e : est)
        if (e.outcome == "DEAD" && e.month == cfg.horizons.dead && e.analysis_tag == "main")
          rep.mortality_effect = e.beta;
    });

    if (cfg.analyses.bounds) {
      stage("bounds", [&] {
        for (Outcome o : {Outcome::pain, Outcome::sre})
          for (int m = 1; m <= cfg.horizons.of(o); ++m)
            guarded(std::string(to_string(o)) + " bounds month " + std::to_string(m), [&] {
              const MorbidityBounds b = morbidity_bounds(panel, o, m, threshold);
              if (b.mortality_effect == 0.0) return;  // nobody dead yet: bounds collapse
              est.push_back(b.lower);
              est.push_back(b.upper);
              if (!b.monotone)
                rep.warnings.push_back(std::string(to_string(o)) + " month " +
                                       std::to_string(m) +
                                       ": death shares not ordered across arms in every stratum");
            });
      });
    }

    if (cfg.analyses.subgroups) {
      stage("subgroups", [&] {
        for (Outcome o : outcomes) {
          std::vector<int> months;
          for (int m = 1; m <= cfg.horizons.of(o); ++m) months.push_back(m);
          guarded(std::string(to_string(o)) + " subgroups", [&] {
            SubgroupResult s =
                subgroup_analysis(panel, {o}, months, cfg.analyses.subgroup_quantile, threshold);
            for (auto& e : s.lower) est.push_back(std::move(e));
            for (auto& e : s.upper) est.push_back(std::move(e));
          });
        }
      });
    }

    if (cfg.analyses.cll) {
      stage("cll", [&] {
        if (cfg.analyses.cll_horizon > cfg.horizons.dead) {
          rep.warnings.push_back("CLL horizon exceeds the mortality horizon; model skipped");
          return;
        }
        guarded("CLL", [&] {
          HazardFit fit = fit_cll(panel, cfg.analyses.cll_horizon, cfg.analyses.cll_options);
          for (const auto& w : fit.warnings) rep.warnings.push_back("CLL: " + w);
          if (!fit.converged) rep.warnings.push_back("CLL: Newton did not converge");
          EffectEstimate e;
          e.outcome = "DEAD";
          e.month = fit.horizon;
          e.beta = fit.tau;
          e.se = fit.se_tau;
          e.ci_lo = fit.tau - 1.96 * fit.se_tau;
          e.ci_hi = fit.tau + 1.96 * fit.se_tau;
          e.p_raw = fit.se_tau > 0.0 ? normal_two_sided_p(fit.tau / fit.se_tau) : 1.0;
          e.p_threshold = threshold;
          e.significant = e.p_raw < threshold;
          e.analysis_tag = "cll";
          for (const auto& r : panel.rows) e.n += r.weight > 0.0;
          est.push_back(e);
          rep.cll = std::move(fit);
        });
      });
    }
  }

  std::vector<EffectEstimate> placebo_rows;
  if (placebo_stage) {
    stage("placebo", [&] {
      const std::string path =
          cfg.paths.placebo.empty() ? out_file(cfg, "placebo.csv") : cfg.paths.placebo;
      if (!fs::exists(path)) {
        rep.warnings.push_back("placebo covariates not found at " + path + "; placebo test skipped");
        return;
      }
      const auto rows = read_placebo_csv(path);
      const double nan = std::numeric_limits<double>::quiet_NaN();
      std::vector<std::vector<double>> values(3, std::vector<double>(registry.size(), nan));
      for (const auto& r : rows) {
        const auto i = registry.index_of(r.patient_id);
        if (!i) continue;
        values[0][*i] = r.psa_level;
        values[1][*i] = r.gleason_score;
        values[2][*i] = r.metastasis_at_diagnosis;
      }
      guarded("placebo", [&] {
        PlaceboResult p = placebo_test(weights, {"PSA", "GLEASON", "METS_AT_DX"}, values,
                                       cfg.analyses.overall_alpha);
        for (const auto& w : p.warnings) rep.warnings.push_back("placebo: " + w);
        if (p.hidden_bias)
          rep.warnings.push_back("placebo test rejected: possible hidden bias");
        placebo_rows = p.estimates;
        rep.placebo = std::move(p);
      });
    });
    if (scope == RunScope::full)
      est.insert(est.end(), placebo_rows.begin(), placebo_rows.end());
  }

  // Outputs.
  write_attrition(out_file(cfg, "attrition.csv"), rep.attrition, hash);
  write_descriptives(out_file(cfg, "descriptives.csv"), rep.descriptives, hash);
  write_text(out_file(cfg, "factors.txt"), rep.factor_table);
  write_balance_tables(cfg, rep, strata, bal, registry, hash);
  if (estimate_stage) write_estimates(out_file(cfg, "estimates.csv"), est, hash);
  if (scope == RunScope::placebo)
    write_estimates(out_file(cfg, "placebo_estimates.csv"), placebo_rows, hash);
  write_text(out_file(cfg, "summary.json"), report_to_json(rep).dump(2) + "\n");
  return rep;
}

// ------------------------------------------------------------ timeline

std::string cmd_timeline(const PipelineConfig& cfg, const std::string& patient_id) {
  const std::string reg_path = registry_path(cfg);
  LoadResult loaded = load_registry_file(reg_path);
  const Registry& registry = loaded.registry;
  const PatientRecord* p = registry.find(patient_id);
  if (!p) throw ValidationError("unknown patient id '" + patient_id + "'");

  std::optional<int> dtp;
  std::string arm = "not in either cohort";
  try {
    const CohortSelection sel = select_cohorts(registry, cfg.eligibility);
    for (const auto& t : sel.treated)
      if (t.patient_id == patient_id) {
        dtp = t.dtp_months;
        arm = "treated (DTP " + std::to_string(*dtp) + " months)";
      }
    for (const auto& c : sel.comparison)
      if (c.patient_id == patient_id) arm = "comparison";
  } catch (const ConfigError&) {
  }

  struct Line {
    Date when;
    int order;
    std::string kind, code, detail;
  };
  std::vector<Line> lines;
  lines.push_back({p->diagnosis, 0, "diagnosis", "C619", "prostate cancer diagnosis"});
  for (const auto& v : p->visits) {
    std::string codes;
    for (std::size_t k = 1; k < v.icd10.size(); ++k) codes += (k > 1 ? " " : "") + v.icd10[k];
    std::string detail = "discharged " + v.discharge.iso();
    if (!codes.empty()) detail += "; also " + codes;
    lines.push_back({v.admission, 1, "visit", v.icd10.front(), detail});
  }
  const auto nam = first_nam_dispense(*p, cfg.eligibility);
  for (const auto& rx : p->prescriptions) {
    std::string detail = format_number(rx.ddd) + " DDD";
    if (nam && rx.dispensed == *nam &&
        std::find(cfg.eligibility.nam_atc.begin(), cfg.eligibility.nam_atc.end(), rx.atc) !=
            cfg.eligibility.nam_atc.end()) {
      detail += "; FIRST NAM DISPENSE, DTP " +
                std::to_string(months_until(p->diagnosis, rx.dispensed)) + " months";
    }
    lines.push_back({rx.dispensed, 2, "prescription", rx.atc, detail});
  }
  if (p->death) lines.push_back({*p->death, 3, "death", "", ""});
  std::stable_sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) {
    return a.when != b.when ? a.when < b.when : a.order < b.order;
  });

  const Date open = p->diagnosis;
  const Date close = add_months(p->diagnosis, 36);
  std::ostringstream out;
  out << "patient " << p->id << "  diagnosed " << p->diagnosis.iso() << "  age "
      << p->age_at_diagnosis() << "  arm: " << arm << "\n";
  out << "'|' marks events inside the 36-month window [" << open.iso() << ", " << close.iso()
      << ")\n";
  bool opened = false, closed = false;
  auto marker = [&](Date d) {
    if (!opened && d >= open) {
      out << "  ==== " << open.iso() << "  window opens (month 0)\n";
      opened = true;
    }
    if (!closed && d >= close) {
      out << "  ==== " << close.iso() << "  window closes (month 36)\n";
      closed = true;
    }
  };
  for (const auto& l : lines) {
    marker(l.when);
    const int m = month_index(p->diagnosis, l.when);
    const bool inside = l.when >= open && l.when < close;
    char buf[64];
    std::snprintf(buf, sizeof buf, "%c %s  m%+4d  ", inside ? '|' : ' ', l.when.iso().c_str(), m);
    out << buf << l.kind;
    if (!l.code.empty()) out << "  " << l.code;
    if (!l.detail.empty()) out << "  " << l.detail;
    out << "\n";
  }
  marker(close);

  const std::string wpath = out_file(cfg, "weights.csv");
  if (arm == "comparison" && fs::exists(wpath)) {
    std::ifstream in(wpath);
    std::string line;
    std::vector<std::pair<int, std::string>> profile;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      const auto cells = csv_split(line);
      if (cells.size() == 3 && cells[1] == patient_id) profile.emplace_back(std::stoi(cells[0]), cells[2]);
    }
    if (!profile.empty()) {
      out << "\nweight profile across strata\n  w   weight\n";
      for (const auto& [w, v] : profile) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "  %2d  %s\n", w, v.c_str());
        out << buf;
      }
    }
  }
  return out.str();
}

std::string cmd_report(const PipelineConfig& cfg) {
  const std::string path = out_file(cfg, "summary.json");
  std::ifstream in(path);
  if (!in) throw Error("no run summary at " + path + "; run the pipeline first");
  const json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ParseError("malformed summary " + path);
  return render_report(doc);
}

}  // namespace histctl
