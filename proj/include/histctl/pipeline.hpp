#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "histctl/balance.hpp"
#include "histctl/covariates.hpp"
#include "histctl/estimate.hpp"
#include "histctl/factor_model.hpp"
#include "histctl/registry.hpp"
#include "histctl/synthetic.hpp"

namespace histctl {

struct AnalysisConfig {
  bool bounds = true;
  bool subgroups = true;
  bool placebo = true;
  bool cll = true;
  bool pooled = false;  // adds month-pooled regressions alongside the per-month fits
  double subgroup_quantile = 0.5;
  int family_size = 3;
  double overall_alpha = 0.05;
  int cll_horizon = 24;
  CllOptions cll_options;
};

struct PipelineConfig {
  struct Paths {
    std::string registry;  // empty: <out_dir>/registry.jsonl
    std::string out_dir = "out";
    std::string placebo;  // empty: <out_dir>/placebo.csv when present
  } paths;
  std::uint64_t seed = 20240601;
  ScenarioConfig scenario;  // generator; its seed and windows come from seed and eligibility
  EligibilityConfig eligibility;
  ConstraintSpec constraints;
  int w_min = 4;
  int w_max = 36;
  OutcomeHorizons horizons;
  AnalysisConfig analyses;
  int workers = 1;
  bool force = false;  // replace outputs written under a different config hash

  ScenarioConfig resolved_scenario() const;
  double threshold() const { return analyses.overall_alpha / analyses.family_size; }
};

nlohmann::json config_to_json(const PipelineConfig& cfg);
// Unknown keys and ill-typed values raise ConfigError.
PipelineConfig config_from_json(const nlohmann::json& doc);
PipelineConfig load_config(const std::string& path);
void save_config(const std::string& path, const PipelineConfig& cfg);

// Sets an existing dotted key (e.g. "balance.tolerance") from its text form;
// the value is read as JSON when it parses, else as a string.
void apply_override(nlohmann::json& doc, const std::string& dotted, const std::string& value);

// Reads the config file when given (defaults otherwise), applies overrides in
// order and then HISTCTL_OUT_DIR.
PipelineConfig resolve_config(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides);

// FNV-1a 64 of the canonical config text, excluding settings that cannot
// change results (output directory, workers, force).
std::string config_hash(const PipelineConfig& cfg);
std::string fnv1a_hex(std::string_view text);
std::string file_checksum(const std::string& path);

// ------------------------------------------------------------ reports

struct DescriptiveRow {
  std::string label;
  double comparison_mean = 0.0, comparison_sd = 0.0;
  double treated_mean = 0.0, treated_sd = 0.0;
  double difference = 0.0;  // comparison - treated
  double p_value = 1.0;     // Welch two-sample t-test
};

struct StratumSummary {
  int w = 0;
  std::size_t n_treated = 0;
  std::size_t n_comparison = 0;
  bool converged = false;
  double max_violation = 0.0;
  int iterations = 0;
  double share_above_001 = 0.0;
  double max_abs_smd_after = 0.0;
  std::vector<std::string> dropped;
};

struct RunReport {
  nlohmann::json config;
  std::string config_hash;
  std::vector<AttritionStep> attrition;
  std::vector<DescriptiveRow> descriptives;
  std::string factor_table;
  std::vector<BalanceReport> balance;
  std::vector<StratumSummary> strata;
  std::vector<BalanceFailure> failures;
  std::vector<EffectEstimate> estimates;
  std::optional<PlaceboResult> placebo;
  std::optional<HazardFit> cll;
  double mortality_effect = 0.0;
  std::vector<std::string> warnings;
  std::vector<std::string> stages_cached;
};

nlohmann::json report_to_json(const RunReport& r);
// Human-readable rendering of a summary document.
std::string render_report(const nlohmann::json& summary);
std::string render_descriptives(const std::vector<DescriptiveRow>& rows);

// Welch t-test p-value for two samples given means, SDs and sizes.
double welch_p_value(double m1, double s1, double n1, double m2, double s2, double n2);
std::vector<DescriptiveRow> descriptive_table(const Registry& registry,
                                              const CohortSelection& cohorts,
                                              const std::vector<std::optional<PreDiagnosisCovariates>>& pre);

// ------------------------------------------------------------ commands

struct GenerateSummary {
  std::string out_dir;
  std::size_t patients = 0;
  std::size_t treated = 0;
  std::size_t comparison = 0;
  nlohmann::json manifest;
};

// Writes registry.jsonl, csv/, ground_truth.jsonl, placebo.csv, manifest.json.
GenerateSummary cmd_generate(const PipelineConfig& cfg);

enum class RunScope { balance, estimate, placebo, full };

// Executes the workflow up to `scope`, writing tables and summary.json into
// paths.out_dir. Balancing results are cached under out_dir/cache keyed by the
// inputs that determine them.
RunReport cmd_run(const PipelineConfig& cfg, RunScope scope = RunScope::full);

// Text listing of one patient's events; comparison patients get their weight
// profile across strata when <out_dir>/weights.csv exists.
std::string cmd_timeline(const PipelineConfig& cfg, const std::string& patient_id);

// Renders <out_dir>/summary.json.
std::string cmd_report(const PipelineConfig& cfg);

}  // namespace histctl
