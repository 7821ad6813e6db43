#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "histctl/outcome.hpp"
#include "histctl/registry.hpp"

namespace histctl {

// Latent monthly disease severity: s_0 ~ N(initial_mean, initial_sd), then
// s_{t+1} = s_t + d_i + volatility * eps with a per-patient drift
// d_i ~ N(drift_mean, drift_sd).
struct ProgressionParams {
  double initial_mean = -0.5;
  double initial_sd = 1.0;
  double drift_mean = 0.03;
  double drift_sd = 0.05;
  double volatility = 0.08;
};

// Monthly NAM hazard for treated-era patients on the complementary log-log
// scale: base + strength * (severity * s_t + skeletal * [bone metastasis] +
// gnrh * [on GnRH] + age * age_z + comorbidity * h). The markers are the
// observable face of progression; severity itself is latent and by default
// acts on assignment only through them.
struct AssignmentParams {
  double base = -4.6;
  double severity = 0.0;
  double skeletal = 1.6;
  double gnrh = 1.3;
  double age = 0.3;
  double comorbidity = 0.2;
};

// Monthly onset hazards of progression markers, linear in severity on the
// complementary log-log scale.
struct MarkerParams {
  double node_base = -5.0, node_severity = 0.9;
  double visceral_base = -6.0, visceral_severity = 0.9;
  double skeletal_base = -4.5, skeletal_severity = 1.0;
  double bicalutamide_base = -3.4, bicalutamide_severity = 0.8;
  double gnrh_base = -3.2, gnrh_severity = 0.6;   // after bicalutamide
  double visits_base = -1.2, visits_severity = 0.5;  // log monthly admission rate
};

struct HazardParams {
  double base = 0.0;
  double severity = 0.0;
  double age = 0.0;
  double comorbidity = 0.0;
};

struct OutcomeModel {
  HazardParams death{-4.6, 0.7, 0.35, 0.2};
  HazardParams pain{-2.6, 0.5, 0.0, 0.1};
  HazardParams sre{-4.0, 0.6, 0.0, 0.0};
};

enum class EffectScale { log_hazard, probability };

// Treatment shifts applied from the first month after treatment. On the
// log-hazard scale they add to the linear predictor; on the probability scale
// they add to the monthly event probability.
struct TrueEffects {
  double death = 0.0;
  double pain = 0.0;
  double sre = 0.0;
  // Death shift varies with DTP as death + dtp_slope * (18 - dtp) / 18.
  double death_dtp_slope = 0.0;
  EffectScale scale = EffectScale::log_hazard;
};

struct PlaceboParams {
  double psa_base = 20.0, psa_severity = 8.0, psa_noise = 10.0;
  double gleason_base = 7.0, gleason_severity = 0.5, gleason_noise = 1.0;
  double mets_base = 0.3, mets_severity = 0.1;
};

struct ScenarioConfig {
  int n_treated_target = 200;
  int n_comparison_target = 3000;
  std::uint64_t seed = 20240601;
  EligibilityConfig windows;
  ProgressionParams progression;
  AssignmentParams assignment;
  MarkerParams markers;
  OutcomeModel outcome_model;
  TrueEffects true_effects;
  PlaceboParams placebo;
  double confounding_strength = 1.0;
  int follow_up_months = 36;
  double education_missing_rate = 0.05;
  // Treated-era patients generated per treated target before giving up.
  int max_attempts_per_treated = 200;

  void validate() const;  // throws ConfigError
};

struct PatientTruth {
  std::string patient_id;
  bool treated_era = false;
  std::optional<int> dtp;            // treated patients
  double severity_at_diagnosis = 0.0;
  std::vector<float> severity;       // months 0..horizon-1
  int death_month_y0 = -1;           // absolute month index, -1 if alive at horizon
  int death_month_y1 = -1;           // treated only
  std::vector<std::uint8_t> pain_y0, pain_y1, sre_y0, sre_y1;  // latent, per month

  // Potential outcome for outcome period m (1-based) after treatment month w.
  // Morbidity is the latent indicator and is defined regardless of death.
  int potential(Outcome k, bool treated_world, int w, int m) const;
};

struct GroundTruth {
  std::vector<PatientTruth> patients;  // same order as the registry
  int horizon_months = 0;

  const PatientTruth* find(std::string_view id) const;
  // Sample ATET over treated patients: mean of Y_m(1) - Y_m(0).
  double atet(Outcome k, int m) const;
  // ATET restricted to treated patients with DTP in [dtp_lo, dtp_hi).
  double atet(Outcome k, int m, int dtp_lo, int dtp_hi) const;
};

struct GeneratedData {
  Registry registry;
  CohortSelection cohorts;
  GroundTruth truth;
};

// Deterministic given cfg.seed; each patient draws from streams derived from
// (seed, era, index), so results do not depend on generation order.
GeneratedData generate(const ScenarioConfig& cfg);

struct PlaceboCovariates {
  std::string patient_id;
  double psa_level = 0.0;
  double gleason_score = 0.0;
  double metastasis_at_diagnosis = 0.0;
};

std::vector<PlaceboCovariates> emit_placebo_covariates(const Registry& registry,
                                                       const GroundTruth& truth,
                                                       const ScenarioConfig& cfg);

void write_ground_truth(std::ostream& out, const GroundTruth& truth);
void write_placebo_csv(const std::string& path, const std::vector<PlaceboCovariates>& rows,
                       const std::string& banner = "");
std::vector<PlaceboCovariates> read_placebo_csv(const std::string& path);

}  // namespace histctl
