#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "histctl/balance.hpp"
#include "histctl/outcome.hpp"
#include "histctl/registry.hpp"

namespace histctl {

// ------------------------------------------------------------ outcome panel

// Treated patients of stratum w (weight 1) and the comparison weights of w.
struct StratumWeights {
  int w = 0;
  std::vector<std::size_t> treated;     // registry positions
  std::vector<std::size_t> comparison;
  std::vector<double> weights;          // per comparison
};

std::vector<StratumWeights> stratum_weights(const std::vector<StratumData>& strata,
                                            const BalanceAll& balance);
// Same strata with every comparison weighted n_treated / n_comparison.
std::vector<StratumWeights> uniform_weights(const std::vector<StratumData>& strata,
                                            const BalanceAll& balance);

struct OutcomeHorizons {
  int dead = 24;
  int pain = 24;
  int sre = 24;
  int of(Outcome o) const;
};

// One (patient, stratum) clock. Series hold 1/0, or -1 where undefined.
struct PanelRow {
  std::size_t patient = 0;
  int treated = 0;
  int w = 0;
  double weight = 1.0;
  std::vector<std::int8_t> dead, pain, sre;

  const std::vector<std::int8_t>& series(Outcome o) const;
};

struct OutcomePanel {
  OutcomeHorizons horizons;
  std::vector<PanelRow> rows;

  // Throws EstimationError when m exceeds the outcome's horizon.
  void check_month(Outcome o, int m) const;
};

inline constexpr std::string_view kPainAtcPrefix = "N02AA";
bool is_pain_code(std::string_view atc);
bool is_sre_code(std::string_view icd10);

// Clocks start at diagnosis + w months for both arms; period m covers
// [clock + (m-1) months, clock + m months). Comparisons with zero weight are
// left out.
OutcomePanel derive_outcomes(const Registry& registry, const std::vector<StratumWeights>& weights,
                             const OutcomeHorizons& horizons = {});

// ------------------------------------------------------------ weighted least squares

struct WlsObservation {
  double y = 0.0;
  double weight = 1.0;
  int stratum = 0;
  int treated = 0;
};

struct WlsFit {
  double beta = 0.0;  // coefficient on treatment
  double se = 0.0;    // HC0
  Eigen::VectorXd coefficients;  // intercept, stratum effects, treatment
  Eigen::MatrixXd covariance;    // HC0 sandwich
  std::vector<int> strata;          // strata in the design, first is the reference
  std::vector<int> dropped_strata;  // single-arm strata removed
  std::size_t n = 0;
  bool degenerate = false;  // constant outcome
};

// y on intercept + stratum indicators + treatment, weighted, HC0 covariance.
// Throws EstimationError when no stratum has both arms.
WlsFit fit_wls(std::span<const WlsObservation> obs);

struct EffectEstimate {
  std::string outcome;
  int month = 0;
  double beta = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double p_raw = 1.0;
  double p_threshold = 0.05 / 3.0;
  bool significant = false;
  std::string analysis_tag = "main";
  std::size_t n = 0;
  bool degenerate = false;
  std::vector<std::string> warnings;
};

double normal_two_sided_p(double z);
EffectEstimate make_estimate(std::string outcome, int month, const WlsFit& fit, double threshold,
                             std::string tag);

// The treatment-effect regression for one outcome-month.
EffectEstimate wls_atet(const OutcomePanel& panel, Outcome o, int m,
                        double threshold = 0.05 / 3.0);

// Months 1..m stacked with month and stratum indicators; the covariance is
// clustered by patient since each patient contributes several rows.
struct PooledObservation {
  double y = 0.0;
  double weight = 1.0;
  int stratum = 0;
  int month = 1;
  int treated = 0;
  std::size_t cluster = 0;
};

WlsFit fit_wls_pooled(std::span<const PooledObservation> obs);
EffectEstimate wls_atet_pooled(const OutcomePanel& panel, Outcome o, int m,
                               double threshold = 0.05 / 3.0);

// ------------------------------------------------------------ multiplicity

struct BonferroniResult {
  double threshold = 0.0;
  std::vector<bool> significant;
};

// threshold = overall / family_size; a test rejects when p < threshold.
BonferroniResult bonferroni(std::span<const double> p_values, int family_size = 3,
                            double overall = 0.05);

// ------------------------------------------------------------ bounds

struct MorbidityBounds {
  EffectEstimate lower, upper, complete_case;
  double mortality_effect = 0.0;  // effect on being dead before the period
  bool monotone = false;          // death shares and alive means ordered as the bound rule assumes
};

// Deaths before the period are imputed as 1 in one fit and 0 in the other;
// the fits are labelled by the sign of the mortality effect so that
// lower.beta <= upper.beta.
MorbidityBounds morbidity_bounds(const OutcomePanel& panel, Outcome o, int m,
                                 double threshold = 0.05 / 3.0);

// ------------------------------------------------------------ discrete-time hazard

struct CllOptions {
  int max_iter = 100;
  // On the max-norm gradient; a Newton decrement at the rounding level of the
  // log-likelihood also counts as converged.
  double tol = 1e-6;
};

struct HazardFit {
  int horizon = 0;
  std::vector<double> gamma;         // per month 1..M: baseline linear predictor
  std::vector<int> strata;
  std::vector<double> alpha;         // per stratum, 0 for the reference
  double tau = 0.0;
  double se_tau = 0.0;
  double loglik = 0.0;
  double gradient_norm = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<int> month_group;      // month -> parameter group after merging
  std::vector<std::string> warnings;

  // P(alive after month `months`) for a patient in stratum w and arm t.
  double survival(int w, int treated, int months) const;
};

// Cell-level sufficient statistics of the weighted complementary log-log
// likelihood: events and non-events at (month, stratum, arm).
struct CllCell {
  int month = 0;
  int stratum = 0;
  int treated = 0;
  double events = 0.0;
  double nonevents = 0.0;
};

std::vector<CllCell> cll_cells(const OutcomePanel& panel, int horizon);

// Weighted log-likelihood and its gradient over cells for the parameter
// layout intercept, month groups 2.., stratum groups 2.., tau.
struct CllDesign {
  int months = 0;
  std::vector<int> month_group;   // index m-1 -> group
  std::vector<int> stratum_group; // index into strata -> group
  std::vector<int> strata;
  int month_groups = 0;
  int stratum_groups = 0;
  // Intercept, month groups 2.., stratum groups 2.. and tau.
  int parameters() const { return month_groups + stratum_groups; }
};

double cll_loglik(const std::vector<CllCell>& cells, const CllDesign& design,
                  const Eigen::VectorXd& theta, Eigen::VectorXd* gradient = nullptr,
                  Eigen::MatrixXd* hessian = nullptr);
CllDesign cll_design(const std::vector<CllCell>& cells, int horizon,
                     std::vector<std::string>* warnings = nullptr);

HazardFit fit_cll(const OutcomePanel& panel, int horizon, const CllOptions& options = {});

// ------------------------------------------------------------ placebo and subgroups

struct PlaceboResult {
  std::vector<EffectEstimate> estimates;
  bool hidden_bias = false;  // any covariate rejected at the Bonferroni level
  std::vector<std::string> warnings;
};

// Each pre-treatment covariate (indexed by registry position, NaN if missing)
// is used as the outcome of the stratum regression.
PlaceboResult placebo_test(const std::vector<StratumWeights>& weights,
                           const std::vector<std::string>& names,
                           const std::vector<std::vector<double>>& covariates,
                           double overall = 0.05);

struct SubgroupResult {
  double split = 0.0;  // treated DTP quantile; ties go to the upper group
  std::vector<EffectEstimate> lower, upper;
};

// Throws EstimationError when every treated DTP is equal.
double dtp_split(std::vector<int> dtps, double quantile = 0.5);
OutcomePanel subgroup_panel(const OutcomePanel& panel, double split, bool upper);
SubgroupResult subgroup_analysis(const OutcomePanel& panel, const std::vector<Outcome>& outcomes,
                                 const std::vector<int>& months, double quantile = 0.5,
                                 double threshold = 0.05 / 3.0);

}  // namespace histctl
