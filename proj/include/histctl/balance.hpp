#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace histctl {

// Which moments of the stratum covariates the weights must reproduce.
struct ConstraintSpec {
  std::vector<std::string> base;  // empty: every covariate column
  std::vector<std::pair<std::string, std::string>> interactions;
  std::vector<std::pair<std::string, int>> polynomials;  // (covariate, max degree)
  std::vector<std::string> variance;                     // adds the raw second moment
  double tolerance = 1e-8;
  int max_iter = 200;
};

// One balancing feature: column a, times column b when b >= 0, raised to power.
struct Feature {
  std::string name;
  int a = 0;
  int b = -1;
  int power = 1;

  double eval(const double* row_values, Eigen::Index stride) const;
};

struct ConstraintSet {
  std::vector<Feature> features;
  Eigen::VectorXd targets;  // treated means of the features
  std::vector<std::string> warnings;

  Eigen::MatrixXd evaluate(const Eigen::MatrixXd& rows) const;
};

// Targets are treated-arm means of every constructed feature. Duplicate
// features are removed; when `comparison` is given, features constant over the
// pooled stratum are dropped with a warning.
ConstraintSet build_constraints(const Eigen::MatrixXd& treated,
                                const std::vector<std::string>& names,
                                const ConstraintSpec& spec,
                                const Eigen::MatrixXd* comparison = nullptr);

struct DualOptions {
  double tol = 1e-8;
  int max_iter = 200;
  double w_total = 1.0;
  int stratum = 0;  // only used in error messages
};

struct WeightSolution {
  int stratum_w = 0;
  Eigen::VectorXd weights;       // one per comparison row, original order
  Eigen::VectorXd multipliers;   // one per constraint, on the feature scale
  bool converged = false;
  double max_constraint_violation = 0.0;  // max |weighted mean - target| / comparison SD
  int iterations = 0;
  std::vector<std::string> dropped;       // constraints removed as collinear or pinned
  std::vector<std::string> warnings;
};

// Minimizes sum w log(w/q) subject to sum w = w_total and weighted feature
// means equal to targets, through damped Newton on the dual. Throws
// CommonSupportError when the targets lie outside the comparison hull.
WeightSolution solve_dual(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                          const Eigen::VectorXd& base_weights, const DualOptions& options,
                          const std::vector<std::string>& names = {});

// Phase-I simplex: is there p >= 0, sum p = 1, features' p = targets?
// When feasible and `witness` is non-null it receives such a p.
bool lp_feasible(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, double tol,
                 Eigen::VectorXd* witness = nullptr);

struct CovariateBalance {
  std::string name;
  double treated_mean = 0.0;
  double treated_sd = 0.0;
  double comparison_mean = 0.0;
  double weighted_mean = 0.0;
  double smd_before = 0.0;
  double smd_after = 0.0;
};

struct BalanceReport {
  int stratum_w = 0;
  std::size_t n_treated = 0;
  std::size_t n_comparison = 0;
  std::vector<CovariateBalance> covariates;
  double share_above_001 = 0.0;  // share of comparisons with weight > 0.01
  double max_abs_smd_after = 0.0;
  std::vector<double> histogram_edges;  // log10 weight bins
  std::vector<std::size_t> histogram_counts;
};

// SMD = (treated mean - comparison mean) / treated SD, falling back to the
// comparison SD when the treated SD is zero.
BalanceReport balance_report(int w, const Eigen::MatrixXd& treated,
                             const Eigen::MatrixXd& comparison,
                             const std::vector<std::string>& names,
                             const Eigen::VectorXd& weights);

struct StratumData {
  int w = 0;
  std::vector<std::string> names;
  Eigen::MatrixXd treated;      // one row per treated patient with DTP = w
  Eigen::MatrixXd comparison;   // one row per comparison alive at w
  std::vector<std::size_t> treated_index;     // registry positions
  std::vector<std::size_t> comparison_index;
};

struct StratumResult {
  WeightSolution solution;
  BalanceReport report;
};

std::pair<WeightSolution, BalanceReport> balance_stratum(const StratumData& data,
                                                         const ConstraintSpec& spec);

struct BalanceFailure {
  int w = 0;
  std::string message;
};

struct BalanceAll {
  std::map<int, StratumResult> strata;
  std::vector<BalanceFailure> failures;  // no common support
  std::vector<std::string> log;
};

// Strata are solved independently on `workers` threads; results do not depend
// on the worker count. Strata without treated patients are skipped and logged.
BalanceAll balance_all(const std::vector<StratumData>& strata, const ConstraintSpec& spec,
                       int workers = 1);

}  // namespace histctl
