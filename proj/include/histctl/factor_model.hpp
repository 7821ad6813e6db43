#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace histctl {

struct FactorOptions {
  int max_iter = 20000;
  double tol = 1e-10;          // change in the ML discrepancy between EM sweeps
  double heywood_floor = 0.005;
  std::size_t min_rows = 200;
};

// Maximum-likelihood factor model on the correlation scale, varimax-rotated
// and canonicalized: factors ordered by descending SS loadings, each with its
// largest-magnitude loading positive.
struct FactorModel {
  std::vector<std::string> variables;
  Eigen::MatrixXd loadings;        // p x k, rotated
  Eigen::VectorXd uniquenesses;    // p
  Eigen::MatrixXd rotation;        // k x k orthogonal: loadings = unrotated * rotation
  Eigen::VectorXd ss_loadings;     // k
  Eigen::VectorXd proportion_var;  // k
  Eigen::VectorXd cumulative_var;  // k
  Eigen::VectorXd means;           // fit-time standardization
  Eigen::VectorXd sds;
  Eigen::MatrixXd correlation;     // sample correlation of the fit rows
  int iterations = 0;
  bool converged = false;
  bool heywood = false;
  std::vector<std::string> warnings;

  int factors() const { return static_cast<int>(loadings.cols()); }
  Eigen::MatrixXd implied_correlation() const;
};

// Rows containing NaN are skipped (listwise). Throws ValidationError when
// fewer than options.min_rows complete rows remain or a column is constant.
FactorModel fit_factor_model(const Eigen::MatrixXd& data, int k,
                             std::vector<std::string> variable_names = {},
                             const FactorOptions& options = {});

// Regression-method scores for raw (unstandardized) rows.
Eigen::VectorXd score_factors(const FactorModel& model, const Eigen::VectorXd& row);
Eigen::MatrixXd score_factors(const FactorModel& model, const Eigen::MatrixXd& rows);

// Kaiser-normalized varimax; returns rotated loadings and writes the rotation.
Eigen::MatrixXd varimax(const Eigen::MatrixXd& loadings, Eigen::MatrixXd* rotation,
                        double eps = 1e-10, int max_iter = 1000);

double tucker_congruence(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

// Loadings table with SS loadings / Proportion Var / Cumulative Var rows;
// loadings with magnitude below `blank_below` are left empty.
std::string render_factor_table(const FactorModel& model, double blank_below = 0.2);

}  // namespace histctl
