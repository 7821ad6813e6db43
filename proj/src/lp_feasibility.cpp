#include <cmath>
#include <limits>

#include "histctl/balance.hpp"
#include "histctl/errors.hpp"

namespace histctl {

// Dense phase-I tableau. Rows: the R feature equations and the simplex
// equation; columns: n weights, R + 1 artificials, right-hand side.
bool lp_feasible(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, double tol,
                 Eigen::VectorXd* witness) {
  const Eigen::Index n = features.rows();
  const Eigen::Index R = features.cols();
  if (targets.size() != R) throw ValidationError("target count does not match feature count");
  if (n == 0) return false;
  const Eigen::Index m = R + 1;
  const Eigen::Index cols = n + m + 1;
  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m + 1, cols);  // last row: phase-I costs
  for (Eigen::Index r = 0; r < R; ++r) {
    const double sign = targets(r) < 0 ? -1.0 : 1.0;
    T.row(r).head(n) = sign * features.col(r).transpose();
    T(r, cols - 1) = sign * targets(r);
  }
  T.row(R).head(n).setOnes();
  T(R, cols - 1) = 1.0;
  for (Eigen::Index r = 0; r < m; ++r) T(r, n + r) = 1.0;
  // Reduced costs of minimizing the artificial sum, basis = artificials.
  for (Eigen::Index r = 0; r < m; ++r) T.row(m) -= T.row(r);
  for (Eigen::Index r = 0; r < m; ++r) T(m, n + r) = 0.0;

  std::vector<Eigen::Index> basis(m);
  for (Eigen::Index r = 0; r < m; ++r) basis[r] = n + r;

  const double eps = 1e-11;
  const long max_pivots = 50 * static_cast<long>(n + m);
  long degenerate_run = 0;
  for (long it = 0; it < max_pivots; ++it) {
    // Dantzig pricing, switching to Bland's rule during degenerate stretches.
    Eigen::Index enter = -1;
    double best = -eps;
    for (Eigen::Index j = 0; j < n + m; ++j) {
      if (T(m, j) < best) {
        enter = j;
        if (degenerate_run > 20) break;
        best = T(m, j);
      }
    }
    if (enter < 0) break;
    Eigen::Index leave = -1;
    double ratio = std::numeric_limits<double>::infinity();
    for (Eigen::Index r = 0; r < m; ++r) {
      if (T(r, enter) > eps) {
        const double q = T(r, cols - 1) / T(r, enter);
        if (q < ratio - 1e-15 || (q <= ratio + 1e-15 && leave >= 0 && basis[r] < basis[leave])) {
          ratio = q;
          leave = r;
        }
      }
    }
    if (leave < 0) break;  // unbounded direction cannot occur in phase I
    degenerate_run = ratio <= 1e-15 ? degenerate_run + 1 : 0;
    T.row(leave) /= T(leave, enter);
    for (Eigen::Index r = 0; r <= m; ++r)
      if (r != leave && T(r, enter) != 0.0) T.row(r) -= T(r, enter) * T.row(leave);
    basis[leave] = enter;
  }
  const double infeasibility = -T(m, cols - 1);
  const bool feasible = infeasibility <= tol;
  if (feasible && witness) {
    witness->setZero(n);
    for (Eigen::Index r = 0; r < m; ++r)
      if (basis[r] < n) (*witness)(basis[r]) = std::max(0.0, T(r, cols - 1));
  }
  return feasible;
}

}  // namespace histctl
