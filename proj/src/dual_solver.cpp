#include <algorithm>
#include <cmath>
#include <numeric>

#include "histctl/balance.hpp"
#include "histctl/errors.hpp"

namespace histctl {

namespace {

struct Moments {
  Eigen::VectorXd mean, sd;
};

Moments column_moments(const Eigen::MatrixXd& z, const std::vector<Eigen::Index>& rows) {
  const Eigen::Index R = z.cols();
  Moments m{Eigen::VectorXd::Zero(R), Eigen::VectorXd::Zero(R)};
  const double n = static_cast<double>(rows.size());
  for (Eigen::Index j : rows) m.mean += z.row(j).transpose();
  m.mean /= n;
  for (Eigen::Index j : rows) m.sd += (z.row(j).transpose() - m.mean).cwiseAbs2();
  m.sd = (m.sd / n).cwiseSqrt();
  return m;
}

// Dual objective log sum_j q_j exp(lambda'(z_j - t)) and the tilted
// probabilities p_j.
double dual_value(const Eigen::MatrixXd& z, const Eigen::VectorXd& t, const Eigen::VectorXd& logq,
                  const Eigen::VectorXd& lambda, Eigen::VectorXd* p) {
  Eigen::VectorXd eta = logq + (z.rowwise() - t.transpose()) * lambda;
  const double top = eta.maxCoeff();
  Eigen::VectorXd e = (eta.array() - top).exp();
  const double s = e.sum();
  if (p) *p = e / s;
  return top + std::log(s);
}

}  // namespace

WeightSolution solve_dual(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets,
                          const Eigen::VectorXd& base_weights, const DualOptions& opt,
                          const std::vector<std::string>& names_in) {
  const Eigen::Index n = features.rows();
  const Eigen::Index R = features.cols();
  if (n == 0) throw ValidationError("no comparison rows");
  if (targets.size() != R) throw ValidationError("target count does not match feature count");
  if (base_weights.size() != n) throw ValidationError("base weight count does not match rows");
  if ((base_weights.array() <= 0.0).any() || !base_weights.allFinite())
    throw ValidationError("base weights must be positive and finite");
  if (!features.allFinite() || !targets.allFinite())
    throw ValidationError("features and targets must be finite");
  if (!(opt.w_total > 0.0)) throw ValidationError("total weight must be positive");

  std::vector<std::string> names = names_in;
  for (Eigen::Index r = static_cast<Eigen::Index>(names.size()); r < R; ++r)
    names.push_back("c" + std::to_string(r + 1));

  WeightSolution sol;
  sol.stratum_w = opt.stratum;
  sol.multipliers = Eigen::VectorXd::Zero(R);
  auto no_support = [&] {
    return CommonSupportError(opt.stratum,
                              "no common support for stratum " + std::to_string(opt.stratum));
  };

  std::vector<Eigen::Index> rows(n);
  std::iota(rows.begin(), rows.end(), Eigen::Index{0});
  const Moments full = column_moments(features, rows);
  // Violation scale: comparison SD, or 1 for constant columns.
  Eigen::VectorXd scale = full.sd;
  for (Eigen::Index r = 0; r < R; ++r)
    if (!(scale(r) > 0.0)) scale(r) = std::max(1.0, std::abs(full.mean(r)));

  // Face reduction: a target at the minimum or maximum of a feature forces all
  // weight onto the comparisons attaining it.
  std::vector<bool> active(R, true);
  for (bool changed = true; changed;) {
    changed = false;
    for (Eigen::Index r = 0; r < R; ++r) {
      if (!active[r]) continue;
      double lo = INFINITY, hi = -INFINITY;
      for (Eigen::Index j : rows) {
        lo = std::min(lo, features(j, r));
        hi = std::max(hi, features(j, r));
      }
      const double eps = 1e-12 * scale(r) + 1e-14 * std::max(std::abs(lo), std::abs(hi));
      const double t = targets(r);
      if (t < lo - eps || t > hi + eps) throw no_support();
      const bool at_lo = t <= lo + eps, at_hi = t >= hi - eps;
      if (!at_lo && !at_hi) continue;
      if (at_lo && at_hi) {
        active[r] = false;  // constant over the remaining rows
        continue;
      }
      const double pin = at_lo ? lo : hi;
      std::vector<Eigen::Index> kept;
      for (Eigen::Index j : rows)
        if (std::abs(features(j, r) - pin) <= eps) kept.push_back(j);
      rows.swap(kept);
      active[r] = false;
      sol.dropped.push_back(names[r] + " (pinned at " + (at_lo ? "minimum" : "maximum") + ")");
      changed = true;
    }
  }

  // Sequential Gram-Schmidt on the centered, scaled remaining columns drops
  // constraints implied by earlier ones.
  const Moments red = column_moments(features, rows);
  std::vector<Eigen::Index> cons;
  {
    std::vector<Eigen::VectorXd> basis;
    for (Eigen::Index r = 0; r < R; ++r) {
      if (!active[r]) continue;
      if (!(red.sd(r) > 0.0)) continue;
      Eigen::VectorXd v(static_cast<Eigen::Index>(rows.size()));
      for (std::size_t k = 0; k < rows.size(); ++k)
        v(static_cast<Eigen::Index>(k)) = (features(rows[k], r) - red.mean(r)) / red.sd(r);
      const double norm0 = v.norm();
      for (const auto& b : basis) v -= b.dot(v) * b;
      for (const auto& b : basis) v -= b.dot(v) * b;
      if (v.norm() <= 1e-7 * norm0) {
        sol.dropped.push_back(names[r] + " (collinear)");
        continue;
      }
      basis.push_back(v / v.norm());
      cons.push_back(r);
    }
  }

  const Eigen::Index K = static_cast<Eigen::Index>(cons.size());
  const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd z(m, K);
  Eigen::VectorXd t(K), logq(m);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::Index r = cons[k];
    t(k) = (targets(r) - red.mean(r)) / red.sd(r);
    for (Eigen::Index i = 0; i < m; ++i) z(i, k) = (features(rows[i], r) - red.mean(r)) / red.sd(r);
  }
  for (Eigen::Index i = 0; i < m; ++i) logq(i) = std::log(base_weights(rows[i]));

  auto violation = [&](const Eigen::VectorXd& p) {
    // Over every original constraint, in comparison-SD units.
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(R);
    for (Eigen::Index i = 0; i < m; ++i) mean += p(i) * features.row(rows[i]).transpose();
    return ((mean - targets).cwiseAbs().array() / scale.array()).maxCoeff();
  };

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(K), p;
  double f = dual_value(z, t, logq, lambda, &p);
  double viol = R ? violation(p) : 0.0;
  int it = 0;
  bool stalled = false;
  // Hull membership over every original constraint, in scaled units.
  auto feasible = [&] {
    Eigen::MatrixXd all(m, R);
    for (Eigen::Index i = 0; i < m; ++i)
      all.row(i) = (features.row(rows[i]) - full.mean.transpose()).array() /
                   scale.transpose().array();
    const Eigen::VectorXd tt = (targets - full.mean).array() / scale.array();
    return lp_feasible(all, tt, 1e-9);
  };
  constexpr int kHullCheckAfter = 12;

  while (viol > opt.tol && it < opt.max_iter && K > 0) {
    if (it == kHullCheckAfter && !feasible()) throw no_support();
    ++it;
    const Eigen::VectorXd zbar = z.transpose() * p;
    const Eigen::VectorXd g = zbar - t;
    const Eigen::MatrixXd zc = z.rowwise() - zbar.transpose();
    Eigen::MatrixXd H = zc.transpose() * p.asDiagonal() * zc;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
    Eigen::VectorXd d = -ldlt.solve(g);
    if (ldlt.info() != Eigen::Success || !d.allFinite() || g.dot(d) >= 0.0) {
      H.diagonal().array() += 1e-10 * std::max(1.0, H.trace());
      d = -H.ldlt().solve(g);
    }
    double step = 1.0;
    Eigen::VectorXd p_new;
    double f_new = dual_value(z, t, logq, lambda + d, &p_new);
    int halvings = 0;
    while (!(f_new <= f + 1e-4 * step * g.dot(d)) && halvings < 60) {
      step *= 0.5;
      ++halvings;
      f_new = dual_value(z, t, logq, lambda + step * d, &p_new);
    }
    if (!(f_new <= f)) {
      stalled = true;
      break;
    }
    lambda += step * d;
    f = f_new;
    p = std::move(p_new);
    viol = violation(p);
  }

  sol.iterations = it;
  sol.max_constraint_violation = viol;
  sol.converged = viol <= opt.tol;
  sol.weights = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < m; ++i) sol.weights(rows[i]) = opt.w_total * p(i);
  for (Eigen::Index k = 0; k < K; ++k) sol.multipliers(cons[k]) = lambda(k) / red.sd(cons[k]);

  if (!sol.converged) {
    if (it <= kHullCheckAfter && !feasible()) throw no_support();
    sol.warnings.push_back(std::string("entropy balancing did not reach tolerance") +
                           (stalled ? " (line search stalled)" : ""));
  }
  return sol;
}

}  // namespace histctl
