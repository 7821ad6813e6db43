#include <algorithm>
#include <cmath>
#include <map>

#include "histctl/errors.hpp"
#include "histctl/estimate.hpp"

namespace histctl {

WlsFit fit_wls(std::span<const WlsObservation> obs) {
  std::map<int, std::pair<double, double>> arm_weight;  // stratum -> (comparison, treated)
  for (const auto& o : obs) {
    if (!(o.weight > 0.0)) continue;
    auto& a = arm_weight[o.stratum];
    (o.treated ? a.second : a.first) += o.weight;
  }
  WlsFit fit;
  std::map<int, int> column;  // stratum -> dummy column (0 = reference)
  for (const auto& [s, a] : arm_weight) {
    if (a.first > 0.0 && a.second > 0.0) {
      column[s] = static_cast<int>(fit.strata.size());
      fit.strata.push_back(s);
    } else {
      fit.dropped_strata.push_back(s);
    }
  }
  if (fit.strata.empty()) throw EstimationError("no stratum has both treated and comparison rows");

  const int S = static_cast<int>(fit.strata.size());
  const int p = S + 1;  // intercept, S-1 dummies, treatment
  const int t_col = S;
  Eigen::MatrixXd xtwx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xtwy = Eigen::VectorXd::Zero(p);
  int nz[3];
  auto nonzeros = [&](const WlsObservation& o) {
    int k = 0;
    nz[k++] = 0;
    const int c = column.at(o.stratum);
    if (c > 0) nz[k++] = c;
    if (o.treated) nz[k++] = t_col;
    return k;
  };
  double ymin = INFINITY, ymax = -INFINITY;
  for (const auto& o : obs) {
    if (!(o.weight > 0.0) || !column.count(o.stratum)) continue;
    const int k = nonzeros(o);
    for (int a = 0; a < k; ++a) {
      xtwy(nz[a]) += o.weight * o.y;
      for (int b = 0; b < k; ++b) xtwx(nz[a], nz[b]) += o.weight;
    }
    ymin = std::min(ymin, o.y);
    ymax = std::max(ymax, o.y);
    ++fit.n;
  }
  const Eigen::MatrixXd bread = xtwx.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  fit.coefficients = bread * xtwy;

  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  for (const auto& o : obs) {
    if (!(o.weight > 0.0) || !column.count(o.stratum)) continue;
    const int k = nonzeros(o);
    double fitted = 0.0;
    for (int a = 0; a < k; ++a) fitted += fit.coefficients(nz[a]);
    const double u = o.weight * (o.y - fitted);
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) meat(nz[a], nz[b]) += u * u;
  }
  fit.covariance = bread * meat * bread;
  fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose());
  fit.beta = fit.coefficients(t_col);
  fit.degenerate = ymax - ymin == 0.0;
  fit.se = fit.degenerate ? 0.0 : std::sqrt(std::max(0.0, fit.covariance(t_col, t_col)));
  return fit;
}

double normal_two_sided_p(double z) { return std::erfc(std::abs(z) / std::sqrt(2.0)); }

EffectEstimate make_estimate(std::string outcome, int month, const WlsFit& fit, double threshold,
                             std::string tag) {
  EffectEstimate e;
  e.outcome = std::move(outcome);
  e.month = month;
  e.beta = fit.beta;
  e.se = fit.se;
  e.ci_lo = fit.beta - 1.96 * fit.se;
  e.ci_hi = fit.beta + 1.96 * fit.se;
  e.p_raw = fit.se > 0.0 ? normal_two_sided_p(fit.beta / fit.se) : (fit.beta == 0.0 ? 1.0 : 0.0);
  e.p_threshold = threshold;
  e.significant = e.p_raw < threshold;
  e.analysis_tag = std::move(tag);
  e.n = fit.n;
  e.degenerate = fit.degenerate;
  if (fit.degenerate) e.warnings.push_back("constant outcome; standard error set to 0");
  for (int s : fit.dropped_strata)
    e.warnings.push_back("stratum " + std::to_string(s) + " has a single arm and was dropped");
  return e;
}

EffectEstimate wls_atet(const OutcomePanel& panel, Outcome o, int m, double threshold) {
  panel.check_month(o, m);
  std::vector<WlsObservation> obs;
  obs.reserve(panel.rows.size());
  for (const auto& r : panel.rows) {
    const int y = r.series(o)[m - 1];
    if (y < 0) continue;
    obs.push_back({static_cast<double>(y), r.weight, r.w, r.treated});
  }
  return make_estimate(std::string(to_string(o)), m, fit_wls(obs), threshold, "main");
}

}  // namespace histctl

namespace histctl {

WlsFit fit_wls_pooled(std::span<const PooledObservation> obs) {
  std::map<int, std::pair<double, double>> arm_weight;
  std::map<int, int> month_col;
  for (const auto& o : obs) {
    if (!(o.weight > 0.0)) continue;
    auto& a = arm_weight[o.stratum];
    (o.treated ? a.second : a.first) += o.weight;
    month_col[o.month] = 0;
  }
  WlsFit fit;
  std::map<int, int> stratum_col;
  for (const auto& [s, a] : arm_weight) {
    if (a.first > 0.0 && a.second > 0.0) {
      stratum_col[s] = static_cast<int>(fit.strata.size());
      fit.strata.push_back(s);
    } else {
      fit.dropped_strata.push_back(s);
    }
  }
  if (fit.strata.empty()) throw EstimationError("no stratum has both treated and comparison rows");
  // Layout: intercept, months 2.., strata 2.., treatment.
  int next = 1;
  bool first = true;
  for (auto& [m, c] : month_col) {
    c = first ? 0 : next++;
    first = false;
  }
  for (auto& [s, c] : stratum_col) c = c == 0 ? 0 : next++;
  const int t_col = next;
  const int p = next + 1;

  int nz[4];
  auto nonzeros = [&](const PooledObservation& o) {
    int k = 0;
    nz[k++] = 0;
    if (const int c = month_col.at(o.month); c > 0) nz[k++] = c;
    if (const int c = stratum_col.at(o.stratum); c > 0) nz[k++] = c;
    if (o.treated) nz[k++] = t_col;
    return k;
  };
  auto used = [&](const PooledObservation& o) {
    return o.weight > 0.0 && stratum_col.count(o.stratum);
  };

  Eigen::MatrixXd xtwx = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd xtwy = Eigen::VectorXd::Zero(p);
  double ymin = INFINITY, ymax = -INFINITY;
  for (const auto& o : obs) {
    if (!used(o)) continue;
    const int k = nonzeros(o);
    for (int a = 0; a < k; ++a) {
      xtwy(nz[a]) += o.weight * o.y;
      for (int b = 0; b < k; ++b) xtwx(nz[a], nz[b]) += o.weight;
    }
    ymin = std::min(ymin, o.y);
    ymax = std::max(ymax, o.y);
    ++fit.n;
  }
  const Eigen::MatrixXd bread = xtwx.ldlt().solve(Eigen::MatrixXd::Identity(p, p));
  fit.coefficients = bread * xtwy;

  std::map<std::size_t, Eigen::VectorXd> scores;
  for (const auto& o : obs) {
    if (!used(o)) continue;
    const int k = nonzeros(o);
    double fitted = 0.0;
    for (int a = 0; a < k; ++a) fitted += fit.coefficients(nz[a]);
    auto [it, fresh] = scores.try_emplace(o.cluster);
    if (fresh) it->second = Eigen::VectorXd::Zero(p);
    for (int a = 0; a < k; ++a) it->second(nz[a]) += o.weight * (o.y - fitted);
  }
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(p, p);
  for (const auto& [c, g] : scores) meat.noalias() += g * g.transpose();
  fit.covariance = bread * meat * bread;
  fit.covariance = 0.5 * (fit.covariance + fit.covariance.transpose());
  fit.beta = fit.coefficients(t_col);
  fit.degenerate = ymax - ymin == 0.0;
  fit.se = fit.degenerate ? 0.0 : std::sqrt(std::max(0.0, fit.covariance(t_col, t_col)));
  return fit;
}

EffectEstimate wls_atet_pooled(const OutcomePanel& panel, Outcome o, int m, double threshold) {
  panel.check_month(o, m);
  std::vector<PooledObservation> obs;
  obs.reserve(panel.rows.size() * static_cast<std::size_t>(m));
  for (const auto& r : panel.rows) {
    const auto& y = r.series(o);
    for (int k = 1; k <= m; ++k) {
      if (y[k - 1] < 0) continue;
      obs.push_back({static_cast<double>(y[k - 1]), r.weight, r.w, k, r.treated, r.patient});
    }
  }
  return make_estimate(std::string(to_string(o)), m, fit_wls_pooled(obs), threshold, "pooled");
}

}  // namespace histctl
