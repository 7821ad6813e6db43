#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <optional>
#include <thread>

#include "histctl/balance.hpp"
#include "histctl/errors.hpp"

namespace histctl {

namespace {

double sample_sd(const Eigen::VectorXd& x) {
  if (x.size() < 2) return 0.0;
  const double m = x.mean();
  return std::sqrt((x.array() - m).square().sum() / static_cast<double>(x.size() - 1));
}

}  // namespace

BalanceReport balance_report(int w, const Eigen::MatrixXd& treated,
                             const Eigen::MatrixXd& comparison,
                             const std::vector<std::string>& names,
                             const Eigen::VectorXd& weights) {
  BalanceReport rep;
  rep.stratum_w = w;
  rep.n_treated = static_cast<std::size_t>(treated.rows());
  rep.n_comparison = static_cast<std::size_t>(comparison.rows());
  const double wsum = weights.sum();
  for (Eigen::Index c = 0; c < treated.cols(); ++c) {
    CovariateBalance b;
    b.name = names.at(static_cast<std::size_t>(c));
    b.treated_mean = treated.col(c).mean();
    b.treated_sd = sample_sd(treated.col(c));
    b.comparison_mean = comparison.rows() ? comparison.col(c).mean() : NAN;
    b.weighted_mean = wsum > 0 ? weights.dot(comparison.col(c)) / wsum : NAN;
    double sd = b.treated_sd > 0 ? b.treated_sd : sample_sd(comparison.col(c));
    auto smd = [&](double other) {
      const double diff = b.treated_mean - other;
      if (sd > 0) return diff / sd;
      return std::abs(diff) <= 1e-12 * std::max(1.0, std::abs(b.treated_mean))
                 ? 0.0
                 : std::copysign(std::numeric_limits<double>::infinity(), diff);
    };
    b.smd_before = smd(b.comparison_mean);
    b.smd_after = smd(b.weighted_mean);
    rep.max_abs_smd_after = std::max(rep.max_abs_smd_after, std::abs(b.smd_after));
    rep.covariates.push_back(std::move(b));
  }
  if (weights.size())
    rep.share_above_001 = static_cast<double>((weights.array() > 0.01).count()) /
                          static_cast<double>(weights.size());
  rep.histogram_edges = {0.0, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0,
                         std::numeric_limits<double>::infinity()};
  rep.histogram_counts.assign(rep.histogram_edges.size() - 1, 0);
  for (Eigen::Index j = 0; j < weights.size(); ++j) {
    const auto it = std::upper_bound(rep.histogram_edges.begin(), rep.histogram_edges.end(),
                                     weights(j));
    const auto bin = static_cast<std::size_t>(it - rep.histogram_edges.begin()) - 1;
    ++rep.histogram_counts[std::min(bin, rep.histogram_counts.size() - 1)];
  }
  return rep;
}

std::pair<WeightSolution, BalanceReport> balance_stratum(const StratumData& d,
                                                         const ConstraintSpec& spec) {
  if (d.w < 4 || d.w > 36) throw ValidationError("stratum must lie in [4, 36]");
  if (d.treated.rows() == 0) throw ValidationError("no treated patients in stratum");
  if (d.comparison.rows() == 0)
    throw CommonSupportError(d.w, "no common support for stratum " + std::to_string(d.w));
  const ConstraintSet set = build_constraints(d.treated, d.names, spec, &d.comparison);
  const Eigen::MatrixXd features = set.evaluate(d.comparison);
  std::vector<std::string> fnames;
  for (const auto& f : set.features) fnames.push_back(f.name);
  DualOptions opt;
  opt.tol = spec.tolerance;
  opt.max_iter = spec.max_iter;
  opt.w_total = static_cast<double>(d.treated.rows());
  opt.stratum = d.w;
  WeightSolution sol = solve_dual(features, set.targets,
                                  Eigen::VectorXd::Ones(d.comparison.rows()), opt, fnames);
  sol.warnings.insert(sol.warnings.begin(), set.warnings.begin(), set.warnings.end());
  BalanceReport rep = balance_report(d.w, d.treated, d.comparison, d.names, sol.weights);
  return {std::move(sol), std::move(rep)};
}

BalanceAll balance_all(const std::vector<StratumData>& strata, const ConstraintSpec& spec,
                       int workers) {
  const std::size_t n = strata.size();
  std::vector<std::optional<StratumResult>> results(n);
  std::vector<std::string> failure(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      const auto& d = strata[i];
      if (d.treated.rows() == 0) continue;
      try {
        auto [sol, rep] = balance_stratum(d, spec);
        results[i] = StratumResult{std::move(sol), std::move(rep)};
      } catch (const CommonSupportError& e) {
        failure[i] = e.what();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int threads = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (threads == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }

  BalanceAll out;
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    const int w = strata[i].w;
    if (strata[i].treated.rows() == 0) {
      out.log.push_back("stratum " + std::to_string(w) + " skipped: no treated patients");
    } else if (!failure[i].empty()) {
      out.failures.push_back({w, failure[i]});
      out.log.push_back("stratum " + std::to_string(w) + ": " + failure[i]);
    } else {
      for (const auto& msg : results[i]->solution.warnings)
        out.log.push_back("stratum " + std::to_string(w) + ": " + msg);
      out.strata.emplace(w, std::move(*results[i]));
    }
  }
  return out;
}

}  // namespace histctl
