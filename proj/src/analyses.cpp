#include <algorithm>
#include <cmath>

#include "histctl/errors.hpp"
#include "histctl/estimate.hpp"

namespace histctl {

BonferroniResult bonferroni(std::span<const double> p_values, int family_size, double overall) {
  if (family_size < 1) throw ConfigError("family size must be at least 1");
  BonferroniResult r;
  r.threshold = overall / family_size;
  for (double p : p_values) r.significant.push_back(p < r.threshold);
  return r;
}

PlaceboResult placebo_test(const std::vector<StratumWeights>& weights,
                           const std::vector<std::string>& names,
                           const std::vector<std::vector<double>>& covariates, double overall) {
  if (names.size() != covariates.size())
    throw ValidationError("placebo names do not match the covariate columns");
  PlaceboResult out;
  const double threshold = bonferroni({}, static_cast<int>(names.size()), overall).threshold;
  for (std::size_t k = 0; k < names.size(); ++k) {
    const auto& values = covariates[k];
    if (values.empty()) {
      out.warnings.push_back("placebo covariate " + names[k] + " missing; skipped");
      continue;
    }
    std::vector<WlsObservation> obs;
    std::size_t missing = 0;
    auto add = [&](std::size_t i, double weight, int w, int treated) {
      const double y = values.at(i);
      if (std::isnan(y)) {
        ++missing;
        return;
      }
      obs.push_back({y, weight, w, treated});
    };
    for (const auto& s : weights) {
      for (std::size_t i : s.treated) add(i, 1.0, s.w, 1);
      for (std::size_t j = 0; j < s.comparison.size(); ++j)
        if (s.weights[j] > 0.0) add(s.comparison[j], s.weights[j], s.w, 0);
    }
    EffectEstimate e = make_estimate(names[k], 0, fit_wls(obs), threshold, "placebo");
    if (missing)
      e.warnings.push_back(std::to_string(missing) + " rows without " + names[k] + " skipped");
    if (e.significant && !e.degenerate) out.hidden_bias = true;
    out.estimates.push_back(std::move(e));
  }
  if (out.hidden_bias)
    out.warnings.push_back("placebo test rejected: possible hidden bias from unbalanced confounders");
  return out;
}

double dtp_split(std::vector<int> dtps, double quantile) {
  if (dtps.empty()) throw EstimationError("no treated patients to split");
  if (quantile <= 0.0 || quantile >= 1.0) throw ConfigError("split quantile must lie in (0, 1)");
  std::sort(dtps.begin(), dtps.end());
  if (dtps.front() == dtps.back()) throw EstimationError("degenerate split: every DTP is equal");
  const double h = (static_cast<double>(dtps.size()) - 1.0) * quantile;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, dtps.size() - 1);
  return dtps[lo] + (h - static_cast<double>(lo)) * (dtps[hi] - dtps[lo]);
}

OutcomePanel subgroup_panel(const OutcomePanel& panel, double split, bool upper) {
  OutcomePanel out;
  out.horizons = panel.horizons;
  for (const auto& r : panel.rows)
    if ((r.w >= split) == upper) out.rows.push_back(r);
  return out;
}

SubgroupResult subgroup_analysis(const OutcomePanel& panel, const std::vector<Outcome>& outcomes,
                                 const std::vector<int>& months, double quantile,
                                 double threshold) {
  std::vector<int> dtps;
  for (const auto& r : panel.rows)
    if (r.treated) dtps.push_back(r.w);
  SubgroupResult res;
  res.split = dtp_split(dtps, quantile);
  const OutcomePanel lo = subgroup_panel(panel, res.split, false);
  const OutcomePanel hi = subgroup_panel(panel, res.split, true);
  for (Outcome o : outcomes) {
    for (int m : months) {
      if (m > panel.horizons.of(o)) continue;
      EffectEstimate a = wls_atet(lo, o, m, threshold);
      a.analysis_tag = "subgroup_lo";
      res.lower.push_back(std::move(a));
      EffectEstimate b = wls_atet(hi, o, m, threshold);
      b.analysis_tag = "subgroup_hi";
      res.upper.push_back(std::move(b));
    }
  }
  return res;
}

}  // namespace histctl
