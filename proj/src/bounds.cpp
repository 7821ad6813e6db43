#include <map>

#include "histctl/errors.hpp"
#include "histctl/estimate.hpp"

namespace histctl {

MorbidityBounds morbidity_bounds(const OutcomePanel& panel, Outcome o, int m, double threshold) {
  if (o == Outcome::dead) throw ConfigError("bounds apply to morbidity outcomes only");
  panel.check_month(o, m);
  std::vector<WlsObservation> ones, zeros, complete, dead;
  struct Cell {
    double w = 0, dead = 0, alive = 0, alive_y = 0;
  };
  std::map<std::pair<int, int>, Cell> cells;  // (stratum, arm)
  for (const auto& r : panel.rows) {
    const int y = r.series(o)[m - 1];
    const bool died = y < 0;
    dead.push_back({died ? 1.0 : 0.0, r.weight, r.w, r.treated});
    ones.push_back({died ? 1.0 : static_cast<double>(y), r.weight, r.w, r.treated});
    zeros.push_back({died ? 0.0 : static_cast<double>(y), r.weight, r.w, r.treated});
    if (!died) complete.push_back({static_cast<double>(y), r.weight, r.w, r.treated});
    auto& c = cells[{r.w, r.treated}];
    c.w += r.weight;
    if (died) {
      c.dead += r.weight;
    } else {
      c.alive += r.weight;
      c.alive_y += r.weight * y;
    }
  }
  const std::string name(to_string(o));
  MorbidityBounds b;
  const WlsFit mort = fit_wls(dead);
  b.mortality_effect = mort.beta;
  EffectEstimate imputed1 = make_estimate(name, m, fit_wls(ones), threshold, "");
  EffectEstimate imputed0 = make_estimate(name, m, fit_wls(zeros), threshold, "");
  const bool nam_deadlier = b.mortality_effect >= 0.0;
  b.lower = nam_deadlier ? imputed0 : imputed1;
  b.upper = nam_deadlier ? imputed1 : imputed0;
  b.lower.analysis_tag = "bound_lo";
  b.upper.analysis_tag = "bound_hi";
  b.complete_case = make_estimate(name, m, fit_wls(complete), threshold, "main");

  // With death shares d and alive outcome means a per stratum and arm, the
  // imputed fits differ from a complete-case contrast at the same stratum
  // weights by sums of d_t a_t - d_c a_c and d_t (1 - a_t) - d_c (1 - a_c).
  // Monotone when both sums carry the sign the labelling assumes. Stratum
  // weights are those of the fixed-effects regression, W_t W_c / (W_t + W_c).
  double lo = 0.0, hi = 0.0;
  for (const auto& [key, ct] : cells) {
    if (key.second != 1) continue;
    auto it = cells.find({key.first, 0});
    if (it == cells.end()) continue;
    const Cell& cc = it->second;
    auto share = [](const Cell& c) { return c.w > 0 ? c.dead / c.w : 0.0; };
    auto mean = [](const Cell& c) { return c.alive > 0 ? c.alive_y / c.alive : 0.0; };
    const double dt = share(ct), dc = share(cc), at = mean(ct), ac = mean(cc);
    const double omega = ct.w * cc.w / (ct.w + cc.w);
    lo += omega * (dt * at - dc * ac);
    hi += omega * (dt * (1 - at) - dc * (1 - ac));
  }
  b.monotone = nam_deadlier ? (lo >= 0 && hi >= 0) : (lo <= 0 && hi <= 0);
  return b;
}

}  // namespace histctl
