#include <algorithm>
#include <array>

#include "histctl/errors.hpp"
#include "histctl/estimate.hpp"

namespace histctl {

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::dead: return "DEAD";
    case Outcome::pain: return "PAIN";
    case Outcome::sre: return "SRE";
  }
  return "?";
}

Outcome parse_outcome(std::string_view s) {
  if (s == "DEAD") return Outcome::dead;
  if (s == "PAIN") return Outcome::pain;
  if (s == "SRE") return Outcome::sre;
  throw ConfigError("unknown outcome '" + std::string(s) + "'");
}

int OutcomeHorizons::of(Outcome o) const {
  switch (o) {
    case Outcome::dead: return dead;
    case Outcome::pain: return pain;
    case Outcome::sre: return sre;
  }
  return 0;
}

const std::vector<std::int8_t>& PanelRow::series(Outcome o) const {
  switch (o) {
    case Outcome::dead: return dead;
    case Outcome::pain: return pain;
    case Outcome::sre: return sre;
  }
  return dead;
}

void OutcomePanel::check_month(Outcome o, int m) const {
  const int h = horizons.of(o);
  if (m < 1 || m > h)
    throw EstimationError("month " + std::to_string(m) + " is outside the " +
                          std::string(to_string(o)) + " availability horizon of " +
                          std::to_string(h) + " months");
}

bool is_pain_code(std::string_view atc) {
  return atc.starts_with(kPainAtcPrefix) || atc == "N02AX02" || atc == "N02BE01";
}

bool is_sre_code(std::string_view icd) {
  static constexpr std::array<std::string_view, 10> kCodes = {
      "M485", "M495", "M844", "M907", "G550", "G834", "G952", "G958", "G959", "G992"};
  return std::any_of(kCodes.begin(), kCodes.end(),
                     [&](std::string_view c) { return icd.starts_with(c); });
}

std::vector<StratumWeights> stratum_weights(const std::vector<StratumData>& strata,
                                            const BalanceAll& balance) {
  std::vector<StratumWeights> out;
  for (const auto& d : strata) {
    auto it = balance.strata.find(d.w);
    if (it == balance.strata.end()) continue;
    StratumWeights s{d.w, d.treated_index, d.comparison_index, {}};
    const auto& w = it->second.solution.weights;
    s.weights.assign(w.data(), w.data() + w.size());
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<StratumWeights> uniform_weights(const std::vector<StratumData>& strata,
                                            const BalanceAll& balance) {
  std::vector<StratumWeights> out;
  for (const auto& d : strata) {
    if (!balance.strata.count(d.w)) continue;
    const double each = static_cast<double>(d.treated_index.size()) /
                        static_cast<double>(d.comparison_index.size());
    out.push_back({d.w, d.treated_index, d.comparison_index,
                   std::vector<double>(d.comparison_index.size(), each)});
  }
  return out;
}

namespace {

PanelRow make_row(const PatientRecord& p, std::size_t index, int treated, int w, double weight,
                  int periods) {
  PanelRow r{index, treated, w, weight, {}, {}, {}};
  const Date clock = add_months(p.diagnosis, w);
  r.dead.assign(periods, 0);
  r.pain.assign(periods, 0);
  r.sre.assign(periods, 0);
  auto period_of = [&](Date d) { return d < clock ? -1 : (d - clock) / kDaysPerMonth; };
  for (int k = 0; k < periods; ++k) {
    const Date start = add_months(clock, k);
    const Date end = add_months(clock, k + 1);
    if (p.death && *p.death < end) r.dead[k] = 1;
    if (p.death && *p.death < start) r.pain[k] = r.sre[k] = -1;
  }
  for (const auto& rx : p.prescriptions) {
    const int k = period_of(rx.dispensed);
    if (k >= 0 && k < periods && r.pain[k] == 0 && is_pain_code(rx.atc)) r.pain[k] = 1;
  }
  for (const auto& v : p.visits) {
    const int k = period_of(v.admission);
    if (k < 0 || k >= periods || r.sre[k] != 0) continue;
    if (std::any_of(v.icd10.begin(), v.icd10.end(), [](const auto& c) { return is_sre_code(c); }))
      r.sre[k] = 1;
  }
  return r;
}

}  // namespace

OutcomePanel derive_outcomes(const Registry& registry, const std::vector<StratumWeights>& weights,
                             const OutcomeHorizons& horizons) {
  OutcomePanel panel;
  panel.horizons = horizons;
  const int periods = std::max({horizons.dead, horizons.pain, horizons.sre});
  if (periods < 1) throw ConfigError("outcome horizons must be positive");
  for (const auto& s : weights) {
    if (s.weights.size() != s.comparison.size())
      throw ValidationError("comparison weights do not match stratum " + std::to_string(s.w));
    for (std::size_t i : s.treated)
      panel.rows.push_back(make_row(registry.at(i), i, 1, s.w, 1.0, periods));
    for (std::size_t k = 0; k < s.comparison.size(); ++k) {
      if (!(s.weights[k] > 0.0)) continue;
      panel.rows.push_back(
          make_row(registry.at(s.comparison[k]), s.comparison[k], 0, s.w, s.weights[k], periods));
    }
  }
  return panel;
}

}  // namespace histctl
