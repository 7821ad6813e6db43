#include "histctl/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <ostream>

#include <json.hpp>

#include "histctl/covariates.hpp"
#include "histctl/errors.hpp"
#include "histctl/rng.hpp"
#include "histctl/table.hpp"

namespace histctl {

namespace {

constexpr int kTrajectoryMonths = 36;
constexpr int kNamMonths = 48;     // NAM hazard runs past the 36-month cutoff
constexpr int kPreDxMonths = 60;

enum Era : std::uint64_t { kComparisonEra = 1, kTreatedEra = 2 };
enum Purpose : std::uint64_t { kBaseline = 0, kLatent = 1, kEvents = 2, kPlacebo = 3, kId = 4 };

std::uint64_t stream_seed(std::uint64_t master, Era era, Purpose purpose, std::uint64_t index) {
  return derive_seed(master, static_cast<std::uint64_t>(era) * 16 + purpose, index);
}

double cll(double eta) {
  if (eta > 5.0) return 1.0;
  return -std::expm1(-std::exp(eta));
}

double clamp01(double p) { return std::clamp(p, 0.0, 1.0); }

// Representative ICD-10 code per non-cancer comorbidity group.
constexpr std::array<const char*, 28> kComorbidityCodes = {
    "I500", "I480", "I350", "I269", "I702", "I10",  "I110", "G819", "G20",  "J449",
    "E119", "E112", "E039", "N184", "K703", "K259", "B20",  "M069", "D689", "E669",
    "E43",  "E871", "D509", "D531", "F102", "F112", "F200", "F329"};
// Codes outside every comorbidity group, used for unrelated admissions.
constexpr std::array<const char*, 8> kNeutralCodes = {"R69",  "Z039", "R104", "M545",
                                                      "J189", "K590", "R072", "S525"};
constexpr std::array<const char*, 4> kPainAtc = {"N02AA01", "N02AA05", "N02AX02", "N02BE01"};
constexpr std::array<const char*, 10> kSreIcd = {"M485", "M495", "M844", "M907", "G550",
                                                 "G834", "G952", "G958", "G959", "G992"};
constexpr std::array<const char*, 5> kGnrhAtc = {"L02AE02", "L02AE03", "L02AE01", "L02AE04",
                                                 "L02BX02"};

// Loadings of the five socioeconomic factors on the 14 base measures at each
// lag (see SocioPanel for the order).
double ses_loading(std::size_t base, int lag, int factor) {
  const bool pension = base == 11 || base == 12 || base == 13;
  const bool assistance = base == 9 || base == 10;
  const bool early_retirement = base == 7 || base == 8;
  const bool income = base == 2 || base == 3 || base == 4;
  switch (factor) {
    case 0:
      if (pension) return 0.85;
      if (base == 0) return -0.35;
      return 0.0;
    case 1:
      return assistance ? 0.85 : 0.0;
    case 2:
      if (early_retirement) return 0.8;
      if (base == 5) return 0.3;
      return 0.0;
    case 3:
      if (income) return lag == 1 ? 0.3 : 0.85;
      if (base == 1 && lag != 1) return 0.4;
      return 0.0;
    case 4:
      if (income && lag == 1) return 0.85;
      if (base == 1 && lag == 1) return 0.4;
      return 0.0;
    default:
      return 0.0;
  }
}

constexpr std::array<double, 14> kSesMean = {250e3, 260e3, 20e3, 210e3, 300e3, 8e3,  4e3,
                                             10e3,  12e3,  3e3,  5e3,   120e3, 60e3, 30e3};
constexpr std::array<double, 14> kSesSd = {80e3, 70e3, 10e3, 50e3, 70e3, 3e3,  2e3,
                                           4e3,  5e3,  1.5e3, 2e3, 40e3, 25e3, 15e3};

struct Baseline {
  Date diagnosis;
  double age = 70.0;
  double age_z = 0.0;
  double comorbidity = 0.0;  // latent h
  std::vector<std::pair<int, int>> comorbidities;  // (code index, onset month rel. dx)
};

struct Latent {
  double s0 = 0.0;
  std::vector<float> severity;
  std::vector<double> u_death, u_pain, u_sre;
  std::vector<int> death_offset, pain_offset, sre_offset;
  std::array<double, kNamMonths> u_nam{};
  int nam_offset = 1;
  int nam_drug = 0;
  // Onset months of the progression markers, -1 when not reached.
  int node = -1, visceral = -1, skeletal = -1, bicalutamide = -1, gnrh = -1;
};

struct Draft {
  Era era;
  std::uint64_t index;
  Baseline base;
  Latent latent;
  PatientTruth truth;
};

Baseline draw_baseline(Rng& rng, const ScenarioConfig& cfg, Era era) {
  Baseline b;
  const Date from = era == kTreatedEra ? cfg.windows.treated_from : cfg.windows.comparison_from;
  const Date to = era == kTreatedEra ? cfg.windows.treated_to : cfg.windows.comparison_to;
  b.diagnosis = from + rng.uniform_int(0, std::max(0, to - from));
  b.age = std::clamp(rng.normal(70.0, 8.0), 50.0, 92.0);
  b.age_z = (b.age - 70.0) / 8.0;
  b.comorbidity = 0.3 * b.age_z + std::sqrt(1.0 - 0.09) * rng.normal();
  const int n = std::min(8, rng.poisson(std::exp(-0.4 + 0.6 * b.comorbidity)));
  for (int i = 0; i < n; ++i) {
    const int code = rng.uniform_int(0, static_cast<int>(kComorbidityCodes.size()) - 1);
    const int onset = rng.uniform_int(-120, 72);
    b.comorbidities.emplace_back(code, onset);
  }
  return b;
}

Latent draw_latent(Rng& rng, const ScenarioConfig& cfg, int horizon) {
  Latent l;
  const auto& pp = cfg.progression;
  l.s0 = rng.normal(pp.initial_mean, pp.initial_sd);
  const double drift = rng.normal(pp.drift_mean, pp.drift_sd);
  l.severity.resize(horizon);
  double s = l.s0;
  for (int u = 0; u < horizon; ++u) {
    l.severity[u] = static_cast<float>(s);
    s += drift + pp.volatility * rng.normal();
  }
  l.u_death.resize(horizon);
  l.u_pain.resize(horizon);
  l.u_sre.resize(horizon);
  l.death_offset.resize(horizon);
  l.pain_offset.resize(horizon);
  l.sre_offset.resize(horizon);
  for (int u = 0; u < horizon; ++u) {
    l.u_death[u] = rng.uniform();
    l.u_pain[u] = rng.uniform();
    l.u_sre[u] = rng.uniform();
    l.death_offset[u] = rng.uniform_int(0, kDaysPerMonth - 1);
    l.pain_offset[u] = rng.uniform_int(0, kDaysPerMonth - 1);
    l.sre_offset[u] = rng.uniform_int(0, kDaysPerMonth - 1);
  }
  for (auto& u : l.u_nam) u = rng.uniform();
  l.nam_offset = rng.uniform_int(1, kDaysPerMonth);
  l.nam_drug = rng.uniform_int(0, 1);

  const auto& mk = cfg.markers;
  auto onset = [&](int& month, bool eligible, int u, double eta) {
    const double draw = rng.uniform();  // drawn every month to keep streams aligned
    if (month < 0 && eligible && draw < cll(eta)) month = u;
  };
  for (int u = 0; u < horizon; ++u) {
    const double sv = l.severity[u];
    onset(l.node, true, u, mk.node_base + mk.node_severity * sv);
    onset(l.visceral, true, u, mk.visceral_base + mk.visceral_severity * sv);
    onset(l.skeletal, true, u, mk.skeletal_base + mk.skeletal_severity * sv);
    onset(l.bicalutamide, true, u, mk.bicalutamide_base + mk.bicalutamide_severity * sv);
    const bool on_bica = l.bicalutamide >= 0 && l.bicalutamide < u;
    onset(l.gnrh, true, u, on_bica ? mk.gnrh_base + mk.gnrh_severity * sv : -7.0 + 0.5 * sv);
  }
  return l;
}

double linear(const HazardParams& h, double s, const Baseline& b) {
  return h.base + h.severity * s + h.age * b.age_z + h.comorbidity * b.comorbidity;
}

// Monthly event probability, shifted from month `from` on when `shifted`.
double event_prob(const HazardParams& h, double shift, EffectScale scale, double s,
                  const Baseline& b, bool shifted) {
  const double eta = linear(h, s, b);
  if (!shifted || shift == 0.0) return cll(eta);
  if (scale == EffectScale::log_hazard) return cll(eta + shift);
  return clamp01(cll(eta) + shift);
}

int first_death(const Latent& l, const ScenarioConfig& cfg, const Baseline& b, int treat_from,
                double shift) {
  const int horizon = static_cast<int>(l.severity.size());
  for (int u = 0; u < horizon; ++u) {
    const double p = event_prob(cfg.outcome_model.death, shift, cfg.true_effects.scale,
                                l.severity[u], b, treat_from >= 0 && u >= treat_from);
    if (l.u_death[u] < p) return u;
  }
  return -1;
}

void fill_morbidity(std::vector<std::uint8_t>& out, const std::vector<double>& uniforms,
                    const HazardParams& h, double shift, const ScenarioConfig& cfg,
                    const Latent& l, const Baseline& b, int treat_from) {
  const int horizon = static_cast<int>(l.severity.size());
  out.assign(horizon, 0);
  for (int u = 0; u < horizon; ++u) {
    const double p = event_prob(h, shift, cfg.true_effects.scale, l.severity[u], b,
                                treat_from >= 0 && u >= treat_from);
    out[u] = uniforms[u] < p ? 1 : 0;
  }
}

// Determines treatment and potential outcomes from the latent draws alone.
void resolve_truth(Draft& d, const ScenarioConfig& cfg, int horizon) {
  const Latent& l = d.latent;
  const Baseline& b = d.base;
  PatientTruth& t = d.truth;
  t.treated_era = d.era == kTreatedEra;
  t.severity_at_diagnosis = l.s0;
  t.severity = l.severity;
  t.death_month_y0 = first_death(l, cfg, b, -1, 0.0);
  fill_morbidity(t.pain_y0, l.u_pain, cfg.outcome_model.pain, 0.0, cfg, l, b, -1);
  fill_morbidity(t.sre_y0, l.u_sre, cfg.outcome_model.sre, 0.0, cfg, l, b, -1);
  if (!t.treated_era) return;

  const auto& a = cfg.assignment;
  for (int u = 0; u < kNamMonths && u < horizon; ++u) {
    if (t.death_month_y0 >= 0 && t.death_month_y0 <= u) break;
    const double skeletal = l.skeletal >= 0 && l.skeletal <= u ? 1.0 : 0.0;
    const double gnrh = l.gnrh >= 0 && l.gnrh <= u ? 1.0 : 0.0;
    const double eta = a.base + cfg.confounding_strength *
                                    (a.severity * l.severity[u] + a.skeletal * skeletal +
                                     a.gnrh * gnrh + a.age * b.age_z +
                                     a.comorbidity * b.comorbidity);
    if (l.u_nam[u] < cll(eta)) {
      t.dtp = u + 1;
      break;
    }
  }
  if (!t.dtp) return;
  const int w = *t.dtp;
  const auto& e = cfg.true_effects;
  const double death_shift = e.death + e.death_dtp_slope * (18.0 - w) / 18.0;
  t.death_month_y1 = first_death(l, cfg, b, w, death_shift);
  fill_morbidity(t.pain_y1, l.u_pain, cfg.outcome_model.pain, e.pain, cfg, l, b, w);
  fill_morbidity(t.sre_y1, l.u_sre, cfg.outcome_model.sre, e.sre, cfg, l, b, w);
}

std::string patient_id(std::uint64_t master, Era era, std::uint64_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "P%012llx",
                static_cast<unsigned long long>(stream_seed(master, era, kId, index) &
                                                0xffffffffffffULL));
  return buf;
}

void add_ses(PatientRecord& p, Rng& rng, const Baseline& b, const ScenarioConfig& cfg) {
  std::array<double, 5> f;
  for (auto& x : f) x = rng.normal();
  f[0] = 0.5 * b.age_z + std::sqrt(0.75) * f[0];
  for (int lag = 0; lag < 3; ++lag) {
    for (std::size_t base = 0; base < SocioPanel::kBaseCount; ++base) {
      double common = 0.0, communality = 0.0;
      for (int k = 0; k < 5; ++k) {
        const double l = ses_loading(base, lag, k);
        common += l * f[k];
        communality += l * l;
      }
      // f[0] is correlated with age but still unit variance.
      const double x = common + std::sqrt(1.0 - communality) * rng.normal();
      const double v = kSesMean[base] + kSesSd[base] * x;
      const bool missing = rng.uniform() < 0.01;
      p.ses.values[SocioPanel::index(base, lag)] =
          missing ? std::numeric_limits<double>::quiet_NaN() : v;
    }
  }
  // Education tracks the income factor; missing at random given income.
  const double z = 0.7 * f[3] - 0.2 * b.age_z + 0.7 * rng.normal();
  p.demographics.education = z < -0.35  ? Education::below_secondary
                             : z > 0.7  ? Education::above_secondary
                                        : Education::secondary;
  const double income_z = (p.ses.values[SocioPanel::kDispInk] - kSesMean[3]) / kSesSd[3];
  const double x = std::isnan(income_z) ? 0.0 : income_z;
  const double p_missing = clamp01(cfg.education_missing_rate * std::exp(-0.8 * x - 0.32));
  if (rng.uniform() < p_missing) p.demographics.education.reset();
}

std::vector<std::string> visit_codes(Rng& rng, const Baseline& b, int month,
                                     std::initializer_list<const char*> fixed) {
  std::vector<std::string> codes;
  for (const char* c : fixed) codes.emplace_back(c);
  for (const auto& [code, onset] : b.comorbidities)
    if (onset <= month && rng.uniform() < 0.6) codes.emplace_back(kComorbidityCodes[code]);
  if (codes.empty())
    codes.emplace_back(kNeutralCodes[rng.uniform_int(0, kNeutralCodes.size() - 1)]);
  std::sort(codes.begin(), codes.end());
  codes.erase(std::unique(codes.begin(), codes.end()), codes.end());
  return codes;
}

PatientRecord build_record(const Draft& d, const ScenarioConfig& cfg, int horizon) {
  const Baseline& b = d.base;
  const Latent& l = d.latent;
  const PatientTruth& t = d.truth;
  Rng rng(stream_seed(cfg.seed, d.era, kEvents, d.index));

  PatientRecord p;
  p.id = t.patient_id;
  p.diagnosis = b.diagnosis;
  p.demographics.birth_year = b.diagnosis.year() - static_cast<int>(std::lround(b.age));
  p.demographics.marital = rng.uniform() < 0.7 ? Marital::partnered : Marital::single;
  p.demographics.nordic_born = rng.uniform() < 0.88;
  add_ses(p, rng, b, cfg);

  const Date dx = b.diagnosis;
  const bool treated = t.dtp.has_value();
  const int death_month = treated ? t.death_month_y1 : t.death_month_y0;
  std::optional<Date> death;
  if (death_month >= 0) {
    death = add_months(dx, death_month) + l.death_offset[death_month];
    p.death = death;
  }

  // Pre-diagnosis admissions: rates rise towards diagnosis, more so for
  // patients with severe disease at diagnosis.
  for (int j = kPreDxMonths; j >= 1; --j) {
    const double base_rate = j == 1 ? 0.47 : j <= 6 ? 0.28 : j <= 12 ? 0.14 : 0.10;
    const double lift = j <= 12 ? std::exp(0.3 * l.s0 + 0.105) : 1.0;
    const int n = rng.poisson(base_rate * lift * std::exp(0.35 * b.comorbidity - 0.06));
    for (int k = 0; k < n; ++k) {
      const Date adm = dx - (kDaysPerMonth * (j - 1) + rng.uniform_int(0, kDaysPerMonth - 1));
      InpatientVisit v{adm, adm + rng.poisson(2.0), visit_codes(rng, b, -j, {})};
      p.visits.push_back(std::move(v));
    }
  }
  if (rng.uniform() < 0.5) {
    const Date adm = dx - rng.uniform_int(0, 10);
    p.visits.push_back({adm, adm + 1 + rng.poisson(2.0), visit_codes(rng, b, 0, {"C619"})});
  }

  int gnrh_code = rng.uniform_int(0, kGnrhAtc.size() - 1);
  const auto& mk = cfg.markers;
  const int last = death_month >= 0 ? std::min(death_month, horizon - 1) : horizon - 1;
  for (int u = 0; u <= last; ++u) {
    const double s = l.severity[u];
    const int cap = u == death_month ? l.death_offset[u] : kDaysPerMonth - 1;
    const Date start = add_months(dx, u);
    auto day = [&](int offset) { return start + std::min(offset, cap); };
    auto clip = [&](Date dis) { return death && dis > *death ? *death : dis; };
    auto los = [&] { return 1 + rng.poisson(std::exp(0.7 + 0.2 * std::max(s, 0.0))); };
    const bool node = l.node >= 0 && l.node <= u;
    const bool visceral = l.visceral >= 0 && l.visceral <= u;
    const bool skeletal = l.skeletal >= 0 && l.skeletal <= u;

    // Metastasis onsets force an admission carrying the new code.
    auto onset_visit = [&](bool fire, const char* code) {
      if (!fire) return;
      const Date adm = day(rng.uniform_int(0, kDaysPerMonth - 1));
      auto codes = visit_codes(rng, b, u, {"C619", code});
      p.visits.push_back({adm, clip(adm + los()), std::move(codes)});
    };
    onset_visit(l.node == u, "C778");
    onset_visit(l.visceral == u, rng.uniform() < 0.5 ? "C787" : "C780");
    onset_visit(l.skeletal == u, "C795");

    const int n = rng.poisson(
        std::exp(mk.visits_base + mk.visits_severity * s + 0.25 * b.comorbidity));
    for (int k = 0; k < n; ++k) {
      const Date adm = day(rng.uniform_int(0, kDaysPerMonth - 1));
      auto codes = visit_codes(rng, b, u, {"C619"});
      if (node && rng.uniform() < 0.7) codes.emplace_back("C778");
      if (visceral && rng.uniform() < 0.7) codes.emplace_back("C787");
      if (skeletal && rng.uniform() < 0.7) codes.emplace_back("C795");
      p.visits.push_back({adm, clip(adm + los()), std::move(codes)});
    }

    // Androgen deprivation: monthly bicalutamide, three-monthly GnRH depots.
    if (l.bicalutamide >= 0 && l.bicalutamide <= u)
      p.prescriptions.push_back({day(rng.uniform_int(0, kDaysPerMonth - 1)),
                                 std::string(kBicalutamide), 90.0});
    if (l.gnrh >= 0 && l.gnrh <= u && (u - l.gnrh) % 3 == 0)
      p.prescriptions.push_back(
          {day(rng.uniform_int(0, kDaysPerMonth - 1)), kGnrhAtc[gnrh_code], 90.0});

    if (treated && u >= *t.dtp - 1) {
      const Date when = u == *t.dtp - 1 ? start + l.nam_offset
                                        : day(rng.uniform_int(0, kDaysPerMonth - 1));
      p.prescriptions.push_back({when, cfg.windows.nam_atc.at(l.nam_drug % cfg.windows.nam_atc.size()),
                                 30.0});
    }

    const auto& pain = treated ? t.pain_y1 : t.pain_y0;
    const auto& sre = treated ? t.sre_y1 : t.sre_y0;
    if (pain[u]) {
      p.prescriptions.push_back({day(l.pain_offset[u]),
                                 kPainAtc[rng.uniform_int(0, kPainAtc.size() - 1)], 30.0});
    }
    if (sre[u]) {
      const Date adm = day(l.sre_offset[u]);
      const char* code = kSreIcd[rng.uniform_int(0, kSreIcd.size() - 1)];
      p.visits.push_back({adm, clip(adm + 2 + rng.poisson(5.0)),
                          visit_codes(rng, b, u, {"C619", code})});
    }
  }
  return p;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (n_treated_target <= 0) throw ConfigError("n_treated_target must be positive");
  if (n_comparison_target <= 0) throw ConfigError("n_comparison_target must be positive");
  if (confounding_strength < 0.0 || !std::isfinite(confounding_strength))
    throw ConfigError("confounding_strength must be a finite value >= 0");
  if (progression.initial_sd < 0 || progression.drift_sd < 0 || progression.volatility < 0)
    throw ConfigError("progression standard deviations must be >= 0");
  if (follow_up_months < 1 || follow_up_months > 60)
    throw ConfigError("follow_up_months must lie in [1, 60]");
  if (education_missing_rate < 0.0 || education_missing_rate > 1.0)
    throw ConfigError("education_missing_rate must lie in [0, 1]");
  if (max_attempts_per_treated < 1) throw ConfigError("max_attempts_per_treated must be >= 1");
  if (windows.nam_atc.empty()) throw ConfigError("no NAM codes configured");
  for (double e : {true_effects.death, true_effects.pain, true_effects.sre,
                   true_effects.death_dtp_slope}) {
    if (!std::isfinite(e)) throw ConfigError("true effects must be finite");
    if (true_effects.scale == EffectScale::probability && std::abs(e) > 1.0)
      throw ConfigError("probability-scale effects must lie in [-1, 1]");
  }
  if (!std::isfinite(assignment.base)) throw ConfigError("assignment hazard must be finite");
  if (windows.treated_to < windows.treated_from || windows.comparison_to < windows.comparison_from)
    throw ConfigError("diagnosis window ends before it starts");
}

int PatientTruth::potential(Outcome k, bool treated_world, int w, int m) const {
  const int u = w + m - 1;
  if (treated_world && !dtp) throw ValidationError("no treated potential outcome for " + patient_id);
  if (u < 0 || u >= static_cast<int>(severity.size()))
    throw ValidationError("outcome month beyond the simulated horizon");
  switch (k) {
    case Outcome::dead: {
      const int dm = treated_world ? death_month_y1 : death_month_y0;
      return dm >= 0 && dm <= u ? 1 : 0;
    }
    case Outcome::pain: return (treated_world ? pain_y1 : pain_y0)[u];
    case Outcome::sre: return (treated_world ? sre_y1 : sre_y0)[u];
  }
  return 0;
}

const PatientTruth* GroundTruth::find(std::string_view id) const {
  auto it = std::lower_bound(patients.begin(), patients.end(), id,
                             [](const PatientTruth& t, std::string_view v) { return t.patient_id < v; });
  return it != patients.end() && it->patient_id == id ? &*it : nullptr;
}

double GroundTruth::atet(Outcome k, int m) const {
  return atet(k, m, 1, std::numeric_limits<int>::max());
}

double GroundTruth::atet(Outcome k, int m, int dtp_lo, int dtp_hi) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& t : patients) {
    if (!t.dtp || *t.dtp < dtp_lo || *t.dtp >= dtp_hi) continue;
    sum += t.potential(k, true, *t.dtp, m) - t.potential(k, false, *t.dtp, m);
    ++n;
  }
  if (n == 0) throw ValidationError("no treated patients in the requested DTP range");
  return sum / static_cast<double>(n);
}

GeneratedData generate(const ScenarioConfig& cfg) {
  cfg.validate();
  const int horizon = kTrajectoryMonths + cfg.follow_up_months;
  const int max_dtp = cfg.windows.max_dtp;

  std::vector<Draft> drafts;
  auto make = [&](Era era, std::uint64_t index) {
    Draft d{era, index, {}, {}, {}};
    Rng base_rng(stream_seed(cfg.seed, era, kBaseline, index));
    d.base = draw_baseline(base_rng, cfg, era);
    Rng latent_rng(stream_seed(cfg.seed, era, kLatent, index));
    d.latent = draw_latent(latent_rng, cfg, horizon);
    d.truth.patient_id = patient_id(cfg.seed, era, index);
    resolve_truth(d, cfg, horizon);
    return d;
  };

  for (int i = 0; i < cfg.n_comparison_target; ++i) drafts.push_back(make(kComparisonEra, i));

  const std::uint64_t max_attempts =
      static_cast<std::uint64_t>(cfg.n_treated_target) * cfg.max_attempts_per_treated;
  int treated = 0;
  for (std::uint64_t i = 0; treated < cfg.n_treated_target; ++i) {
    if (i >= max_attempts)
      throw ConfigError("infeasible targets: only " + std::to_string(treated) + " of " +
                        std::to_string(cfg.n_treated_target) + " treated patients after " +
                        std::to_string(max_attempts) + " treated-era patients");
    Draft d = make(kTreatedEra, i);
    if (d.truth.dtp && *d.truth.dtp <= max_dtp) ++treated;
    drafts.push_back(std::move(d));
  }

  std::vector<PatientRecord> records;
  records.reserve(drafts.size());
  for (const auto& d : drafts) records.push_back(build_record(d, cfg, horizon));

  GeneratedData out;
  out.registry = Registry::from_records(std::move(records));
  out.truth.horizon_months = horizon;
  out.truth.patients.reserve(drafts.size());
  for (auto& d : drafts) out.truth.patients.push_back(std::move(d.truth));
  std::sort(out.truth.patients.begin(), out.truth.patients.end(),
            [](const PatientTruth& a, const PatientTruth& b) { return a.patient_id < b.patient_id; });
  out.cohorts = select_cohorts(out.registry, cfg.windows);
  return out;
}

std::vector<PlaceboCovariates> emit_placebo_covariates(const Registry& registry,
                                                       const GroundTruth& truth,
                                                       const ScenarioConfig& cfg) {
  std::vector<PlaceboCovariates> out;
  out.reserve(registry.size());
  const auto& pp = cfg.placebo;
  for (const auto& p : registry.patients()) {
    const PatientTruth* t = truth.find(p.id);
    if (!t) throw ValidationError("no ground truth for patient " + p.id);
    // Seeded by id and severity so identical inputs give identical draws.
    std::uint64_t h = cfg.seed ^ 0x706c616365626fULL;
    for (char c : p.id) h = splitmix64(h ^ static_cast<unsigned char>(c));
    Rng rng(splitmix64(h));
    const double s = t->severity_at_diagnosis;
    PlaceboCovariates c;
    c.patient_id = p.id;
    c.psa_level = pp.psa_base + pp.psa_severity * s + pp.psa_noise * rng.normal();
    c.gleason_score = pp.gleason_base + pp.gleason_severity * s + pp.gleason_noise * rng.normal();
    c.metastasis_at_diagnosis = rng.uniform() < clamp01(pp.mets_base + pp.mets_severity * s) ? 1 : 0;
    out.push_back(c);
  }
  return out;
}

void write_ground_truth(std::ostream& out, const GroundTruth& truth) {
  auto bits = [](const std::vector<std::uint8_t>& v) {
    std::string s(v.size(), '0');
    for (std::size_t i = 0; i < v.size(); ++i) s[i] = v[i] ? '1' : '0';
    return s;
  };
  for (const auto& t : truth.patients) {
    nlohmann::ordered_json j;
    j["patient_id"] = t.patient_id;
    j["treated_era"] = t.treated_era;
    j["dtp"] = t.dtp ? nlohmann::ordered_json(*t.dtp) : nlohmann::ordered_json(nullptr);
    j["severity_at_diagnosis"] = t.severity_at_diagnosis;
    j["severity"] = t.severity;
    j["death_month_y0"] = t.death_month_y0;
    j["pain_y0"] = bits(t.pain_y0);
    j["sre_y0"] = bits(t.sre_y0);
    if (t.dtp) {
      j["death_month_y1"] = t.death_month_y1;
      j["pain_y1"] = bits(t.pain_y1);
      j["sre_y1"] = bits(t.sre_y1);
    }
    out << j.dump() << '\n';
  }
}

void write_placebo_csv(const std::string& path, const std::vector<PlaceboCovariates>& rows,
                       const std::string& banner) {
  CsvWriter w(path, {"patient_id", "psa_level", "gleason_score", "metastasis_at_diagnosis"},
              banner);
  for (const auto& r : rows)
    w.row({r.patient_id, format_number(r.psa_level), format_number(r.gleason_score),
           format_number(r.metastasis_at_diagnosis)});
}

std::vector<PlaceboCovariates> read_placebo_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::vector<PlaceboCovariates> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      continue;
    }
    auto cells = csv_split(line);
    if (cells.size() != 4) throw ParseError("placebo row with " + std::to_string(cells.size()) + " cells");
    auto num = [](const std::string& s) {
      return s == "NA" ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
    };
    out.push_back({cells[0], num(cells[1]), num(cells[2]), num(cells[3])});
  }
  return out;
}

}  // namespace histctl
