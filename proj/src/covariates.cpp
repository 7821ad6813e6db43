#include "histctl/covariates.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "histctl/errors.hpp"
#include "histctl/table.hpp"

namespace histctl {

// ------------------------------------------------------------ Elixhauser

std::string_view to_string(ElixCategory c) {
  switch (c) {
    case ElixCategory::none: return "0";
    case ElixCategory::one_to_four: return "1-4";
    case ElixCategory::five_plus: return ">=5";
  }
  return "";
}

ElixCategory elix_category(int group_count) {
  if (group_count <= 0) return ElixCategory::none;
  return group_count >= 5 ? ElixCategory::five_plus : ElixCategory::one_to_four;
}

ElixhauserMap ElixhauserMap::parse(std::string_view csv_text, std::string version) {
  ElixhauserMap map;
  map.version_ = std::move(version);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : csv_text) h = (h ^ c) * 0x100000001b3ULL;
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  map.checksum_ = hex;

  std::istringstream in{std::string(csv_text)};
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto cells = csv_split(line);
    if (cells.size() != 4) throw ParseError("Elixhauser table: malformed line '" + line + "'");
    const int id = std::stoi(cells[0]);
    if (id < 1 || id > 32) throw ParseError("Elixhauser table: group id out of range");
    if (static_cast<int>(map.names_.size()) < id) map.names_.resize(id);
    map.names_[id - 1] = cells[1];
    map.prefixes_[cells[3]] |= 1u << (id - 1);
  }
  return map;
}

const ElixhauserMap& ElixhauserMap::bundled() {
  static const ElixhauserMap map = parse(bundled_elixhauser_csv(), "elixhauser_icd10_v1");
  return map;
}

std::uint32_t ElixhauserMap::groups_of(std::string_view code) const {
  std::uint32_t mask = 0;
  for (std::size_t len = 3; len <= code.size(); ++len) {
    auto it = prefixes_.find(std::string(code.substr(0, len)));
    if (it != prefixes_.end()) mask |= it->second;
  }
  return mask;
}

ElixhauserResult elixhauser(std::span<const std::string> codes, const ElixhauserMap& map) {
  std::uint32_t mask = 0;
  for (const auto& c : codes) mask |= map.groups_of(c);
  const int n = std::popcount(mask);
  return {n, elix_category(n)};
}

std::uint32_t elixhauser_groups(std::span<const InpatientVisit> visits, Date from, Date to,
                                const ElixhauserMap& map) {
  std::uint32_t mask = 0;
  for (const auto& v : visits) {
    if (v.admission < from) continue;
    if (v.admission >= to) break;
    for (const auto& c : v.icd10) mask |= map.groups_of(c);
  }
  return mask;
}

// ------------------------------------------------------------ visit windows

VisitWindows visit_windows(std::span<const InpatientVisit> visits, Date dx) {
  VisitWindows w;
  for (const auto& v : visits) {
    const int before = dx - v.admission;  // days before diagnosis
    if (before < 0) break;
    if (before < 1 * kDaysPerMonth) ++w.within_1m;
    else if (before < 6 * kDaysPerMonth) ++w.m1_to_6;
    else if (before < 12 * kDaysPerMonth) ++w.m6_to_12;
    if (before >= kDaysPerMonth && before < 60 * kDaysPerMonth) ++w.m1_to_60;
  }
  return w;
}

// ------------------------------------------------------------ ADT

std::string_view to_string(AdtStatus s) {
  switch (s) {
    case AdtStatus::bicalutamide_only: return "bicalutamide_only";
    case AdtStatus::bica_plus_gnrh: return "bica_plus_gnrh";
    case AdtStatus::neither: return "neither";
  }
  return "";
}

bool is_gnrh_code(std::string_view atc) {
  return std::find(kGnrhCodes.begin(), kGnrhCodes.end(), atc) != kGnrhCodes.end();
}

bool is_adt_code(std::string_view atc) { return atc == kBicalutamide || is_gnrh_code(atc); }

double ddd_from_daily_dose(double mg_per_day, double days, double ddd_mg) {
  return mg_per_day * days / ddd_mg;
}

namespace {
void check_month(int t) {
  if (t < 1 || t > 36) throw ValidationError("month t must lie in [1, 36], got " + std::to_string(t));
}
}  // namespace

double adt_cumulative_ddd(std::span<const Prescription> rx, Date dx, int t) {
  check_month(t);
  const Date end = add_months(dx, t);
  double total = 0.0;
  for (const auto& r : rx) {
    if (r.dispensed >= end) break;
    if (r.dispensed >= dx && is_adt_code(r.atc)) total += r.ddd;
  }
  return total;
}

AdtStatus adt_status(std::span<const Prescription> rx, Date dx, int t) {
  check_month(t);
  const Date end = add_months(dx, t);
  bool bica = false, gnrh = false;
  for (const auto& r : rx) {
    if (r.dispensed >= end) break;
    bica |= r.atc == kBicalutamide;
    gnrh |= is_gnrh_code(r.atc);
  }
  if (!bica) return AdtStatus::neither;
  return gnrh ? AdtStatus::bica_plus_gnrh : AdtStatus::bicalutamide_only;
}

// ------------------------------------------------------------ trajectories

namespace {

bool has_prefix(const std::vector<std::string>& codes, std::string_view prefix) {
  for (const auto& c : codes)
    if (c.compare(0, prefix.size(), prefix) == 0) return true;
  return false;
}

constexpr int kNever = 1 << 30;

}  // namespace

std::vector<TrajectoryVector> compute_trajectory(const PatientRecord& p, int months) {
  if (months < 0 || months > 36) throw ValidationError("trajectory length must lie in [0, 36]");
  const Date dx = p.diagnosis;
  int visceral_onset = kNever, skeletal_onset = kNever, any_onset = kNever;
  for (const auto& v : p.visits) {
    const int m = std::max(0, month_index(dx, v.admission));
    if (has_prefix(v.icd10, "C78")) visceral_onset = std::min(visceral_onset, m);
    if (has_prefix(v.icd10, "C79")) skeletal_onset = std::min(skeletal_onset, m);
    if (has_prefix(v.icd10, "C77") || has_prefix(v.icd10, "C78") || has_prefix(v.icd10, "C79"))
      any_onset = std::min(any_onset, m);
  }

  std::vector<TrajectoryVector> out(months);
  const auto& map = ElixhauserMap::bundled();
  for (int t = 0; t < months; ++t) {
    auto& h = out[t];
    const Date end = add_months(dx, t + 1);
    h.month = t;
    h.elix_score = std::popcount(elixhauser_groups(p.visits, add_months(end, -12), end, map));
    for (const auto& v : p.visits) {
      if (v.admission >= end) break;
      if (v.admission < dx) continue;
      ++h.cum_visits;
      h.sum_inpatient_days += std::max(1, v.discharge - v.admission);
    }
    h.months_visceral_mets = t >= visceral_onset ? t - visceral_onset + 1 : 0;
    h.months_skeletal_mets = t >= skeletal_onset ? t - skeletal_onset + 1 : 0;
    h.any_mets = t >= any_onset;
    h.cum_adt_ddd = adt_cumulative_ddd(p.prescriptions, dx, t + 1);
    h.adt_status = adt_status(p.prescriptions, dx, t + 1);
  }
  return out;
}

std::vector<TrajectoryVector> build_trajectory(const PatientRecord& p, int w) {
  if (w < 1 || w > 36) throw ValidationError("stratum w must lie in [1, 36]");
  if (!p.alive_before(add_months(p.diagnosis, w)))
    throw ValidationError("trajectory truncated by death");
  return compute_trajectory(p, w);
}

// ------------------------------------------------------------ pre-diagnosis block

PreDiagnosisCovariates prediagnosis_covariates(const PatientRecord& p, Education education,
                                               const std::array<double, 5>& factor_scores) {
  PreDiagnosisCovariates x;
  x.age_at_diagnosis = p.age_at_diagnosis();
  x.visits = visit_windows(p.visits, p.diagnosis);
  const auto& map = ElixhauserMap::bundled();
  // Trailing 12-month windows ending at (and including) diagnosis day and one year earlier.
  const Date dx_end = p.diagnosis + 1;
  x.elix_at_dx = elix_category(
      std::popcount(elixhauser_groups(p.visits, add_months(dx_end, -12), dx_end, map)));
  x.elix_12m = elix_category(std::popcount(
      elixhauser_groups(p.visits, add_months(dx_end, -24), add_months(dx_end, -12), map)));
  x.edu_below = education == Education::below_secondary;
  x.edu_secondary = education == Education::secondary;
  x.partnered = p.demographics.marital == Marital::partnered;
  x.nordic_born = p.demographics.nordic_born;
  x.factor_scores = factor_scores;
  return x;
}

// ------------------------------------------------------------ socioeconomic panel

SocioPanel fill_from_other_years(const SocioPanel& panel) {
  SocioPanel out = panel;
  for (std::size_t b = 0; b < SocioPanel::kBaseCount; ++b) {
    double sum = 0.0;
    int n = 0;
    for (int lag = 0; lag < 3; ++lag) {
      const double v = panel.values[SocioPanel::index(b, lag)];
      if (!std::isnan(v)) {
        sum += v;
        ++n;
      }
    }
    if (n == 0 || n == 3) continue;
    for (int lag = 0; lag < 3; ++lag) {
      double& v = out.values[SocioPanel::index(b, lag)];
      if (std::isnan(v)) v = sum / n;
    }
  }
  return out;
}

// ------------------------------------------------------------ education imputation

EducationFeatures education_features(const PatientRecord& p) {
  const SocioPanel ses = fill_from_other_years(p.ses);
  const double income = ses.values[SocioPanel::index(SocioPanel::kDispInk, 0)];
  const double pension = ses.values[SocioPanel::index(SocioPanel::kAldPens, 0)] +
                         ses.values[SocioPanel::index(SocioPanel::kSumTjp, 0)] +
                         ses.values[SocioPanel::index(SocioPanel::kPrivPens, 0)];
  return {income, pension, static_cast<double>(p.age_at_diagnosis()),
          p.demographics.nordic_born ? 1.0 : 0.0};
}

Education impute_education(const EducationFeatures& target, std::span<const EducationDonor> donors,
                           int k, ModeTieBreak tie) {
  if (k < 1) throw ValidationError("k must be positive");
  if (donors.size() < static_cast<std::size_t>(k)) throw ValidationError("insufficient donors");

  constexpr std::size_t kF = std::tuple_size_v<EducationFeatures>;
  std::array<double, kF> mean{}, sd{};
  for (std::size_t f = 0; f < kF; ++f) {
    double s = 0.0, ss = 0.0;
    int n = 0;
    for (const auto& d : donors) {
      const double v = d.features[f];
      if (std::isnan(v)) continue;
      s += v;
      ++n;
    }
    mean[f] = n ? s / n : 0.0;
    for (const auto& d : donors) {
      const double v = d.features[f];
      if (!std::isnan(v)) ss += (v - mean[f]) * (v - mean[f]);
    }
    sd[f] = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
  }
  auto z = [&](double v, std::size_t f) {
    if (std::isnan(v) || sd[f] == 0.0) return 0.0;  // NaN sits at the pool mean
    return (v - mean[f]) / sd[f];
  };

  std::vector<std::pair<double, std::size_t>> dist(donors.size());
  for (std::size_t j = 0; j < donors.size(); ++j) {
    double d2 = 0.0;
    for (std::size_t f = 0; f < kF; ++f) {
      const double diff = z(target[f], f) - z(donors[j].features[f], f);
      d2 += diff * diff;
    }
    dist[j] = {d2, j};
  }
  std::partial_sort(dist.begin(), dist.begin() + k, dist.end());

  std::array<int, 3> votes{};
  for (int i = 0; i < k; ++i) ++votes[static_cast<int>(donors[dist[i].second].level)];
  const int best = *std::max_element(votes.begin(), votes.end());
  if (tie == ModeTieBreak::lower_level) {
    for (int l = 0; l < 3; ++l)
      if (votes[l] == best) return static_cast<Education>(l);
  } else {
    for (int l = 2; l >= 0; --l)
      if (votes[l] == best) return static_cast<Education>(l);
  }
  return Education::secondary;
}

}  // namespace histctl
