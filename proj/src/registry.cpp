#include "histctl/registry.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <unordered_set>

#include "histctl/errors.hpp"

namespace histctl {

namespace {

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::string strip_and_upper(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    if (c == '.' || c == ' ') continue;
    out.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  return out;
}

const std::array<std::string, SocioPanel::kSize> kSesNames = [] {
  static constexpr const char* kBase[SocioPanel::kBaseCount] = {
      "LoneInk", "InkFNetto", "KapInk", "DispInk",     "DispInkFam", "SjukRe",  "ArbLos",
      "ForTid",  "SocInk",    "SocBidrPers", "SocBidrFam", "AldPens", "SumTjp", "PrivPens"};
  std::array<std::string, SocioPanel::kSize> names;
  for (int lag = 0; lag < 3; ++lag)
    for (std::size_t b = 0; b < SocioPanel::kBaseCount; ++b)
      names[SocioPanel::index(b, lag)] =
          std::string(kBase[b]) + (lag == 0 ? "" : lag == 1 ? "_1y" : "_2y");
  return names;
}();

}  // namespace

std::string_view to_string(Marital m) { return m == Marital::partnered ? "partnered" : "single"; }

std::string_view to_string(Education e) {
  switch (e) {
    case Education::below_secondary: return "below_secondary";
    case Education::secondary: return "secondary";
    case Education::above_secondary: return "above_secondary";
  }
  return "";
}

Education parse_education(std::string_view s) {
  if (s == "below_secondary") return Education::below_secondary;
  if (s == "secondary") return Education::secondary;
  if (s == "above_secondary") return Education::above_secondary;
  throw ParseError("unknown education level '" + std::string(s) + "'");
}

SocioPanel::SocioPanel() { values.fill(std::numeric_limits<double>::quiet_NaN()); }

const std::array<std::string, SocioPanel::kSize>& SocioPanel::names() { return kSesNames; }

std::optional<std::size_t> SocioPanel::index_of(std::string_view name) {
  for (std::size_t i = 0; i < kSize; ++i)
    if (kSesNames[i] == name) return i;
  return std::nullopt;
}

bool SocioPanel::missing(std::size_t i) const { return std::isnan(values[i]); }

std::optional<std::string> normalize_icd10(std::string_view raw) {
  std::string s = strip_and_upper(raw);
  if (s.size() < 3 || s.size() > 5 || !is_upper(s[0])) return std::nullopt;
  // [A-Z][0-9]{2,3}[0-9A-Z]?
  std::size_t digits = 0;
  while (1 + digits < s.size() && digits < 3 && is_digit(s[1 + digits])) ++digits;
  if (digits < 2) return std::nullopt;
  const std::size_t rest = s.size() - 1 - digits;
  if (rest > 1) return std::nullopt;
  if (rest == 1 && !(is_digit(s.back()) || is_upper(s.back()))) return std::nullopt;
  return s;
}

std::optional<std::string> normalize_atc(std::string_view raw) {
  std::string s = strip_and_upper(raw);
  if (s.size() != 7) return std::nullopt;
  if (!is_upper(s[0]) || !is_digit(s[1]) || !is_digit(s[2]) || !is_upper(s[3]) ||
      !is_upper(s[4]) || !is_digit(s[5]) || !is_digit(s[6]))
    return std::nullopt;
  return s;
}

void validate(const PatientRecord& p) {
  auto fail = [&](const std::string& msg) {
    throw ValidationError("patient " + p.id + ": " + msg);
  };
  if (p.id.empty()) throw ValidationError("empty patient id");
  if (p.death && *p.death < p.diagnosis) fail("death before diagnosis");
  const int age = p.age_at_diagnosis();
  if (age < 18 || age > 110) fail("age at diagnosis " + std::to_string(age) + " outside [18, 110]");
  for (std::size_t i = 0; i < p.visits.size(); ++i) {
    const auto& v = p.visits[i];
    if (v.discharge < v.admission) fail("interval inverted");
    if (v.icd10.empty()) fail("visit without diagnosis code");
    for (const auto& c : v.icd10)
      if (normalize_icd10(c) != c) fail("non-normalized ICD-10 code '" + c + "'");
    if (i > 0 && v.admission < p.visits[i - 1].admission) fail("visits not sorted");
  }
  for (std::size_t i = 0; i < p.prescriptions.size(); ++i) {
    const auto& rx = p.prescriptions[i];
    if (!(rx.ddd >= 0.0)) fail("negative ddd_count");
    if (normalize_atc(rx.atc) != rx.atc) fail("non-normalized ATC code '" + rx.atc + "'");
    if (i > 0 && rx.dispensed < p.prescriptions[i - 1].dispensed) fail("prescriptions not sorted");
  }
}

Registry Registry::from_records(std::vector<PatientRecord> records) {
  for (auto& p : records) {
    std::stable_sort(p.visits.begin(), p.visits.end(),
                     [](const auto& a, const auto& b) { return a.admission < b.admission; });
    std::stable_sort(p.prescriptions.begin(), p.prescriptions.end(),
                     [](const auto& a, const auto& b) { return a.dispensed < b.dispensed; });
    validate(p);
  }
  std::sort(records.begin(), records.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });
  for (std::size_t i = 1; i < records.size(); ++i)
    if (records[i].id == records[i - 1].id)
      throw ValidationError("duplicate patient_id " + records[i].id);
  Registry r;
  r.patients_ = std::move(records);
  return r;
}

std::optional<std::size_t> Registry::index_of(std::string_view id) const {
  auto it = std::lower_bound(patients_.begin(), patients_.end(), id,
                             [](const PatientRecord& p, std::string_view key) { return p.id < key; });
  if (it == patients_.end() || it->id != id) return std::nullopt;
  return static_cast<std::size_t>(it - patients_.begin());
}

const PatientRecord* Registry::find(std::string_view id) const {
  auto i = index_of(id);
  return i ? &patients_[*i] : nullptr;
}

// ---------------------------------------------------------------- cohorts

int months_until(Date diagnosis, Date when) {
  const int days = when - diagnosis;
  return std::max(1, (days + kDaysPerMonth - 1) / kDaysPerMonth);
}

std::optional<Date> first_nam_dispense(const PatientRecord& p, const EligibilityConfig& cfg) {
  for (const auto& rx : p.prescriptions) {
    if (rx.dispensed < p.diagnosis) continue;
    if (std::find(cfg.nam_atc.begin(), cfg.nam_atc.end(), rx.atc) != cfg.nam_atc.end())
      return rx.dispensed;
  }
  return std::nullopt;
}

CohortSelection select_cohorts(const Registry& registry, const EligibilityConfig& cfg) {
  if (cfg.treated_to < cfg.treated_from || cfg.comparison_to < cfg.comparison_from)
    throw ConfigError("eligibility window ends before it starts");
  if (cfg.max_dtp < 1) throw ConfigError("max_dtp must be positive");

  CohortSelection sel;
  std::size_t in_treated_window = 0, with_nam = 0;
  std::size_t in_comparison_window = 0;
  const auto patients = registry.patients();
  for (std::size_t i = 0; i < patients.size(); ++i) {
    const auto& p = patients[i];
    const auto nam = first_nam_dispense(p, cfg);
    if (p.diagnosis >= cfg.treated_from && p.diagnosis <= cfg.treated_to) {
      ++in_treated_window;
      if (nam) {
        ++with_nam;
        const int dtp = months_until(p.diagnosis, *nam);
        if (dtp <= cfg.max_dtp) sel.treated.push_back({p.id, i, Arm::treated, dtp});
      }
    }
    if (p.diagnosis >= cfg.comparison_from && p.diagnosis <= cfg.comparison_to) {
      ++in_comparison_window;
      // No NAM dispense in [diagnosis, diagnosis + max_dtp months).
      if (!nam || *nam >= add_months(p.diagnosis, cfg.max_dtp))
        sel.comparison.push_back({p.id, i, Arm::comparison, std::nullopt});
    }
  }
  // A patient inside both windows could qualify only for one arm: the NAM
  // conditions are complementary.
  const std::size_t n = patients.size();
  sel.attrition = {
      {"treated", "diagnosed in treated window", n, in_treated_window},
      {"treated", "NAM dispensed after diagnosis", in_treated_window, with_nam},
      {"treated", "DTP within " + std::to_string(cfg.max_dtp) + " months", with_nam,
       sel.treated.size()},
      {"comparison", "diagnosed in comparison window", n, in_comparison_window},
      {"comparison", "no NAM within " + std::to_string(cfg.max_dtp) + " months",
       in_comparison_window, sel.comparison.size()},
  };
  if (sel.treated.empty()) throw ConfigError("treated arm is empty under the eligibility windows");
  if (sel.comparison.empty())
    throw ConfigError("comparison arm is empty under the eligibility windows");
  return sel;
}

std::vector<CohortAssignment> censor_dead_controls(int stratum_w,
                                                   std::span<const CohortAssignment> comparison,
                                                   const Registry& registry) {
  std::vector<CohortAssignment> kept;
  kept.reserve(comparison.size());
  for (const auto& c : comparison) {
    const auto& p = registry.at(c.index);
    if (p.alive_before(add_months(p.diagnosis, stratum_w))) kept.push_back(c);
  }
  return kept;
}

}  // namespace histctl
