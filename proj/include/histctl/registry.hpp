#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "histctl/date.hpp"

namespace histctl {

enum class Marital { partnered, single };
enum class Education { below_secondary, secondary, above_secondary };

std::string_view to_string(Marital m);
std::string_view to_string(Education e);
Education parse_education(std::string_view s);

struct Demographics {
  int birth_year = 0;
  Marital marital = Marital::single;
  bool nordic_born = true;
  std::optional<Education> education;
};

struct InpatientVisit {
  Date admission;
  Date discharge;
  std::vector<std::string> icd10;  // normalized, dot-free uppercase
};

struct Prescription {
  Date dispensed;
  std::string atc;  // normalized
  double ddd = 0.0;
};

// 14 socioeconomic measures at the diagnosis year and the two preceding
// years. Missing values are NaN.
struct SocioPanel {
  static constexpr std::size_t kBaseCount = 14;
  static constexpr std::size_t kSize = 3 * kBaseCount;

  std::array<double, kSize> values;

  SocioPanel();
  static const std::array<std::string, kSize>& names();
  static std::optional<std::size_t> index_of(std::string_view name);
  // Index of base measure `base` at lag 0 (diagnosis year), 1 or 2 years.
  static constexpr std::size_t index(std::size_t base, int lag) {
    return static_cast<std::size_t>(lag) * kBaseCount + base;
  }
  bool missing(std::size_t i) const;

  // Base measure positions used outside the factor model.
  static constexpr std::size_t kDispInk = 3;
  static constexpr std::size_t kAldPens = 11;
  static constexpr std::size_t kSumTjp = 12;
  static constexpr std::size_t kPrivPens = 13;
};

struct PatientRecord {
  std::string id;
  Date diagnosis;
  std::optional<Date> death;
  std::vector<InpatientVisit> visits;        // ascending admission
  std::vector<Prescription> prescriptions;   // ascending dispense date
  SocioPanel ses;
  Demographics demographics;

  int age_at_diagnosis() const { return diagnosis.year() - demographics.birth_year; }
  bool alive_before(Date d) const { return !death || *death >= d; }
};

// ICD-10 codes are stored without dots in upper case and must match
// [A-Z][0-9]{2,3}[0-9A-Z]?; ATC codes must match [A-Z][0-9]{2}[A-Z]{2}[0-9]{2}.
std::optional<std::string> normalize_icd10(std::string_view raw);
std::optional<std::string> normalize_atc(std::string_view raw);

// Throws ValidationError describing the first violated invariant.
void validate(const PatientRecord& p);

// Immutable, validated set of patients ordered by id.
class Registry {
 public:
  Registry() = default;
  // Sorts events, validates every patient and rejects duplicate ids.
  static Registry from_records(std::vector<PatientRecord> records);

  std::span<const PatientRecord> patients() const { return patients_; }
  std::size_t size() const { return patients_.size(); }
  const PatientRecord& at(std::size_t i) const { return patients_.at(i); }
  const PatientRecord* find(std::string_view id) const;
  std::optional<std::size_t> index_of(std::string_view id) const;

 private:
  std::vector<PatientRecord> patients_;
};

struct RowError {
  std::size_t line = 0;
  std::string patient_id;
  std::string message;
};

struct LoadResult {
  Registry registry;
  std::vector<RowError> errors;
};

// Line-delimited interchange format; one JSON object per line tagged by
// "type" (patient | visit | prescription | ses | death). Invalid rows are
// reported and skipped; a duplicate patient id is fatal (ValidationError).
LoadResult load_registry(std::istream& in);
LoadResult load_registry_file(const std::string& path);

void write_registry(std::ostream& out, const Registry& registry);
// Writes patients.csv, visits.csv, prescriptions.csv, ses.csv, deaths.csv.
void export_registry_csv(const std::string& directory, const Registry& registry);

// ---------------------------------------------------------------- cohorts

enum class Arm { treated, comparison };

struct CohortAssignment {
  std::string patient_id;
  std::size_t index = 0;  // position in the registry
  Arm arm = Arm::comparison;
  std::optional<int> dtp_months;
};

struct EligibilityConfig {
  Date treated_from = Date::from_ymd(2012, 6, 1);
  Date treated_to = Date::from_ymd(2015, 6, 15);
  Date comparison_from = Date::from_ymd(2008, 6, 1);
  Date comparison_to = Date::from_ymd(2010, 6, 1);
  std::vector<std::string> nam_atc = {"L02BX03", "L02BB04"};  // abiraterone, enzalutamide
  int max_dtp = 36;
};

struct AttritionStep {
  std::string chain;  // "treated" or "comparison"
  std::string step;
  std::size_t input = 0;
  std::size_t output = 0;
};

struct CohortSelection {
  std::vector<CohortAssignment> treated;
  std::vector<CohortAssignment> comparison;
  std::vector<AttritionStep> attrition;
};

// First NAM dispense on or after diagnosis, if any.
std::optional<Date> first_nam_dispense(const PatientRecord& p, const EligibilityConfig& cfg);
// Whole 30-day months from diagnosis to `when`, rounded up, at least 1.
int months_until(Date diagnosis, Date when);

// Throws ConfigError when either arm comes out empty.
CohortSelection select_cohorts(const Registry& registry, const EligibilityConfig& cfg);

// Comparison patients who died before diagnosis + w months are dropped.
std::vector<CohortAssignment> censor_dead_controls(int stratum_w,
                                                   std::span<const CohortAssignment> comparison,
                                                   const Registry& registry);

}  // namespace histctl
