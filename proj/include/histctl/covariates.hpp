#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "histctl/registry.hpp"

namespace histctl {

// ------------------------------------------------------------ Elixhauser

enum class ElixCategory { none, one_to_four, five_plus };

std::string_view to_string(ElixCategory c);
ElixCategory elix_category(int group_count);

struct ElixhauserResult {
  int category_count = 0;
  ElixCategory category = ElixCategory::none;
};

// ICD-10 -> comorbidity group table. The bundled table is compiled in from
// data/elixhauser_icd10_v1.csv.
class ElixhauserMap {
 public:
  static const ElixhauserMap& bundled();
  static ElixhauserMap parse(std::string_view csv_text, std::string version);

  // Bit g-1 set when the code belongs to group g.
  std::uint32_t groups_of(std::string_view code) const;
  int group_count() const { return static_cast<int>(names_.size()); }
  const std::string& group_name(int group_id) const { return names_.at(group_id - 1); }
  const std::string& version() const { return version_; }
  // FNV-1a 64 over the table text, rendered as 16 hex digits.
  const std::string& checksum() const { return checksum_; }

 private:
  std::unordered_map<std::string, std::uint32_t> prefixes_;
  std::vector<std::string> names_;
  std::string version_;
  std::string checksum_;
};

std::string_view bundled_elixhauser_csv();

ElixhauserResult elixhauser(std::span<const std::string> codes,
                            const ElixhauserMap& map = ElixhauserMap::bundled());

// Groups matched by all codes of visits admitted in [from, to).
std::uint32_t elixhauser_groups(std::span<const InpatientVisit> visits, Date from, Date to,
                                const ElixhauserMap& map = ElixhauserMap::bundled());

// ------------------------------------------------------------ visit windows

struct VisitWindows {
  int within_1m = 0;   // (dx-1m, dx]
  int m1_to_6 = 0;     // (dx-6m, dx-1m]
  int m6_to_12 = 0;    // (dx-12m, dx-6m]
  int m1_to_60 = 0;    // (dx-60m, dx-1m]
  bool operator==(const VisitWindows&) const = default;
};

VisitWindows visit_windows(std::span<const InpatientVisit> visits, Date diagnosis);

// ------------------------------------------------------------ ADT

enum class AdtStatus { bicalutamide_only, bica_plus_gnrh, neither };
std::string_view to_string(AdtStatus s);

inline constexpr std::string_view kBicalutamide = "L02BB03";
// Degarelix, buserelin, leuprorelin, goserelin, triptorelin.
inline constexpr std::array<std::string_view, 5> kGnrhCodes = {"L02BX02", "L02AE01", "L02AE02",
                                                               "L02AE03", "L02AE04"};
bool is_adt_code(std::string_view atc);
bool is_gnrh_code(std::string_view atc);

// Defined daily doses in a dispense of `days` days at `mg_per_day`.
double ddd_from_daily_dose(double mg_per_day, double days, double ddd_mg);

// Sum of ADT DDDs dispensed in [dx, dx + t months); t in [1, 36].
double adt_cumulative_ddd(std::span<const Prescription> rx, Date diagnosis, int t);
// Classification over dispenses before dx + t months; t in [1, 36].
AdtStatus adt_status(std::span<const Prescription> rx, Date diagnosis, int t);

// ------------------------------------------------------------ trajectories

// Health progression summary for month t after diagnosis; every field covers
// events before the end of month t, i.e. before dx + (t+1) months.
struct TrajectoryVector {
  int month = 0;
  int elix_score = 0;             // groups in the trailing 12 months
  int cum_visits = 0;             // admissions in [dx, end of month t)
  int months_visceral_mets = 0;   // months since first C78, inclusive
  int months_skeletal_mets = 0;   // months since first C79, inclusive
  bool any_mets = false;          // any C77-C79 so far
  double cum_adt_ddd = 0.0;
  AdtStatus adt_status = AdtStatus::neither;
  int sum_inpatient_days = 0;
};

// Months 0..months-1 without checking survival.
std::vector<TrajectoryVector> compute_trajectory(const PatientRecord& p, int months);
// Months 0..w-1; throws ValidationError("trajectory truncated by death") when
// the patient died before dx + w months.
std::vector<TrajectoryVector> build_trajectory(const PatientRecord& p, int w);

// ------------------------------------------------------------ pre-diagnosis block

struct PreDiagnosisCovariates {
  double age_at_diagnosis = 0.0;
  VisitWindows visits;
  ElixCategory elix_at_dx = ElixCategory::none;
  ElixCategory elix_12m = ElixCategory::none;
  bool edu_below = false;
  bool edu_secondary = false;
  bool partnered = false;
  bool nordic_born = false;
  std::array<double, 5> factor_scores{};
};

PreDiagnosisCovariates prediagnosis_covariates(const PatientRecord& p, Education education,
                                               const std::array<double, 5>& factor_scores);

// ------------------------------------------------------------ socioeconomic panel

// Replaces a missing value with the mean of the same measure's available
// years; measures missing in all three years stay NaN.
SocioPanel fill_from_other_years(const SocioPanel& panel);

// ------------------------------------------------------------ education imputation

enum class ModeTieBreak { lower_level, higher_level };

// (disposable income, total pension, age, nordic-born 0/1)
using EducationFeatures = std::array<double, 4>;
EducationFeatures education_features(const PatientRecord& p);

struct EducationDonor {
  EducationFeatures features;
  Education level;
};

// Mode of the k nearest donors in Euclidean distance after standardizing each
// feature by the donor-pool mean and SD. Distance ties keep donor order.
// Throws ValidationError("insufficient donors") when fewer than k donors.
Education impute_education(const EducationFeatures& target, std::span<const EducationDonor> donors,
                           int k = 5, ModeTieBreak tie = ModeTieBreak::lower_level);

}  // namespace histctl
