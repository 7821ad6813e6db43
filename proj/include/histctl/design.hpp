#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "histctl/balance.hpp"
#include "histctl/covariates.hpp"
#include "histctl/factor_model.hpp"
#include "histctl/registry.hpp"

namespace histctl {

// Covariates of every cohort patient, indexed by registry position.
struct CohortCovariates {
  std::vector<std::optional<PreDiagnosisCovariates>> pre;
  std::vector<std::vector<TrajectoryVector>> trajectories;  // months 0..35
  std::vector<std::optional<Education>> education;           // observed or imputed
  std::size_t education_imputed = 0;
  FactorModel factor_model;
  std::vector<std::string> warnings;
};

CohortCovariates compute_covariates(const Registry& registry, const CohortSelection& cohorts,
                                    int workers = 1);

// Per-patient columns appended to every stratum matrix (e.g. measurements
// not held in the registry). Rows are indexed by registry position.
struct ExtraColumns {
  std::vector<std::string> names;
  std::vector<std::vector<double>> values;
};

// Column names of the stratum covariate matrix: the pre-diagnosis block
// followed by the trajectory summary at month w-1.
const std::vector<std::string>& stratum_covariate_names();
std::vector<double> stratum_row(const PreDiagnosisCovariates& pre,
                                const std::vector<TrajectoryVector>& trajectory, int w);

// Treated with DTP = w against comparisons alive at diagnosis + w months.
std::vector<StratumData> assemble_strata(const Registry& registry, const CohortSelection& cohorts,
                                         const CohortCovariates& covariates,
                                         const ExtraColumns* extra = nullptr, int w_min = 4,
                                         int w_max = 36);

}  // namespace histctl
