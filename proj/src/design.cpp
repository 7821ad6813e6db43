#include "histctl/design.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "histctl/errors.hpp"

namespace histctl {

namespace {

template <typename F>
void parallel_for(std::size_t n, int workers, F&& body) {
  const int threads = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t i = static_cast<std::size_t>(t); i < n; i += threads) body(i);
    });
  for (auto& th : pool) th.join();
}

}  // namespace

CohortCovariates compute_covariates(const Registry& registry, const CohortSelection& cohorts,
                                    int workers) {
  CohortCovariates out;
  const std::size_t n = registry.size();
  out.pre.resize(n);
  out.trajectories.resize(n);
  out.education.resize(n);

  std::vector<std::size_t> members;
  for (const auto& c : cohorts.treated) members.push_back(c.index);
  for (const auto& c : cohorts.comparison) members.push_back(c.index);
  std::sort(members.begin(), members.end());

  // Education: 5-NN imputation against cohort members with observed level.
  std::vector<EducationDonor> donors;
  for (std::size_t i : members) {
    const auto& p = registry.at(i);
    if (p.demographics.education) {
      donors.push_back({education_features(p), *p.demographics.education});
      out.education[i] = p.demographics.education;
    }
  }
  for (std::size_t i : members) {
    if (out.education[i]) continue;
    out.education[i] = impute_education(education_features(registry.at(i)), donors);
    ++out.education_imputed;
  }

  // Socioeconomic factors fitted on the cohort panel.
  Eigen::MatrixXd panel(static_cast<Eigen::Index>(members.size()),
                        static_cast<Eigen::Index>(SocioPanel::kSize));
  for (std::size_t r = 0; r < members.size(); ++r) {
    const SocioPanel filled = fill_from_other_years(registry.at(members[r]).ses);
    for (std::size_t c = 0; c < SocioPanel::kSize; ++c)
      panel(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = filled.values[c];
  }
  const auto& names = SocioPanel::names();
  out.factor_model =
      fit_factor_model(panel, 5, std::vector<std::string>(names.begin(), names.end()));
  for (const auto& w : out.factor_model.warnings) out.warnings.push_back("factor model: " + w);
  // Values still missing are scored at the fit-time mean.
  for (Eigen::Index r = 0; r < panel.rows(); ++r)
    for (Eigen::Index c = 0; c < panel.cols(); ++c)
      if (std::isnan(panel(r, c))) panel(r, c) = out.factor_model.means(c);
  const Eigen::MatrixXd scores = score_factors(out.factor_model, panel);

  parallel_for(members.size(), workers, [&](std::size_t r) {
    const std::size_t i = members[r];
    const auto& p = registry.at(i);
    std::array<double, 5> f{};
    for (int k = 0; k < 5; ++k) f[k] = scores(static_cast<Eigen::Index>(r), k);
    out.pre[i] = prediagnosis_covariates(p, *out.education[i], f);
    out.trajectories[i] = compute_trajectory(p, 36);
  });
  return out;
}

const std::vector<std::string>& stratum_covariate_names() {
  static const std::vector<std::string> names = {
      "ALDER",        "VISITS_BFD_1",  "VISITS_BFD_1_6", "VISITS_BFD_6_12", "VISITS_BFD_1_60",
      "ELIX_DX_1_4",  "ELIX_DX_5",     "ELIX_12M_1_4",   "ELIX_12M_5",      "UTBNFORGYMN",
      "UTBNGYMN",     "CIVIL",         "Fodelseland_EU28", "FACTOR1",       "FACTOR2",
      "FACTOR3",      "FACTOR4",       "FACTOR5",        "SCORE",           "VISITS",
      "VISITS_3M",    "METAS",         "SUM_VIS_METAS",  "SUM_SK_METAS",    "MEDS_DAYS",
      "BIKA_ONLY",    "BIKA_GNRH",     "SUM_DAYS"};
  return names;
}

std::vector<double> stratum_row(const PreDiagnosisCovariates& x,
                                const std::vector<TrajectoryVector>& traj, int w) {
  if (w < 1 || static_cast<std::size_t>(w) > traj.size())
    throw ValidationError("trajectory shorter than stratum " + std::to_string(w));
  const TrajectoryVector& h = traj[w - 1];
  const int before = w >= 4 ? traj[w - 4].cum_visits : 0;
  auto b = [](bool v) { return v ? 1.0 : 0.0; };
  return {x.age_at_diagnosis,
          double(x.visits.within_1m),
          double(x.visits.m1_to_6),
          double(x.visits.m6_to_12),
          double(x.visits.m1_to_60),
          b(x.elix_at_dx == ElixCategory::one_to_four),
          b(x.elix_at_dx == ElixCategory::five_plus),
          b(x.elix_12m == ElixCategory::one_to_four),
          b(x.elix_12m == ElixCategory::five_plus),
          b(x.edu_below),
          b(x.edu_secondary),
          b(x.partnered),
          b(x.nordic_born),
          x.factor_scores[0],
          x.factor_scores[1],
          x.factor_scores[2],
          x.factor_scores[3],
          x.factor_scores[4],
          double(h.elix_score),
          double(h.cum_visits),
          double(h.cum_visits - before),
          b(h.any_mets),
          double(h.months_visceral_mets),
          double(h.months_skeletal_mets),
          h.cum_adt_ddd,
          b(h.adt_status == AdtStatus::bicalutamide_only),
          b(h.adt_status == AdtStatus::bica_plus_gnrh),
          double(h.sum_inpatient_days)};
}

std::vector<StratumData> assemble_strata(const Registry& registry, const CohortSelection& cohorts,
                                         const CohortCovariates& cov, const ExtraColumns* extra,
                                         int w_min, int w_max) {
  std::vector<std::string> names = stratum_covariate_names();
  if (extra) names.insert(names.end(), extra->names.begin(), extra->names.end());
  const auto width = static_cast<Eigen::Index>(names.size());

  auto fill = [&](Eigen::MatrixXd& m, Eigen::Index r, std::size_t i, int w) {
    if (!cov.pre[i]) throw ValidationError("no covariates for " + registry.at(i).id);
    const auto row = stratum_row(*cov.pre[i], cov.trajectories[i], w);
    for (std::size_t c = 0; c < row.size(); ++c) m(r, static_cast<Eigen::Index>(c)) = row[c];
    if (extra) {
      const auto& v = extra->values.at(i);
      if (v.size() != extra->names.size())
        throw ValidationError("extra columns missing for " + registry.at(i).id);
      for (std::size_t c = 0; c < v.size(); ++c)
        m(r, static_cast<Eigen::Index>(row.size() + c)) = v[c];
    }
  };

  std::vector<StratumData> out;
  for (int w = w_min; w <= w_max; ++w) {
    StratumData d;
    d.w = w;
    d.names = names;
    for (const auto& c : cohorts.treated)
      if (c.dtp_months == w) d.treated_index.push_back(c.index);
    for (const auto& c : censor_dead_controls(w, cohorts.comparison, registry))
      d.comparison_index.push_back(c.index);
    d.treated.resize(static_cast<Eigen::Index>(d.treated_index.size()), width);
    d.comparison.resize(static_cast<Eigen::Index>(d.comparison_index.size()), width);
    for (std::size_t r = 0; r < d.treated_index.size(); ++r)
      fill(d.treated, static_cast<Eigen::Index>(r), d.treated_index[r], w);
    for (std::size_t r = 0; r < d.comparison_index.size(); ++r)
      fill(d.comparison, static_cast<Eigen::Index>(r), d.comparison_index[r], w);
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace histctl
