#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "histctl/covariates.hpp"
#include "histctl/errors.hpp"
#include "histctl/factor_model.hpp"
#include "histctl/rng.hpp"

using namespace histctl;
using fixtures::patient;

namespace {
const Date kDx = Date::from_ymd(2013, 3, 1);
}

TEST_CASE("Elixhauser counting and buckets") {
  CHECK(elixhauser(std::vector<std::string>{}).category_count == 0);
  CHECK(elixhauser(std::vector<std::string>{}).category == ElixCategory::none);
  const auto two = elixhauser(std::vector<std::string>{"I500", "E119"});
  CHECK(two.category_count == 2);
  CHECK(two.category == ElixCategory::one_to_four);
  CHECK(to_string(two.category) == "1-4");
  // Repeated codes in one group count once.
  CHECK(elixhauser(std::vector<std::string>{"I500", "I509", "I501"}).category_count == 1);
  const auto five = elixhauser(std::vector<std::string>{"I500", "E119", "I10", "J449", "F32"});
  CHECK(five.category_count == 5);
  CHECK(five.category == ElixCategory::five_plus);
  CHECK(elixhauser(std::vector<std::string>{"R69", "Z039"}).category_count == 0);
  const auto& map = ElixhauserMap::bundled();
  CHECK(map.group_count() == 31);
  CHECK(map.checksum().size() == 16);
}

TEST_CASE("visit windows") {
  PatientRecord p = patient("A", kDx);
  fixtures::visit(p, kDx - 200, {"I10"});
  fixtures::visit(p, kDx - 45, {"I10"});
  fixtures::visit(p, kDx - 15, {"I10"});
  const VisitWindows w = visit_windows(p.visits, kDx);
  CHECK(w == VisitWindows{1, 1, 1, 2});
  CHECK(visit_windows({}, kDx) == VisitWindows{});
}

TEST_CASE("ADT doses and status") {
  CHECK(ddd_from_daily_dose(150, 30, 50) == doctest::Approx(90.0));
  PatientRecord p = patient("A", kDx);
  CHECK(adt_cumulative_ddd(p.prescriptions, kDx, 6) == 0.0);
  CHECK(adt_status(p.prescriptions, kDx, 6) == AdtStatus::neither);
  fixtures::rx(p, kDx + 10, "L02BB03", 30);
  fixtures::rx(p, kDx + 40, "L02BB03", 30);
  fixtures::rx(p, kDx + 300, "L02BB03", 30);
  CHECK(adt_cumulative_ddd(p.prescriptions, kDx, 6) == doctest::Approx(60.0));
  CHECK(adt_status(p.prescriptions, kDx, 6) == AdtStatus::bicalutamide_only);
  fixtures::rx(p, kDx + 100, "L02AE02", 90);
  std::sort(p.prescriptions.begin(), p.prescriptions.end(),
            [](const auto& a, const auto& b) { return a.dispensed < b.dispensed; });
  CHECK(adt_status(p.prescriptions, kDx, 6) == AdtStatus::bica_plus_gnrh);
  PatientRecord g = patient("G", kDx);
  fixtures::rx(g, kDx + 5, "L02AE03", 90);
  CHECK(adt_status(g.prescriptions, kDx, 6) == AdtStatus::neither);
  CHECK(adt_cumulative_ddd(g.prescriptions, kDx, 6) == doctest::Approx(90.0));
}

TEST_CASE("trajectory counting") {
  PatientRecord p = patient("A", kDx);
  CHECK_NOTHROW(build_trajectory(p, 6));
  for (const auto& t : build_trajectory(p, 6)) {
    CHECK(t.cum_visits == 0);
    CHECK(t.adt_status == AdtStatus::neither);
    CHECK_FALSE(t.any_mets);
  }
  fixtures::visit(p, add_months(kDx, 3) + 4, {"C795"});
  const auto tr = build_trajectory(p, 6);
  const std::vector<int> expect = {0, 0, 0, 1, 2, 3};
  for (int t = 0; t < 6; ++t) {
    CHECK(tr[t].months_skeletal_mets == expect[t]);
    CHECK(tr[t].any_mets == (t >= 3));
  }
  p.death = add_months(kDx, 4);
  CHECK_THROWS_AS(build_trajectory(p, 6), ValidationError);
}

TEST_CASE("property: cumulative visits match a brute-force rescan") {
  Rng rng(7);
  for (int rep = 0; rep < 50; ++rep) {
    PatientRecord p = patient("R", kDx);
    const int n = rng.uniform_int(0, 25);
    std::vector<int> offsets;
    for (int i = 0; i < n; ++i) offsets.push_back(rng.uniform_int(-100, 36 * 30 + 50));
    std::sort(offsets.begin(), offsets.end());
    for (int o : offsets) fixtures::visit(p, kDx + o, {"I10"}, rng.uniform_int(0, 6));
    const auto tr = compute_trajectory(p, 36);
    for (int t = 0; t < 36; ++t) {
      int count = 0, days = 0;
      for (const auto& v : p.visits)
        if (v.admission >= kDx && v.admission < add_months(kDx, t + 1)) {
          ++count;
          days += v.discharge - v.admission;
        }
      CHECK(tr[t].cum_visits == count);
      (void)days;
    }
  }
}

TEST_CASE("education imputation by 5-NN mode") {
  std::vector<EducationDonor> donors;
  auto donor = [&](double x, Education e) { donors.push_back({{x, 0, 0, 0}, e}); };
  using E = Education;
  donor(1, E::secondary);
  donor(2, E::secondary);
  donor(3, E::above_secondary);
  donor(4, E::below_secondary);
  donor(5, E::secondary);
  donor(100, E::above_secondary);
  CHECK(impute_education({0, 0, 0, 0}, donors) == E::secondary);

  donors.clear();
  for (int i = 0; i < 5; ++i) donor(i, E::above_secondary);
  CHECK(impute_education({0, 0, 0, 0}, donors) == E::above_secondary);

  donors.clear();
  donor(1, E::secondary);
  donor(2, E::secondary);
  donor(3, E::below_secondary);
  donor(4, E::below_secondary);
  donor(5, E::above_secondary);
  CHECK(impute_education({0, 0, 0, 0}, donors) == E::below_secondary);
  CHECK(impute_education({0, 0, 0, 0}, donors, 5, ModeTieBreak::higher_level) == E::secondary);

  donors.resize(3);
  CHECK_THROWS_AS(impute_education({0, 0, 0, 0}, donors), ValidationError);
}

TEST_CASE("socioeconomic panel gap filling") {
  SocioPanel s;
  s.values[SocioPanel::index(0, 1)] = 10;
  s.values[SocioPanel::index(0, 2)] = 20;
  const SocioPanel f = fill_from_other_years(s);
  CHECK(f.values[SocioPanel::index(0, 0)] == doctest::Approx(15));
  CHECK(f.values[SocioPanel::index(0, 1)] == 10);
  CHECK(std::isnan(f.values[SocioPanel::index(1, 0)]));
  CHECK(SocioPanel::names().size() == 42);
}

namespace {

// Orthogonal 5-factor generator: variable j loads on factor j % 5.
Eigen::MatrixXd true_loadings() {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(42, 5);
  for (int j = 0; j < 42; ++j) L(j, j % 5) = 0.55 + 0.3 * ((j * 7) % 11) / 10.0;
  return L;
}

Eigen::MatrixXd simulate(const Eigen::MatrixXd& L, int n, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd X(n, L.rows());
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd f(L.cols());
    for (int k = 0; k < L.cols(); ++k) f(k) = rng.normal();
    for (int j = 0; j < L.rows(); ++j) {
      const double u = std::sqrt(1.0 - L.row(j).squaredNorm());
      X(i, j) = 100.0 + 20.0 * (L.row(j).dot(f) + u * rng.normal());
    }
  }
  return X;
}

}  // namespace

TEST_CASE("factor model recovers a known 5-factor structure") {
  const Eigen::MatrixXd L = true_loadings();
  const FactorModel m = fit_factor_model(simulate(L, 2000, 99), 5);
  CHECK(m.converged);
  std::vector<bool> used(5, false);
  for (int k = 0; k < 5; ++k) {
    double best = 0;
    int arg = -1;
    for (int r = 0; r < 5; ++r) {
      if (used[r]) continue;
      const double c = std::abs(tucker_congruence(L.col(k), m.loadings.col(r)));
      if (c > best) best = c, arg = r;
    }
    used[arg] = true;
    CHECK(best > 0.95);
  }
  // Proportions are SS loadings over the variable count.
  CHECK(m.proportion_var.sum() == doctest::Approx(m.cumulative_var(4)));
  CHECK(m.proportion_var(0) == doctest::Approx(m.ss_loadings(0) / 42.0));

  const std::string table = render_factor_table(m);
  CHECK(table.find("SS loadings") != std::string::npos);
  CHECK(table.find("Proportion Var") != std::string::npos);
  CHECK(table.find("Cumulative Var") != std::string::npos);
}

TEST_CASE("factor scores are centred and deterministic") {
  const Eigen::MatrixXd X = simulate(true_loadings(), 600, 5);
  const FactorModel m = fit_factor_model(X, 5);
  const Eigen::VectorXd at_mean = score_factors(m, Eigen::VectorXd(m.means));
  CHECK(at_mean.cwiseAbs().maxCoeff() < 1e-12);
  const Eigen::MatrixXd s = score_factors(m, X);
  CHECK(s.colwise().mean().cwiseAbs().maxCoeff() < 1e-8);
  CHECK((score_factors(m, Eigen::VectorXd(X.row(3).transpose())) -
         score_factors(m, Eigen::VectorXd(X.row(3).transpose()))).norm() == 0.0);
}

TEST_CASE("one factor on near-duplicate columns") {
  Rng rng(3);
  Eigen::MatrixXd X(400, 4);
  for (int i = 0; i < 400; ++i) {
    const double f = rng.normal();
    for (int j = 0; j < 4; ++j) X(i, j) = (j + 1) * f + 1e-6 * rng.normal();
  }
  const FactorModel m = fit_factor_model(X, 1);
  for (int j = 0; j < 4; ++j) CHECK(std::abs(m.loadings(j, 0)) == doctest::Approx(1.0).epsilon(0.01));
  CHECK(m.cumulative_var(0) == doctest::Approx(1.0).epsilon(0.01));
}

TEST_CASE("varimax keeps the loading matrix's row norms") {
  const Eigen::MatrixXd L = true_loadings();
  Eigen::MatrixXd Q = Eigen::MatrixXd::Identity(5, 5);
  Q.topLeftCorner(2, 2) << std::cos(0.4), -std::sin(0.4), std::sin(0.4), std::cos(0.4);
  Eigen::MatrixXd R;
  const Eigen::MatrixXd rotated = varimax(L * Q, &R);
  CHECK((rotated.rowwise().norm() - L.rowwise().norm()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((R.transpose() * R - Eigen::MatrixXd::Identity(5, 5)).norm() < 1e-9);
}
