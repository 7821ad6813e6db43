#include <doctest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "histctl/errors.hpp"
#include "histctl/estimate.hpp"

using namespace histctl;

namespace {

// Row whose death falls in period `death` (0-based, -1 for none).
PanelRow row(std::size_t id, int treated, int w, double weight, int death, int periods,
             std::vector<int> pain = {}) {
  PanelRow r{id, treated, w, weight, {}, {}, {}};
  r.dead.assign(periods, 0);
  r.pain.assign(periods, 0);
  r.sre.assign(periods, 0);
  for (int k = 0; k < periods; ++k) {
    if (death >= 0 && k >= death) r.dead[k] = 1;
    if (death >= 0 && k > death) r.pain[k] = r.sre[k] = -1;
  }
  for (int k : pain)
    if (r.pain[k] == 0) r.pain[k] = 1;
  return r;
}

OutcomePanel simulate_hazard(std::uint32_t seed, int n, double hazard, double hr, int periods) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> u;
  OutcomePanel p;
  p.horizons = {periods, periods, periods};
  for (int i = 0; i < n; ++i) {
    const int treated = i % 4 == 0;
    const int w = 4 + i % 3;
    const double h = 1 - std::pow(1 - hazard, treated ? hr : 1.0);
    int death = -1;
    for (int k = 0; k < periods && death < 0; ++k)
      if (u(gen) < h) death = k;
    p.rows.push_back(row(i, treated, w, treated ? 1.0 : 1.0 / 3, death, periods));
  }
  return p;
}

}  // namespace

TEST_CASE("HC0 standard error matches the two-group closed form") {
  // Single stratum: beta is the weighted mean difference and the HC0 variance
  // is sum w^2 e^2 / (sum w)^2 within each arm.
  const std::vector<WlsObservation> obs = {{1, 1.0, 4, 1}, {0, 1.0, 4, 1}, {1, 1.0, 4, 1},
                                           {0, 0.5, 4, 0}, {1, 0.2, 4, 0}, {0, 0.3, 4, 0}};
  const WlsFit fit = fit_wls(obs);
  const double mt = 2.0 / 3.0;
  const double mc = 0.2 / 1.0;
  CHECK(fit.beta == doctest::Approx(mt - mc).epsilon(1e-12));
  double vt = 0, vc = 0;
  for (const auto& o : obs) {
    const double e = o.y - (o.treated ? mt : mc);
    (o.treated ? vt : vc) += o.weight * o.weight * e * e;
  }
  vt /= 3.0 * 3.0;
  vc /= 1.0 * 1.0;
  CHECK(std::abs(fit.se - std::sqrt(vt + vc)) < 1e-10);
  CHECK(fit.n == 6);
}

TEST_CASE("stratified fit agrees with direct matrix arithmetic") {
  std::mt19937 gen(17);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  std::bernoulli_distribution coin(0.4);
  std::vector<WlsObservation> obs;
  for (int i = 0; i < 40; ++i)
    obs.push_back({double(coin(gen)), u(gen), 4 + i % 3, i % 5 == 0 || i % 7 == 0});
  const WlsFit fit = fit_wls(obs);
  // Columns: intercept, stratum 5, stratum 6, treatment.
  Eigen::MatrixXd X(40, 4);
  Eigen::VectorXd y(40), w(40);
  for (int i = 0; i < 40; ++i) {
    X.row(i) << 1, obs[i].stratum == 5, obs[i].stratum == 6, obs[i].treated;
    y(i) = obs[i].y;
    w(i) = obs[i].weight;
  }
  const Eigen::MatrixXd xtwx = X.transpose() * w.asDiagonal() * X;
  const Eigen::MatrixXd inv = xtwx.inverse();
  const Eigen::VectorXd b = inv * X.transpose() * w.asDiagonal() * y;
  const Eigen::VectorXd e = y - X * b;
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(4, 4);
  for (int i = 0; i < 40; ++i) meat += (w(i) * w(i) * e(i) * e(i)) * X.row(i).transpose() * X.row(i);
  const Eigen::MatrixXd cov = inv * meat * inv;
  CHECK(std::abs(fit.beta - b(3)) < 1e-10);
  CHECK(std::abs(fit.se - std::sqrt(cov(3, 3))) < 1e-10);
  // The sandwich is positive semidefinite.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(fit.covariance);
  CHECK(es.eigenvalues().minCoeff() > -1e-12);
}

TEST_CASE("single-arm strata are dropped and an all-single-arm design fails") {
  std::vector<WlsObservation> obs = {{1, 1, 4, 1}, {0, 1, 4, 0}, {1, 1, 9, 1}, {0, 1, 4, 0}};
  const WlsFit fit = fit_wls(obs);
  CHECK(fit.dropped_strata == std::vector<int>{9});
  CHECK(fit.beta == doctest::Approx(1.0));
  obs = {{1, 1, 4, 1}, {0, 1, 5, 0}};
  CHECK_THROWS_AS(fit_wls(obs), EstimationError);
}

TEST_CASE("constant outcomes are flagged as degenerate") {
  const std::vector<WlsObservation> obs = {{0, 1, 4, 1}, {0, 1, 4, 0}, {0, 2, 4, 0}};
  const WlsFit fit = fit_wls(obs);
  CHECK(fit.degenerate);
  CHECK(fit.se == 0.0);
  const auto e = make_estimate("PAIN", 3, fit, 0.05 / 3, "main");
  CHECK(e.degenerate);
  CHECK_FALSE(e.significant);
}

TEST_CASE("Bonferroni threshold") {
  const std::vector<double> p = {0.0166, 0.0168, 0.2};
  const auto r = bonferroni(p);
  CHECK(r.threshold == doctest::Approx(0.0166667).epsilon(1e-6));
  CHECK(r.significant == std::vector<bool>{true, false, false});
  CHECK(bonferroni(p, 1, 0.05).significant == std::vector<bool>{true, true, false});
  CHECK(normal_two_sided_p(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-9));
}

TEST_CASE("outcome code definitions") {
  CHECK(is_sre_code("M844"));
  CHECK(is_sre_code("M8440"));
  CHECK(is_sre_code("G952"));
  CHECK_FALSE(is_sre_code("M845"));
  CHECK_FALSE(is_sre_code("C795"));
  CHECK(is_pain_code("N02AA01"));
  CHECK(is_pain_code("N02AX02"));
  CHECK_FALSE(is_pain_code("N02BA01"));
}

TEST_CASE("outcomes are read from the registry on the stratum clock") {
  auto p = fixtures::patient("p1", Date::from_ymd(2016, 1, 1), 1950);
  const Date clock = add_months(p.diagnosis, 6);
  fixtures::rx(p, clock + 5, "N02AA01", 10);
  fixtures::rx(p, clock - 1, "N02AA01", 10);         // before the clock
  fixtures::visit(p, clock + 35, {"C619", "M8440"}, 3);  // period 2
  fixtures::visit(p, clock + 65, {"M845"}, 3);
  p.death = clock + 95;  // period 4
  const Registry reg = Registry::from_records({p});
  const OutcomePanel panel = derive_outcomes(reg, {{6, {0}, {}, {}}}, {24, 24, 24});
  REQUIRE(panel.rows.size() == 1);
  const auto& r = panel.rows[0];
  CHECK(r.pain[0] == 1);
  CHECK(r.sre[1] == 1);
  CHECK(r.sre[2] == 0);
  CHECK(r.dead[2] == 0);
  CHECK(r.dead[3] == 1);
  CHECK(r.pain[3] == 0);
  CHECK(r.pain[4] == -1);
  CHECK_THROWS_AS(panel.check_month(Outcome::pain, 25), EstimationError);
}

TEST_CASE("morbidity bounds are ordered and bracket the complete-case fit") {
  std::mt19937 gen(5);
  std::uniform_real_distribution<double> u;
  for (int rep = 0; rep < 30; ++rep) {
    OutcomePanel p;
    p.horizons = {12, 12, 12};
    const double dt = 0.1 + 0.3 * u(gen), dc = 0.1 + 0.3 * u(gen);
    for (int i = 0; i < 300; ++i) {
      const int t = i % 3 == 0;
      const int death = u(gen) < (t ? dt : dc) ? 2 : -1;
      std::vector<int> pain;
      if (u(gen) < 0.4) pain.push_back(5);
      p.rows.push_back(row(i, t, 4, t ? 1.0 : 0.5 + u(gen), death, 12, pain));
    }
    const auto b = morbidity_bounds(p, Outcome::pain, 6);
    CHECK(b.lower.beta <= b.upper.beta + 1e-12);
    CHECK(b.lower.analysis_tag == "bound_lo");
    if (b.monotone) {
      CHECK(b.complete_case.beta >= b.lower.beta - 1e-12);
      CHECK(b.complete_case.beta <= b.upper.beta + 1e-12);
    }
  }
  OutcomePanel p;
  p.horizons = {12, 12, 12};
  p.rows.push_back(row(0, 1, 4, 1, -1, 12));
  CHECK_THROWS_AS(morbidity_bounds(p, Outcome::dead, 3), ConfigError);
}

TEST_CASE("complementary log-log gradient and Hessian match finite differences") {
  const OutcomePanel panel = simulate_hazard(2, 600, 0.08, 1.5, 24);
  const auto cells = cll_cells(panel, 24);
  const CllDesign d = cll_design(cells, 24);
  std::mt19937 gen(9);
  std::normal_distribution<double> z(0, 0.3);
  Eigen::VectorXd theta(d.parameters());
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = z(gen);
  theta(0) = -2.5;
  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  cll_loglik(cells, d, theta, &g, &H);
  const double h = 1e-5;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    Eigen::VectorXd a = theta, b = theta;
    a(j) += h;
    b(j) -= h;
    const double fd = (cll_loglik(cells, d, a) - cll_loglik(cells, d, b)) / (2 * h);
    CHECK(std::abs(fd - g(j)) < 1e-6 * std::max(1.0, std::abs(g(j))));
    Eigen::VectorXd ga, gb;
    cll_loglik(cells, d, a, &ga);
    cll_loglik(cells, d, b, &gb);
    const Eigen::VectorXd hcol = (ga - gb) / (2 * h);
    CHECK((hcol - H.col(j)).cwiseAbs().maxCoeff() < 1e-4 * std::max(1.0, H.col(j).cwiseAbs().maxCoeff()));
  }
}

TEST_CASE("hazard fit recovers a constant monthly hazard") {
  const OutcomePanel panel = simulate_hazard(4, 5000, 0.1, 1.0, 24);
  const HazardFit fit = fit_cll(panel, 24);
  REQUIRE(fit.converged);
  CHECK(std::abs(fit.tau) < 0.15);
  for (int w : {4, 5, 6}) CHECK(std::abs(fit.survival(w, 0, 24) - std::pow(0.9, 24)) < 0.02);
  CHECK(fit.survival(4, 0, 0) == 1.0);
  // The hazard ratio acts on the treated arm.
  const HazardFit hr = fit_cll(simulate_hazard(6, 5000, 0.05, 2.0, 24), 24);
  CHECK(std::abs(hr.tau - std::log(2.0)) < 3 * hr.se_tau + 0.05);
}

TEST_CASE("Newton iterations never lower the likelihood") {
  OutcomePanel panel = simulate_hazard(8, 400, 0.06, 1.2, 24);
  // A month without deaths forces a merged baseline level.
  for (auto& r : panel.rows) {
    if (r.dead[0] == 1) {
      r.dead.assign(24, 0);
    }
  }
  const auto cells = cll_cells(panel, 24);
  std::vector<std::string> warnings;
  const CllDesign d = cll_design(cells, 24, &warnings);
  CHECK_FALSE(warnings.empty());
  CHECK(d.month_group[0] == d.month_group[1]);
  double prev = -INFINITY;
  for (int it = 1; it <= 6; ++it) {
    CllOptions o;
    o.max_iter = it;
    const HazardFit fit = fit_cll(panel, 24, o);
    CHECK(fit.loglik >= prev - 1e-9);
    prev = fit.loglik;
  }
  CHECK_THROWS_AS(fit_cll(panel, 12), ConfigError);
}

TEST_CASE("DTP split") {
  CHECK(dtp_split({6, 12, 24, 36}) == doctest::Approx(18.0));
  CHECK(dtp_split({5, 5, 9}) == doctest::Approx(5.0));
  CHECK_THROWS_AS(dtp_split({7, 7, 7}), EstimationError);
  CHECK_THROWS_AS(dtp_split({}), EstimationError);
  OutcomePanel p;
  p.horizons = {12, 12, 12};
  for (int w : {4, 10, 18, 30}) p.rows.push_back(row(w, 1, w, 1, -1, 12));
  CHECK(subgroup_panel(p, 18, true).rows.size() == 2);
  CHECK(subgroup_panel(p, 18, false).rows.size() == 2);
}

TEST_CASE("pooled regression over months") {
  const OutcomePanel panel = simulate_hazard(12, 1500, 0.05, 1.8, 12);
  const auto pooled = wls_atet_pooled(panel, Outcome::dead, 6);
  CHECK(pooled.analysis_tag == "pooled");
  double mean = 0;
  for (int m = 1; m <= 6; ++m) mean += wls_atet(panel, Outcome::dead, m).beta / 6;
  // Equal arm weights within each stratum make the pooled coefficient close to the average.
  CHECK(std::abs(pooled.beta - mean) < 0.02);
  CHECK(pooled.se > 0);
  CHECK(pooled.beta > 0);
}

TEST_CASE("placebo test on balanced noise rejects rarely") {
  std::mt19937 gen(1);
  std::normal_distribution<double> z;
  std::vector<StratumWeights> sw{{4, {}, {}, {}}};
  std::vector<double> cov;
  for (std::size_t i = 0; i < 400; ++i) {
    cov.push_back(z(gen));
    if (i % 4 == 0) sw[0].treated.push_back(i);
    else {
      sw[0].comparison.push_back(i);
      sw[0].weights.push_back(1.0 / 3);
    }
  }
  const auto r = placebo_test(sw, {"x"}, {cov});
  REQUIRE(r.estimates.size() == 1);
  CHECK(r.estimates[0].analysis_tag == "placebo");
  CHECK(r.estimates[0].p_threshold == doctest::Approx(0.05));
}
