#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "histctl/balance.hpp"
#include "histctl/errors.hpp"

using namespace histctl;

namespace {

double kl(const Eigen::VectorXd& w, const Eigen::VectorXd& q) {
  double s = 0;
  for (Eigen::Index i = 0; i < w.size(); ++i)
    if (w(i) > 0) s += w(i) * std::log(w(i) / q(i));
  return s;
}

DualOptions opts(double total = 1.0) {
  DualOptions o;
  o.tol = 1e-10;
  o.max_iter = 200;
  o.w_total = total;
  return o;
}

StratumData random_stratum(int w, std::uint32_t seed, int nt, int nc) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> z;
  std::bernoulli_distribution coin(0.4);
  StratumData d;
  d.w = w;
  d.names = {"age", "visits", "flag"};
  d.treated.resize(nt, 3);
  d.comparison.resize(nc, 3);
  for (int i = 0; i < nt; ++i) d.treated.row(i) << 0.3 + z(gen), 1.2 + z(gen), coin(gen);
  for (int i = 0; i < nc; ++i) d.comparison.row(i) << z(gen), 1.0 + z(gen), coin(gen);
  for (int i = 0; i < nt; ++i) d.treated_index.push_back(i);
  for (int i = 0; i < nc; ++i) d.comparison_index.push_back(nt + i);
  return d;
}

}  // namespace

TEST_CASE("closed-form three-point solution") {
  Eigen::MatrixXd x(3, 1);
  x << 0, 1, 2;
  Eigen::VectorXd t(1);
  t << 1.5;
  const auto s = solve_dual(x, t, Eigen::VectorXd::Ones(3), opts());
  REQUIRE(s.converged);
  // Weights proportional to r^x with r^2 - r - 3 = 0.
  const double r = (1 + std::sqrt(13.0)) / 2;
  const double z = 1 + r + r * r;
  CHECK(s.weights(0) == doctest::Approx(1 / z).epsilon(1e-9));
  CHECK(s.weights(1) == doctest::Approx(r / z).epsilon(1e-9));
  CHECK(s.weights(2) == doctest::Approx(r * r / z).epsilon(1e-9));
  CHECK(s.weights(0) == doctest::Approx(0.1162).epsilon(1e-3));
  CHECK(s.weights(2) == doctest::Approx(0.6162).epsilon(1e-3));
  CHECK(s.multipliers(0) == doctest::Approx(std::log(r)).epsilon(1e-8));
}

TEST_CASE("grid search agrees on a one-dimensional feasible segment") {
  // n = 3, one constraint: feasible weights form a segment parameterised by w0.
  Eigen::MatrixXd x(3, 1);
  x << -1, 0.5, 3;
  Eigen::VectorXd t(1);
  t << 0.8;
  Eigen::VectorXd q(3);
  q << 2, 1, 0.5;
  const auto s = solve_dual(x, t, q, opts());
  REQUIRE(s.converged);
  const Eigen::VectorXd qn = q / q.sum();
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_w(3);
  for (int g = 1; g < 200000; ++g) {
    const double w0 = g / 200000.0;
    // w1 + w2 = 1 - w0, -w0 + 0.5 w1 + 3 w2 = 0.8
    const double w2 = (0.8 + w0 - 0.5 * (1 - w0)) / 2.5;
    const double w1 = 1 - w0 - w2;
    if (w1 <= 0 || w2 <= 0) continue;
    Eigen::VectorXd w(3);
    w << w0, w1, w2;
    const double v = kl(w, qn);
    if (v < best) {
      best = v;
      best_w = w;
    }
  }
  CHECK(kl(s.weights, qn) <= best + 1e-9);
  CHECK((s.weights - best_w).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("feasible perturbations never lower the objective") {
  std::mt19937 gen(3);
  std::normal_distribution<double> z;
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 6, k = 2;
    Eigen::MatrixXd x(n, k);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < k; ++j) x(i, j) = z(gen);
    Eigen::VectorXd p = Eigen::VectorXd::Constant(n, 0.05);
    p(rep % n) += 0.7;
    const Eigen::VectorXd t = x.transpose() * p;
    const Eigen::VectorXd q = Eigen::VectorXd::Ones(n);
    const auto s = solve_dual(x, t, q, opts());
    REQUIRE(s.converged);
    const Eigen::VectorXd qn = q / n;
    // Null space of [1, X]^T: moves that keep mass and moments.
    Eigen::MatrixXd a(k + 1, n);
    a.row(0).setOnes();
    a.bottomRows(k) = x.transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    const Eigen::MatrixXd null = lu.kernel();
    const double base = kl(s.weights, qn);
    for (int d = 0; d < 50; ++d) {
      Eigen::VectorXd c(null.cols());
      for (Eigen::Index j = 0; j < c.size(); ++j) c(j) = z(gen);
      Eigen::VectorXd step = null * c;
      step *= 0.01 * s.weights.minCoeff() / step.cwiseAbs().maxCoeff();
      CHECK(kl(s.weights + step, qn) >= base - 1e-12);
    }
  }
}

TEST_CASE("weights reproduce the target mass and moments") {
  const StratumData d = random_stratum(6, 11, 30, 400);
  ConstraintSpec spec;
  spec.tolerance = 1e-10;
  const auto set = build_constraints(d.treated, d.names, spec, &d.comparison);
  const Eigen::MatrixXd f = set.evaluate(d.comparison);
  for (double total : {1.0, 30.0}) {
    const auto s = solve_dual(f, set.targets, Eigen::VectorXd::Ones(400), opts(total));
    REQUIRE(s.converged);
    CHECK(std::abs(s.weights.sum() - total) <= 1e-10 * total);
    CHECK((s.weights.array() >= 0).all());
    const Eigen::VectorXd m = f.transpose() * s.weights / total;
    CHECK((m - set.targets).cwiseAbs().maxCoeff() < 1e-8);
    CHECK(s.max_constraint_violation <= 1e-8);
  }
}

TEST_CASE("targets outside the comparison hull raise CommonSupportError") {
  Eigen::MatrixXd x(4, 1);
  x << 0, 1, 2, 3;
  Eigen::VectorXd t(1);
  t << 3.5;
  CHECK_THROWS_AS(solve_dual(x, t, Eigen::VectorXd::Ones(4), opts()), CommonSupportError);
  CHECK_FALSE(lp_feasible(x, t, 1e-9));
  t << 2.5;
  Eigen::VectorXd p;
  REQUIRE(lp_feasible(x, t, 1e-9, &p));
  CHECK(p.sum() == doctest::Approx(1.0));
  CHECK((x.transpose() * p)(0) == doctest::Approx(2.5));
  CHECK(p.minCoeff() >= -1e-12);
}

TEST_CASE("a target on the hull boundary pins weights to the face") {
  Eigen::MatrixXd x(4, 1);
  x << 0, 1, 1, 1;
  Eigen::VectorXd t(1);
  t << 1.0;
  const auto s = solve_dual(x, t, Eigen::VectorXd::Ones(4), opts());
  CHECK(s.weights(0) < 1e-12);
  CHECK(s.weights.sum() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.weights(1) == doctest::Approx(1.0 / 3).epsilon(1e-9));
}

TEST_CASE("collinear constraints are dropped") {
  Eigen::MatrixXd x(5, 3);
  x << 0, 0, 1, 1, 2, 0, 2, 4, 1, 3, 6, 0, 4, 8, 1;
  Eigen::VectorXd t(3);
  t << 2.2, 4.4, 0.5;
  const auto s = solve_dual(x, t, Eigen::VectorXd::Ones(5), opts(), {"x", "2x", "b"});
  REQUIRE(s.converged);
  CHECK(s.dropped.size() == 1);
  CHECK((x.transpose() * s.weights - t).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("constraint construction") {
  Eigen::MatrixXd tr(2, 2), co(3, 2);
  tr << 1, 2, 3, 2;
  co << 0, 2, 1, 2, 2, 2;
  ConstraintSpec spec;
  spec.interactions = {{"b", "a"}, {"a", "a"}};
  spec.polynomials = {{"a", 3}};
  spec.variance = {"a"};
  const auto set = build_constraints(tr, {"a", "b"}, spec);
  std::vector<std::string> names;
  for (const auto& f : set.features) names.push_back(f.name);
  CHECK(names == std::vector<std::string>{"a", "b", "a*b", "a^2", "a^3"});
  CHECK(set.targets(0) == doctest::Approx(2.0));
  CHECK(set.targets(2) == doctest::Approx(4.0));
  CHECK(set.targets(3) == doctest::Approx(5.0));
  CHECK(set.targets(4) == doctest::Approx(14.0));

  // b is constant over treated and comparison rows together.
  const auto pooled = build_constraints(tr, {"a", "b"}, ConstraintSpec{}, &co);
  REQUIRE(pooled.features.size() == 1);
  CHECK(pooled.features[0].name == "a");
  CHECK(pooled.warnings.size() == 1);

  ConstraintSpec bad;
  bad.base = {"missing"};
  CHECK_THROWS_AS(build_constraints(tr, {"a", "b"}, bad), ConfigError);
}

TEST_CASE("standardized mean differences") {
  Eigen::MatrixXd tr(3, 2), co(4, 2);
  tr << 1, 5, 2, 5, 3, 5;
  co << 0, 4, 0, 6, 2, 4, 2, 6;
  Eigen::VectorXd w(4);
  w << 0.25, 0.25, 0.25, 0.25;
  const auto r = balance_report(4, tr, co, {"x", "const"}, w);
  REQUIRE(r.covariates.size() == 2);
  // Sample SD of {1, 2, 3} is 1.
  CHECK(r.covariates[0].smd_before == doctest::Approx(1.0));
  CHECK(r.covariates[0].weighted_mean == doctest::Approx(1.0));
  // Treated SD is zero: the comparison SD (about 1.1547) takes over.
  CHECK(r.covariates[1].smd_before == doctest::Approx(0.0));
  CHECK(std::isfinite(r.covariates[1].smd_after));
  CHECK(r.share_above_001 == doctest::Approx(1.0));
}

TEST_CASE("balance_all is independent of the worker count") {
  std::vector<StratumData> strata;
  for (int w = 4; w < 10; ++w) strata.push_back(random_stratum(w, 100 + w, 12, 150));
  ConstraintSpec spec;
  const BalanceAll one = balance_all(strata, spec, 1);
  const BalanceAll many = balance_all(strata, spec, 4);
  REQUIRE(one.strata.size() == many.strata.size());
  for (const auto& [w, r] : one.strata) {
    const auto& o = many.strata.at(w).solution.weights;
    REQUIRE(o.size() == r.solution.weights.size());
    for (Eigen::Index i = 0; i < o.size(); ++i) CHECK(o(i) == r.solution.weights(i));
    CHECK(r.report.max_abs_smd_after < 1e-6);
  }
  CHECK(one.log == many.log);
}

TEST_CASE("an infeasible stratum is recorded as a failure") {
  std::vector<StratumData> strata{random_stratum(5, 1, 10, 100)};
  StratumData bad = random_stratum(7, 2, 5, 50);
  bad.treated.col(0).array() += 100.0;
  strata.push_back(bad);
  const BalanceAll r = balance_all(strata, ConstraintSpec{}, 2);
  CHECK(r.strata.count(5) == 1);
  CHECK(r.strata.count(7) == 0);
  REQUIRE(r.failures.size() == 1);
  CHECK(r.failures[0].w == 7);
}
