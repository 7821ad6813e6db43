// Acceptance suite: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>

#include "histctl/design.hpp"
#include "histctl/errors.hpp"
#include "histctl/estimate.hpp"
#include "histctl/factor_model.hpp"
#include "histctl/pipeline.hpp"
#include "histctl/rng.hpp"
#include "histctl/synthetic.hpp"

using namespace histctl;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

class Clock {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
  }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

// One synthetic study taken through balancing.
struct Study {
  GeneratedData data;
  std::vector<StratumData> strata;
  BalanceAll balance;
  std::vector<StratumWeights> weights;
};

Study run_study(const ScenarioConfig& cfg, bool with_severity = false) {
  Study s{generate(cfg), {}, {}, {}};
  const CohortCovariates cov = compute_covariates(s.data.registry, s.data.cohorts);
  ExtraColumns extra;
  if (with_severity) {
    extra.names = {"S0"};
    for (const auto& p : s.data.registry.patients())
      extra.values.push_back({s.data.truth.find(p.id)->severity_at_diagnosis});
  }
  s.strata = assemble_strata(s.data.registry, s.data.cohorts, cov, with_severity ? &extra : nullptr);
  s.balance = balance_all(s.strata, ConstraintSpec{});
  s.weights = stratum_weights(s.strata, s.balance);
  return s;
}

// Sample ATET over the treated patients that entered a balanced stratum.
double analyzed_atet(const Study& s, Outcome o, int m) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& w : s.weights)
    for (std::size_t i : w.treated) {
      const PatientTruth* t = s.data.truth.find(s.data.registry.at(i).id);
      sum += t->potential(o, true, w.w, m) - t->potential(o, false, w.w, m);
      ++n;
    }
  return sum / static_cast<double>(n);
}

double kl(const std::vector<double>& w, const std::vector<double>& q) {
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (w[i] > 0) s += w[i] * std::log(w[i] / q[i]);
  return s;
}

// ------------------------------------------------------------------ criteria

Verdict balance_fidelity() {
  Clock clock;
  const Study s = run_study(ScenarioConfig{});
  const double secs = clock.seconds();
  double worst_violation = 0, worst_smd = 0;
  std::size_t converged = 0;
  for (const auto& [w, r] : s.balance.strata) {
    if (!r.solution.converged) continue;
    ++converged;
    worst_violation = std::max(worst_violation, r.solution.max_constraint_violation);
    for (const auto& c : r.report.covariates) worst_smd = std::max(worst_smd, std::abs(c.smd_after));
  }
  const bool pass = converged > 0 && worst_violation <= 1e-8 && worst_smd < 0.25 && secs < 60;
  return {pass, fmt("%zu converged strata (%zu without common support), max violation %.2e, "
                    "max |SMD| %.2e, %.1f s",
                    converged, s.balance.failures.size(), worst_violation, worst_smd, secs)};
}

Verdict weight_mass() {
  const Study s = run_study(ScenarioConfig{});
  double worst = 0;
  for (const auto& [w, r] : s.balance.strata) {
    const double nt = static_cast<double>(r.report.n_treated);
    worst = std::max(worst, std::abs(r.solution.weights.sum() - nt) / nt);
  }
  return {!s.balance.strata.empty() && worst <= 1e-10,
          fmt("%zu strata, max relative mass error %.2e", s.balance.strata.size(), worst)};
}

// Minimum KL over the feasible set of a micro-instance by grid search. The
// feasible set has n - 2 free coordinates; the last two follow from the
// mass and moment equations.
double grid_minimum(const std::vector<double>& x, double t, const std::vector<double>& q) {
  const std::size_t n = x.size();
  const int grid = n == 4 ? 1500 : 200000;
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> w(n);
  auto close = [&](double used_mass, double used_moment) {
    // w[n-2] + w[n-1] = 1 - used_mass; x[n-2] w[n-2] + x[n-1] w[n-1] = t - used_moment
    const double a = x[n - 2], b = x[n - 1];
    const double rest = 1 - used_mass, rm = t - used_moment;
    w[n - 1] = (rm - a * rest) / (b - a);
    w[n - 2] = rest - w[n - 1];
    if (w[n - 1] < 0 || w[n - 2] < 0) return;
    best = std::min(best, kl(w, q));
  };
  if (n == 2) {
    close(0, 0);
  } else if (n == 3) {
    for (int g = 0; g <= grid; ++g) {
      w[0] = double(g) / grid;
      close(w[0], w[0] * x[0]);
    }
  } else {
    for (int g0 = 0; g0 <= grid; ++g0)
      for (int g1 = 0; g0 + g1 <= grid; ++g1) {
        w[0] = double(g0) / grid;
        w[1] = double(g1) / grid;
        close(w[0] + w[1], w[0] * x[0] + w[1] * x[1]);
      }
  }
  return best;
}

Verdict dual_oracle() {
  Eigen::MatrixXd x3(3, 1);
  x3 << 0, 1, 2;
  Eigen::VectorXd t3(1);
  t3 << 1.5;
  DualOptions opt;
  opt.tol = 1e-12;
  const WeightSolution cf = solve_dual(x3, t3, Eigen::VectorXd::Ones(3), opt);
  const double expect[3] = {0.1162, 0.2676, 0.6162};
  double cf_err = 0;
  for (int i = 0; i < 3; ++i) cf_err = std::max(cf_err, std::abs(cf.weights(i) - expect[i]));

  Rng rng(424242);
  double worst_gap = -std::numeric_limits<double>::infinity();
  int ok = 0;
  for (int rep = 0; rep < 20; ++rep) {
    const int n = 2 + rep % 3;
    std::vector<double> x(n), q(n), p(n);
    for (int i = 0; i < n; ++i) {
      x[i] = rng.normal() * 2;
      q[i] = 0.2 + rng.uniform();
      p[i] = 0.1 + rng.uniform();
    }
    double ps = 0, t = 0, qs = 0;
    for (int i = 0; i < n; ++i) ps += p[i], qs += q[i];
    for (int i = 0; i < n; ++i) t += x[i] * p[i] / ps;
    for (auto& v : q) v /= qs;
    Eigen::MatrixXd X(n, 1);
    Eigen::VectorXd Q(n), T(1);
    for (int i = 0; i < n; ++i) X(i, 0) = x[i], Q(i) = q[i];
    T(0) = t;
    const WeightSolution s = solve_dual(X, T, Q, opt);
    std::vector<double> w(s.weights.data(), s.weights.data() + n);
    const double gap = kl(w, q) - grid_minimum(x, t, q);
    worst_gap = std::max(worst_gap, gap);
    ok += gap <= 1e-6;
  }
  return {ok == 20 && cf_err <= 1e-4,
          fmt("%d/20 micro-instances within 1e-6 of the grid minimum (worst gap %.2e); "
              "closed form (%.4f, %.4f, %.4f), max error %.1e",
              ok, worst_gap, cf.weights(0), cf.weights(1), cf.weights(2), cf_err)};
}

// Calibrates the death log-hazard shift so the population ATET on 24-month
// mortality equals `target`.
double calibrate_death_shift(double target) {
  ScenarioConfig cfg;
  cfg.seed = 777;
  cfg.n_treated_target = 3000;
  cfg.n_comparison_target = 50;
  double lo = 0.0, hi = 3.0;
  for (int it = 0; it < 18; ++it) {
    cfg.true_effects.death = 0.5 * (lo + hi);
    const double atet = generate(cfg).truth.atet(Outcome::dead, 24);
    (atet < target ? lo : hi) = cfg.true_effects.death;
  }
  return 0.5 * (lo + hi);
}

Verdict atet_recovery() {
  Clock clock;
  const double shift = calibrate_death_shift(0.10);
  int covered = 0, reps = 0;
  double abs_bal = 0, abs_unw = 0, truth_sum = 0;
  for (int r = 0; r < 200; ++r) {
    ScenarioConfig cfg;
    cfg.seed = 5000 + r;
    cfg.true_effects.death = shift;
    const Study s = run_study(cfg);
    const OutcomePanel pb = derive_outcomes(s.data.registry, s.weights);
    const OutcomePanel pu =
        derive_outcomes(s.data.registry, uniform_weights(s.strata, s.balance));
    const EffectEstimate eb = wls_atet(pb, Outcome::dead, 24);
    const EffectEstimate eu = wls_atet(pu, Outcome::dead, 24);
    const double truth = analyzed_atet(s, Outcome::dead, 24);
    covered += eb.ci_lo <= truth && truth <= eb.ci_hi;
    abs_bal += std::abs(eb.beta - truth);
    abs_unw += std::abs(eu.beta - truth);
    truth_sum += truth;
    ++reps;
  }
  const double secs = clock.seconds();
  const double coverage = double(covered) / reps;
  const double ratio = abs_bal / abs_unw;
  return {coverage >= 0.90 && ratio <= 0.5 && secs < 900,
          fmt("death shift %.4f, mean analyzed ATET %.4f; coverage %.3f over %d reps, "
              "mean |bias| balanced %.4f vs unweighted %.4f (ratio %.2f), %.0f s",
              shift, truth_sum / reps, coverage, reps, abs_bal / reps, abs_unw / reps, ratio,
              secs)};
}

// Plain-arithmetic inverse of a small symmetric matrix by Gauss-Jordan.
std::vector<std::vector<double>> invert(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) inv[i][i] = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    std::swap(inv[c], inv[piv]);
    const double d = a[c][c];
    for (std::size_t k = 0; k < n; ++k) a[c][k] /= d, inv[c][k] /= d;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const double f = a[r][c];
      for (std::size_t k = 0; k < n; ++k) a[r][k] -= f * a[c][k], inv[r][k] -= f * inv[c][k];
    }
  }
  return inv;
}

Verdict ehw() {
  // Two strata, both arms in each; columns intercept, stratum 8, treatment.
  const std::vector<WlsObservation> obs = {{1.0, 1.0, 4, 1}, {0.0, 0.7, 4, 0}, {1.0, 0.3, 4, 0},
                                           {0.0, 1.0, 8, 1}, {1.0, 1.0, 8, 1}, {0.0, 2.0, 8, 0}};
  const WlsFit fit = fit_wls(obs);
  const std::size_t n = obs.size(), p = 3;
  std::vector<std::vector<double>> X(n, std::vector<double>(p));
  for (std::size_t i = 0; i < n; ++i)
    X[i] = {1.0, obs[i].stratum == 8 ? 1.0 : 0.0, double(obs[i].treated)};
  std::vector<std::vector<double>> xtwx(p, std::vector<double>(p, 0.0));
  std::vector<double> xtwy(p, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < p; ++a) {
      xtwy[a] += X[i][a] * obs[i].weight * obs[i].y;
      for (std::size_t b = 0; b < p; ++b) xtwx[a][b] += X[i][a] * obs[i].weight * X[i][b];
    }
  const auto bread = invert(xtwx);
  std::vector<double> beta(p, 0.0);
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < p; ++b) beta[a] += bread[a][b] * xtwy[b];
  std::vector<std::vector<double>> meat(p, std::vector<double>(p, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    double fitted = 0;
    for (std::size_t a = 0; a < p; ++a) fitted += X[i][a] * beta[a];
    const double u = obs[i].weight * (obs[i].y - fitted);
    for (std::size_t a = 0; a < p; ++a)
      for (std::size_t b = 0; b < p; ++b) meat[a][b] += u * u * X[i][a] * X[i][b];
  }
  double worst = std::abs(fit.beta - beta[2]);
  for (std::size_t a = 0; a < p; ++a)
    for (std::size_t b = 0; b < p; ++b) {
      double v = 0;
      for (std::size_t c = 0; c < p; ++c)
        for (std::size_t d = 0; d < p; ++d) v += bread[a][c] * meat[c][d] * bread[d][b];
      worst = std::max(worst, std::abs(fit.covariance(a, b) - v));
    }
  return {worst <= 1e-10, fmt("beta %.6f, se %.6f, max abs difference from direct arithmetic %.2e",
                              fit.beta, fit.se, worst)};
}

// Discrete-time survival under the complementary log-log model with month
// effects gamma, stratum effects and treatment shift tau.
OutcomePanel cll_panel(Rng& rng, int n, double tau, int horizon) {
  OutcomePanel p;
  p.horizons = {horizon, horizon, horizon};
  const int strata[3] = {4, 9, 20};
  const double alpha[3] = {0.0, 0.3, -0.2};
  for (int i = 0; i < n; ++i) {
    const int s = i % 3;
    const int treated = rng.uniform() < 0.35;
    PanelRow r{std::size_t(i), treated, strata[s], 1.0, {}, {}, {}};
    r.dead.assign(horizon, 0);
    r.pain.assign(horizon, 0);
    r.sre.assign(horizon, 0);
    for (int m = 0; m < horizon; ++m) {
      const double eta = -3.2 + 0.02 * m + alpha[s] + (treated ? tau : 0.0);
      if (rng.uniform() < -std::expm1(-std::exp(eta))) {
        for (int k = m; k < horizon; ++k) r.dead[k] = 1;
        break;
      }
    }
    p.rows.push_back(std::move(r));
  }
  return p;
}

Verdict cll() {
  // Gradient check.
  Rng rng(6161);
  const OutcomePanel panel = cll_panel(rng, 800, 0.4, 24);
  const auto cells = cll_cells(panel, 24);
  const CllDesign d = cll_design(cells, 24);
  Eigen::VectorXd theta(d.parameters());
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = 0.2 * rng.normal();
  theta(0) = -3.0;
  Eigen::VectorXd g;
  cll_loglik(cells, d, theta, &g);
  double worst_rel = 0;
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(theta(j)));
    Eigen::VectorXd a = theta, b = theta;
    a(j) += h;
    b(j) -= h;
    const double fd = (cll_loglik(cells, d, a) - cll_loglik(cells, d, b)) / (2 * h);
    worst_rel = std::max(worst_rel, std::abs(fd - g(j)) / std::max(1.0, std::abs(g(j))));
  }

  // Recovery of tau.
  const double tau = 0.4;
  std::vector<double> est;
  for (int r = 0; r < 200; ++r) {
    Rng rr(90000 + r);
    est.push_back(fit_cll(cll_panel(rr, 1500, tau, 24), 24).tau);
  }
  double mean = 0, var = 0;
  for (double e : est) mean += e / est.size();
  for (double e : est) var += (e - mean) * (e - mean) / (est.size() - 1);
  const double mcse = std::sqrt(var / est.size());

  // Null survival at a constant 10% monthly hazard.
  Rng nr(31337);
  OutcomePanel null;
  null.horizons = {24, 24, 24};
  for (int i = 0; i < 5000; ++i) {
    PanelRow r{std::size_t(i), i % 2, 4 + 3 * (i % 3), 1.0, {}, {}, {}};
    r.dead.assign(24, 0);
    r.pain.assign(24, 0);
    r.sre.assign(24, 0);
    for (int m = 0; m < 24; ++m)
      if (nr.uniform() < 0.1) {
        for (int k = m; k < 24; ++k) r.dead[k] = 1;
        break;
      }
    null.rows.push_back(std::move(r));
  }
  const HazardFit nf = fit_cll(null, 24);
  const double s24 = std::pow(0.9, 24);
  // Binomial standard error of a survival proportion at n/6 per stratum-arm cell.
  const double tol = 3 * std::sqrt(s24 * (1 - s24) / (5000.0 / 6));
  double worst_s = 0;
  for (int w : {4, 7, 10})
    for (int t : {0, 1}) worst_s = std::max(worst_s, std::abs(nf.survival(w, t, 24) - s24));

  const bool pass = worst_rel < 1e-6 && std::abs(mean - tau) <= 3 * mcse && worst_s <= tol;
  return {pass, fmt("gradient max rel error %.2e; tau %.3f recovered as %.4f (MC SE %.4f); "
                    "null S(24) max deviation %.4f from %.4f (tolerance %.4f)",
                    worst_rel, tau, mean, mcse, worst_s, s24, tol)};
}

Verdict multiplicity() {
  const double t = bonferroni({}, 3, 0.05).threshold;
  PipelineConfig cfg;
  const bool exact = t == 0.05 / 3.0 && cfg.threshold() == 0.05 / 3.0;
  const std::string shown = fmt("%.7f", t);
  const std::vector<double> p = {0.0166, 0.0168};
  const auto r = bonferroni(p, 3, 0.05);
  return {exact && shown == "0.0166667" && r.significant[0] && !r.significant[1],
          "threshold " + shown + " (0.05/3); p = 0.0166 rejects, p = 0.0168 does not"};
}

// The truth is compared with the bound interval widened by sampling error,
// [lower CI low, upper CI high]; the share inside the point bounds is reported
// as well.
Verdict bounds() {
  int runs = 0, monotone_fits = 0, ordered = 0, inside = 0, inside_point = 0, checks = 0;
  double worst_gap = 0;
  for (int r = 0; r < 200; ++r) {
    ScenarioConfig cfg;
    cfg.seed = 8000 + r;
    cfg.true_effects.death = 0.8;
    cfg.true_effects.pain = -0.4;
    cfg.true_effects.sre = 0.4;
    const Study s = run_study(cfg);
    const OutcomePanel panel = derive_outcomes(s.data.registry, s.weights);
    ++runs;
    for (Outcome o : {Outcome::pain, Outcome::sre}) {
      const MorbidityBounds b = morbidity_bounds(panel, o, 12);
      const double truth = analyzed_atet(s, o, 12);
      ++checks;
      inside += b.lower.ci_lo <= truth && truth <= b.upper.ci_hi;
      inside_point += b.lower.beta <= truth && truth <= b.upper.beta;
      if (b.monotone) {
        ++monotone_fits;
        const double cc = b.complete_case.beta;
        const bool ok = b.lower.beta <= cc && cc <= b.upper.beta;
        ordered += ok;
        if (!ok) worst_gap = std::max({worst_gap, b.lower.beta - cc, cc - b.upper.beta});
      }
    }
  }
  const double share = double(inside) / checks;
  return {ordered == monotone_fits && share >= 0.95,
          fmt("%d/%d monotone fits ordered lower <= complete-case <= upper (worst miss %.4f); "
              "truth inside [lower CI low, upper CI high] in %.3f and inside the point bounds "
              "in %.3f of %d (pain and SRE at month 12, %d replications)",
              ordered, monotone_fits, worst_gap, share, double(inside_point) / checks, checks,
              runs)};
}

Verdict placebo() {
  const int reps = 300;
  const char* names[3] = {"PSA", "GLEASON", "METS_AT_DX"};
  std::vector<int> with(3, 0), without(3, 0);
  for (int r = 0; r < reps; ++r) {
    ScenarioConfig cfg;
    cfg.seed = 12000 + r;
    for (bool full : {true, false}) {
      const Study s = run_study(cfg, full);
      const auto rows = emit_placebo_covariates(s.data.registry, s.data.truth, cfg);
      const double nan = std::numeric_limits<double>::quiet_NaN();
      std::vector<std::vector<double>> values(3, std::vector<double>(s.data.registry.size(), nan));
      for (const auto& row : rows) {
        const auto i = s.data.registry.index_of(row.patient_id);
        if (!i) continue;
        values[0][*i] = row.psa_level;
        values[1][*i] = row.gleason_score;
        values[2][*i] = row.metastasis_at_diagnosis;
      }
      const PlaceboResult p =
          placebo_test(s.weights, {names[0], names[1], names[2]}, values, 0.05);
      for (int k = 0; k < 3; ++k) (full ? with : without)[k] += p.estimates[k].significant;
    }
  }
  const double alpha = 0.05 / 3;
  const double mcse = std::sqrt(alpha * (1 - alpha) / reps);
  bool calibrated = true, higher = true;
  std::string detail;
  for (int k = 0; k < 3; ++k) {
    const double a = double(with[k]) / reps, b = double(without[k]) / reps;
    calibrated = calibrated && std::abs(a - alpha) <= 2 * mcse;
    higher = higher && b > a;
    detail += fmt("%s%s %.4f balanced / %.4f severity withheld", k ? "; " : "", names[k], a, b);
  }
  return {calibrated && higher,
          detail + fmt(" (nominal %.4f, 2 MC SE %.4f, %d reps)", alpha, 2 * mcse, reps)};
}

Verdict factors() {
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(42, 5);
  for (int j = 0; j < 42; ++j) L(j, j % 5) = 0.55 + 0.3 * ((j * 7) % 11) / 10.0;
  Rng rng(2000);
  Eigen::MatrixXd X(2000, 42);
  for (int i = 0; i < 2000; ++i) {
    Eigen::VectorXd f(5);
    for (int k = 0; k < 5; ++k) f(k) = rng.normal();
    for (int j = 0; j < 42; ++j)
      X(i, j) = L.row(j).dot(f) + std::sqrt(1 - L.row(j).squaredNorm()) * rng.normal();
  }
  const FactorModel m = fit_factor_model(X, 5);
  std::vector<bool> used(5, false);
  double worst = 1.0;
  for (int k = 0; k < 5; ++k) {
    double best = 0;
    int arg = 0;
    for (int r = 0; r < 5; ++r)
      if (!used[r] && std::abs(tucker_congruence(L.col(k), m.loadings.col(r))) > best)
        best = std::abs(tucker_congruence(L.col(k), m.loadings.col(r))), arg = r;
    used[arg] = true;
    worst = std::min(worst, best);
  }
  const std::string table = render_factor_table(m);
  bool layout = true;
  for (const char* row : {"SS loadings", "Proportion Var", "Cumulative Var"})
    layout = layout && table.find(row) != std::string::npos;
  for (int k = 1; k <= 5; ++k) layout = layout && table.find("Factor" + std::to_string(k)) != std::string::npos;
  return {worst > 0.95 && layout,
          fmt("minimum per-factor Tucker congruence %.4f at n = 2000; table rows %s", worst,
              layout ? "present" : "missing")};
}

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / fmt("histctl-accept-%d", int(::getpid()));
  fs::remove_all(root);
  std::vector<std::string> tables;
  for (int workers : {1, 4}) {
    PipelineConfig cfg;
    cfg.paths.out_dir = (root / fmt("w%d", workers)).string();
    cfg.workers = workers;
    cfg.scenario.true_effects.death = 0.5;
    cmd_generate(cfg);
    cmd_run(cfg);
    std::ifstream in(fs::path(cfg.paths.out_dir) / "estimates.csv", std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    tables.push_back(ss.str());
  }
  fs::remove_all(root);
  const bool same = !tables[0].empty() && tables[0] == tables[1];
  return {same, fmt("estimates.csv %s between 1 and 4 workers (%zu bytes)",
                    same ? "byte-identical" : "DIFFERS", tables[0].size())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  int only = 0;
  app.add_option("--criterion", only, "run a single criterion (1-11); all when omitted")
      ->check(CLI::Range(1, 11));
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"balance fidelity", balance_fidelity},
      {"weight-mass exactness", weight_mass},
      {"dual-solver oracle", dual_oracle},
      {"ATET recovery", atet_recovery},
      {"EHW correctness", ehw},
      {"CLL correctness", cll},
      {"multiplicity", multiplicity},
      {"bounds", bounds},
      {"placebo calibration", placebo},
      {"factor analysis", factors},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && int(i) + 1 != only) continue;
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %2zu %s  %s: %s\n", i + 1, v.pass ? "PASS" : "FAIL",
                criteria[i].first.c_str(), v.detail.c_str());
    std::fflush(stdout);
    failed += !v.pass;
  }
  return failed ? 1 : 0;
}
