#include <algorithm>
#include <cmath>
#include <map>
#include <tuple>

#include "histctl/errors.hpp"
#include "histctl/estimate.hpp"

namespace histctl {

std::vector<CllCell> cll_cells(const OutcomePanel& panel, int horizon) {
  std::map<std::tuple<int, int, int>, CllCell> acc;
  for (const auto& r : panel.rows) {
    if (static_cast<int>(r.dead.size()) < horizon)
      throw EstimationError("mortality series shorter than the hazard horizon");
    for (int m = 1; m <= horizon; ++m) {
      if (m > 1 && r.dead[m - 2]) break;  // left the risk set
      auto& c = acc[{m, r.w, r.treated}];
      c.month = m;
      c.stratum = r.w;
      c.treated = r.treated;
      (r.dead[m - 1] ? c.events : c.nonevents) += r.weight;
    }
  }
  std::vector<CllCell> out;
  out.reserve(acc.size());
  for (auto& [k, c] : acc) out.push_back(c);
  return out;
}

namespace {

// Groups of consecutive levels; a level without events (or without survivors)
// is merged into its predecessor, leading ones into the first usable level.
std::vector<int> merge_levels(const std::vector<bool>& usable) {
  const int n = static_cast<int>(usable.size());
  std::vector<int> group(n, -1);
  int g = -1;
  for (int i = 0; i < n; ++i) {
    if (usable[i] || g < 0) {
      if (usable[i]) ++g;
      group[i] = std::max(g, 0);
    } else {
      group[i] = g;
    }
  }
  return group;
}

int find_index(const std::vector<int>& v, int x) {
  return static_cast<int>(std::lower_bound(v.begin(), v.end(), x) - v.begin());
}

}  // namespace

CllDesign cll_design(const std::vector<CllCell>& cells, int horizon,
                     std::vector<std::string>* warnings) {
  CllDesign d;
  d.months = horizon;
  for (const auto& c : cells) d.strata.push_back(c.stratum);
  std::sort(d.strata.begin(), d.strata.end());
  d.strata.erase(std::unique(d.strata.begin(), d.strata.end()), d.strata.end());

  std::vector<double> mev(horizon, 0), mnon(horizon, 0), sev(d.strata.size(), 0);
  double total_events = 0;
  for (const auto& c : cells) {
    mev[c.month - 1] += c.events;
    mnon[c.month - 1] += c.nonevents;
    sev[find_index(d.strata, c.stratum)] += c.events;
    total_events += c.events;
  }
  if (!(total_events > 0)) throw EstimationError("no deaths within the hazard horizon");

  std::vector<bool> musable(horizon), susable(d.strata.size());
  for (int m = 0; m < horizon; ++m) {
    musable[m] = mev[m] > 0 && mnon[m] > 0;
    if (!musable[m] && warnings)
      warnings->push_back("month " + std::to_string(m + 1) +
                          (mev[m] > 0 ? " has no survivors" : " has no deaths") +
                          "; merged with a neighbouring month");
  }
  for (std::size_t s = 0; s < d.strata.size(); ++s) {
    susable[s] = sev[s] > 0;
    if (!susable[s] && warnings)
      warnings->push_back("stratum " + std::to_string(d.strata[s]) +
                          " has no deaths; merged with a neighbouring stratum");
  }
  d.month_group = merge_levels(musable);
  d.stratum_group = merge_levels(susable);
  d.month_groups = *std::max_element(d.month_group.begin(), d.month_group.end()) + 1;
  d.stratum_groups = *std::max_element(d.stratum_group.begin(), d.stratum_group.end()) + 1;
  return d;
}

namespace {

struct CellTerms {
  double value, d1, d2;  // log-likelihood, first and second derivative in eta
};

CellTerms cell_terms(double events, double nonevents, double eta) {
  const double mu = std::exp(eta);
  const double em1 = std::expm1(mu);
  CellTerms t{0, 0, 0};
  // log p = log(1 - exp(-mu)), log(1 - p) = -mu.
  if (events > 0) {
    t.value += events * std::log(-std::expm1(-mu));
    t.d1 += events * (std::isinf(em1) ? 0.0 : mu / em1);
    t.d2 += events * (std::isinf(em1) ? 0.0 : mu * (em1 - mu * std::exp(mu)) / (em1 * em1));
  }
  t.value -= nonevents * mu;
  t.d1 -= nonevents * mu;
  t.d2 -= nonevents * mu;
  return t;
}

// Nonzero columns of a cell's design row; the last column is tau.
int cell_columns(const CllCell& c, const CllDesign& d, int* cols) {
  int k = 0;
  cols[k++] = 0;
  const int g = d.month_group[c.month - 1];
  if (g > 0) cols[k++] = g;
  const int h = d.stratum_group[find_index(d.strata, c.stratum)];
  if (h > 0) cols[k++] = d.month_groups - 1 + h;
  if (c.treated) cols[k++] = d.parameters() - 1;
  return k;
}

}  // namespace

double cll_loglik(const std::vector<CllCell>& cells, const CllDesign& d,
                  const Eigen::VectorXd& theta, Eigen::VectorXd* gradient,
                  Eigen::MatrixXd* hessian) {
  const int P = d.parameters();
  if (theta.size() != P) throw ValidationError("parameter vector has the wrong length");
  if (gradient) gradient->setZero(P);
  if (hessian) hessian->setZero(P, P);
  double ll = 0.0;
  int cols[4];
  for (const auto& c : cells) {
    const int k = cell_columns(c, d, cols);
    double eta = 0.0;
    for (int a = 0; a < k; ++a) eta += theta(cols[a]);
    const CellTerms t = cell_terms(c.events, c.nonevents, eta);
    ll += t.value;
    for (int a = 0; a < k; ++a) {
      if (gradient) (*gradient)(cols[a]) += t.d1;
      if (hessian)
        for (int b = 0; b < k; ++b) (*hessian)(cols[a], cols[b]) += t.d2;
    }
  }
  return ll;
}

double HazardFit::survival(int w, int treated, int months) const {
  if (months < 0 || months > horizon) throw ValidationError("survival horizon out of range");
  auto it = std::find(strata.begin(), strata.end(), w);
  if (it == strata.end()) throw ValidationError("stratum " + std::to_string(w) + " not in the fit");
  const double a = alpha[it - strata.begin()];
  double cum = 0.0;
  for (int m = 0; m < months; ++m) cum += std::exp(gamma[m] + a + (treated ? tau : 0.0));
  return std::exp(-cum);
}

HazardFit fit_cll(const OutcomePanel& panel, int horizon, const CllOptions& opt) {
  if (horizon < 24) throw ConfigError("the hazard horizon must be at least 24 months");
  panel.check_month(Outcome::dead, horizon);
  HazardFit fit;
  fit.horizon = horizon;
  const auto cells = cll_cells(panel, horizon);
  const CllDesign d = cll_design(cells, horizon, &fit.warnings);
  const int P = d.parameters();

  double ev = 0, tot = 0;
  for (const auto& c : cells) {
    ev += c.events;
    tot += c.events + c.nonevents;
  }
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(P);
  theta(0) = std::log(-std::log1p(-ev / tot));

  Eigen::VectorXd g;
  Eigen::MatrixXd H;
  double ll = cll_loglik(cells, d, theta, &g, &H);
  bool stalled = false;  // further Newton gain is below rounding of the log-likelihood
  for (fit.iterations = 0; fit.iterations < opt.max_iter; ++fit.iterations) {
    if (g.lpNorm<Eigen::Infinity>() <= opt.tol) break;
    Eigen::VectorXd step = (-H).ldlt().solve(g);
    if (!step.allFinite()) break;
    if (g.dot(step) <= 1e-13 * std::max(1.0, std::abs(ll))) {
      stalled = true;
      break;
    }
    double scale = 1.0, ll_new = ll;
    Eigen::VectorXd trial;
    for (int h = 0; h < 40; ++h, scale *= 0.5) {
      trial = theta + scale * step;
      ll_new = cll_loglik(cells, d, trial);
      if (std::isfinite(ll_new) && ll_new >= ll) break;
    }
    if (!(ll_new >= ll)) break;
    theta = trial;
    ll = cll_loglik(cells, d, theta, &g, &H);
  }
  fit.loglik = ll;
  fit.gradient_norm = g.lpNorm<Eigen::Infinity>();
  fit.converged = stalled || fit.gradient_norm <= opt.tol;
  if (!fit.converged) fit.warnings.push_back("hazard model did not converge");

  fit.gamma.resize(horizon);
  for (int m = 0; m < horizon; ++m) {
    const int gm = d.month_group[m];
    fit.gamma[m] = theta(0) + (gm > 0 ? theta(gm) : 0.0);
  }
  fit.strata = d.strata;
  fit.alpha.resize(d.strata.size());
  for (std::size_t s = 0; s < d.strata.size(); ++s) {
    const int h = d.stratum_group[s];
    fit.alpha[s] = h > 0 ? theta(d.month_groups - 1 + h) : 0.0;
  }
  fit.tau = theta(P - 1);

  // Robust variance from per-patient score contributions.
  std::map<std::size_t, Eigen::VectorXd> scores;
  int cols[4];
  for (const auto& r : panel.rows) {
    auto [it, fresh] = scores.try_emplace(r.patient, Eigen::VectorXd::Zero(P));
    for (int m = 1; m <= horizon; ++m) {
      if (m > 1 && r.dead[m - 2]) break;
      const int y = r.dead[m - 1];
      const CllCell c{m, r.w, r.treated, double(y), double(1 - y)};
      const int k = cell_columns(c, d, cols);
      double eta = 0.0;
      for (int a = 0; a < k; ++a) eta += theta(cols[a]);
      const double u = r.weight * cell_terms(y, 1 - y, eta).d1;
      for (int a = 0; a < k; ++a) it->second(cols[a]) += u;
    }
  }
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(P, P);
  for (const auto& [id, s] : scores) meat += s * s.transpose();
  const Eigen::MatrixXd bread = (-H).ldlt().solve(Eigen::MatrixXd::Identity(P, P));
  const Eigen::MatrixXd V = bread * meat * bread;
  fit.se_tau = std::sqrt(std::max(0.0, V(P - 1, P - 1)));
  return fit;
}

}  // namespace histctl
