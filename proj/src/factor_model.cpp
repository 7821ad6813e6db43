#include "histctl/factor_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "histctl/errors.hpp"

namespace histctl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// log|S| + tr(S^-1 R) for S = L L' + diag(psi)
double ml_objective(const MatrixXd& R, const MatrixXd& L, const VectorXd& psi) {
  MatrixXd S = L * L.transpose();
  S.diagonal() += psi;
  Eigen::LLT<MatrixXd> llt(S);
  const MatrixXd Sinv_R = llt.solve(R);
  double logdet = 0.0;
  const MatrixXd& U = llt.matrixLLT();
  for (Eigen::Index i = 0; i < U.rows(); ++i) logdet += 2.0 * std::log(U(i, i));
  return logdet + Sinv_R.trace();
}

}  // namespace

MatrixXd FactorModel::implied_correlation() const {
  MatrixXd S = loadings * loadings.transpose();
  S.diagonal() += uniquenesses;
  return S;
}

MatrixXd varimax(const MatrixXd& loadings, MatrixXd* rotation, double eps, int max_iter) {
  const Eigen::Index p = loadings.rows(), k = loadings.cols();
  MatrixXd T = MatrixXd::Identity(k, k);
  if (k < 2) {
    if (rotation) *rotation = T;
    return loadings;
  }
  VectorXd scale = loadings.rowwise().norm();
  for (Eigen::Index i = 0; i < p; ++i)
    if (scale(i) == 0.0) scale(i) = 1.0;
  const MatrixXd x = scale.asDiagonal().inverse() * loadings;

  double d = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const MatrixXd z = x * T;
    const VectorXd col_ss = z.array().square().colwise().sum();
    const MatrixXd B =
        x.transpose() * (z.array().cube().matrix() - z * col_ss.asDiagonal() / static_cast<double>(p));
    Eigen::JacobiSVD<MatrixXd> svd(B, Eigen::ComputeFullU | Eigen::ComputeFullV);
    T = svd.matrixU() * svd.matrixV().transpose();
    const double d_past = d;
    d = svd.singularValues().sum();
    if (d < d_past * (1.0 + eps)) break;
  }
  if (rotation) *rotation = T;
  return scale.asDiagonal() * (x * T);
}

FactorModel fit_factor_model(const MatrixXd& data, int k, std::vector<std::string> names,
                             const FactorOptions& opt) {
  const Eigen::Index p = data.cols();
  if (k < 1 || k >= p) throw ValidationError("factor count must lie in [1, p)");
  std::vector<Eigen::Index> rows;
  for (Eigen::Index i = 0; i < data.rows(); ++i)
    if (data.row(i).allFinite()) rows.push_back(i);
  if (rows.size() < opt.min_rows)
    throw ValidationError("factor model needs at least " + std::to_string(opt.min_rows) +
                          " complete rows, got " + std::to_string(rows.size()));
  if (names.empty())
    for (Eigen::Index j = 0; j < p; ++j) names.push_back("V" + std::to_string(j + 1));
  if (static_cast<Eigen::Index>(names.size()) != p)
    throw ValidationError("variable name count does not match columns");

  FactorModel m;
  m.variables = std::move(names);
  const double n = static_cast<double>(rows.size());
  MatrixXd X(rows.size(), p);
  for (std::size_t i = 0; i < rows.size(); ++i) X.row(i) = data.row(rows[i]);
  m.means = X.colwise().mean();
  X.rowwise() -= m.means.transpose();
  m.sds = (X.array().square().colwise().sum() / (n - 1.0)).sqrt();
  for (Eigen::Index j = 0; j < p; ++j)
    if (!(m.sds(j) > 0.0)) throw ValidationError("constant column '" + m.variables[j] + "'");
  X = X * m.sds.asDiagonal().inverse();
  MatrixXd R = X.transpose() * X / (n - 1.0);
  R.diagonal().setOnes();
  m.correlation = R;

  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(R);
  if (eig.eigenvalues().minCoeff() < -1e-8)
    throw ValidationError("sample correlation matrix is not positive semidefinite");

  // Principal-component start.
  MatrixXd L(p, k);
  for (int f = 0; f < k; ++f) {
    const Eigen::Index c = p - 1 - f;
    L.col(f) = eig.eigenvectors().col(c) * std::sqrt(std::max(eig.eigenvalues()(c), 0.0));
  }
  VectorXd psi = (VectorXd::Ones(p) - L.rowwise().squaredNorm()).cwiseMax(opt.heywood_floor);

  auto clamp = [&](VectorXd& v) {
    for (Eigen::Index j = 0; j < p; ++j)
      if (!(v(j) > opt.heywood_floor)) {
        v(j) = opt.heywood_floor;
        m.heywood = true;
      }
  };

  double obj = ml_objective(R, L, psi);
  const MatrixXd I = MatrixXd::Identity(k, k);
  for (m.iterations = 1; m.iterations <= opt.max_iter; ++m.iterations) {
    // E-step via Woodbury: beta = L' S^-1
    const VectorXd psi_inv = psi.cwiseInverse();
    const MatrixXd Lt_psi = L.transpose() * psi_inv.asDiagonal();
    const MatrixXd M = (I + Lt_psi * L).inverse();
    const MatrixXd beta = M * Lt_psi;
    const MatrixXd beta_R = beta * R;
    const MatrixXd Ezz = I - beta * L + beta_R * beta.transpose();
    // M-step
    L = beta_R.transpose() * Ezz.inverse();
    psi = (R.diagonal() - (L.cwiseProduct(beta_R.transpose())).rowwise().sum());
    clamp(psi);
    const double next = ml_objective(R, L, psi);
    const bool done = std::abs(obj - next) < opt.tol * (1.0 + std::abs(next));
    obj = next;
    if (done) {
      m.converged = true;
      break;
    }
  }
  if (m.heywood)
    m.warnings.push_back("Heywood case: uniqueness clamped to " + std::to_string(opt.heywood_floor));
  if (!m.converged) m.warnings.push_back("factor model EM did not converge");
  m.uniquenesses = psi;

  MatrixXd T;
  MatrixXd rotated = varimax(L, &T);

  // Canonical order and signs.
  VectorXd ss = rotated.array().square().colwise().sum();
  std::vector<int> order(k);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return ss(a) > ss(b); });
  m.loadings.resize(p, k);
  m.rotation.resize(k, k);
  m.ss_loadings.resize(k);
  for (int f = 0; f < k; ++f) {
    const int src = order[f];
    Eigen::Index imax = 0;
    rotated.col(src).cwiseAbs().maxCoeff(&imax);
    const double sign = rotated(imax, src) < 0.0 ? -1.0 : 1.0;
    m.loadings.col(f) = sign * rotated.col(src);
    m.rotation.col(f) = sign * T.col(src);
    m.ss_loadings(f) = ss(src);
  }
  m.proportion_var = m.ss_loadings / static_cast<double>(p);
  m.cumulative_var.resize(k);
  double acc = 0.0;
  for (int f = 0; f < k; ++f) m.cumulative_var(f) = (acc += m.proportion_var(f));
  return m;
}

MatrixXd score_factors(const FactorModel& m, const MatrixXd& rows) {
  // Thomson regression scores Z S^-1 L, S the model-implied correlation
  // (positive definite even when the sample correlation is singular).
  const MatrixXd W = m.implied_correlation().ldlt().solve(m.loadings);
  MatrixXd Z = rows.rowwise() - m.means.transpose();
  Z = Z * m.sds.asDiagonal().inverse();
  return Z * W;
}

VectorXd score_factors(const FactorModel& m, const VectorXd& row) {
  return score_factors(m, MatrixXd(row.transpose())).row(0).transpose();
}

double tucker_congruence(const VectorXd& a, const VectorXd& b) {
  const double den = std::sqrt(a.squaredNorm() * b.squaredNorm());
  return den > 0.0 ? a.dot(b) / den : 0.0;
}

std::string render_factor_table(const FactorModel& m, double blank_below) {
  const Eigen::Index p = m.loadings.rows();
  const int k = m.factors();
  // Group rows by dominant factor, strongest first; weak rows go last.
  std::vector<Eigen::Index> order(p);
  std::iota(order.begin(), order.end(), 0);
  auto group = [&](Eigen::Index i) {
    Eigen::Index f = 0;
    const double mx = m.loadings.row(i).cwiseAbs().maxCoeff(&f);
    return mx < blank_below ? k : static_cast<int>(f);
  };
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    const int ga = group(a), gb = group(b);
    if (ga != gb) return ga < gb;
    if (ga == k) return false;
    return std::abs(m.loadings(a, ga)) > std::abs(m.loadings(b, gb));
  });

  std::size_t label = 14;
  for (const auto& v : m.variables) label = std::max(label, v.size());
  std::ostringstream out;
  char cell[32];
  auto pad = [&](const std::string& s) { return s + std::string(label + 2 - s.size(), ' '); };
  out << pad("");
  for (int f = 0; f < k; ++f) {
    std::snprintf(cell, sizeof cell, "%9s", ("Factor" + std::to_string(f + 1)).c_str());
    out << cell;
  }
  out << '\n';
  for (Eigen::Index i : order) {
    out << pad(m.variables[i]);
    for (int f = 0; f < k; ++f) {
      const double v = m.loadings(i, f);
      if (std::abs(v) < blank_below)
        std::snprintf(cell, sizeof cell, "%9s", "");
      else
        std::snprintf(cell, sizeof cell, "%9.2f", v);
      out << cell;
    }
    out << '\n';
  }
  auto summary = [&](const char* name, const VectorXd& v) {
    out << pad(name);
    for (int f = 0; f < k; ++f) {
      std::snprintf(cell, sizeof cell, "%9.2f", v(f));
      out << cell;
    }
    out << '\n';
  };
  summary("SS loadings", m.ss_loadings);
  summary("Proportion Var", m.proportion_var);
  summary("Cumulative Var", m.cumulative_var);
  return out.str();
}

}  // namespace histctl
