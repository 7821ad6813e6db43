#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "histctl/balance.hpp"
#include "histctl/errors.hpp"

namespace histctl {

double Feature::eval(const double* row, Eigen::Index stride) const {
  double v = row[a * stride];
  if (b >= 0) v *= row[b * stride];
  return power == 1 ? v : std::pow(v, power);
}

Eigen::MatrixXd ConstraintSet::evaluate(const Eigen::MatrixXd& rows) const {
  Eigen::MatrixXd out(rows.rows(), static_cast<Eigen::Index>(features.size()));
  const Eigen::Index stride = rows.outerStride();
  for (Eigen::Index i = 0; i < rows.rows(); ++i)
    for (std::size_t r = 0; r < features.size(); ++r)
      out(i, static_cast<Eigen::Index>(r)) = features[r].eval(rows.data() + i, stride);
  return out;
}

ConstraintSet build_constraints(const Eigen::MatrixXd& treated,
                                const std::vector<std::string>& names,
                                const ConstraintSpec& spec, const Eigen::MatrixXd* comparison) {
  if (treated.rows() == 0) throw ValidationError("no treated rows to build constraints from");
  if (static_cast<std::size_t>(treated.cols()) != names.size())
    throw ValidationError("covariate names do not match the matrix width");
  if (!treated.allFinite()) throw ValidationError("treated covariates contain non-finite values");

  auto column = [&](const std::string& n) {
    auto it = std::find(names.begin(), names.end(), n);
    if (it == names.end()) throw ConfigError("unknown covariate in constraint spec: " + n);
    return static_cast<int>(it - names.begin());
  };

  ConstraintSet set;
  std::set<std::tuple<int, int, int>> seen;
  auto add = [&](int a, int b, int power) {
    if (b >= 0 && b < a) std::swap(a, b);
    if (b == a) {  // x*x is the square of x
      b = -1;
      power *= 2;
    }
    if (!seen.insert({a, b, power}).second) return;
    Feature f{names[a], a, b, power};
    if (b >= 0) f.name += "*" + names[b];
    if (power > 1) f.name += "^" + std::to_string(power);
    set.features.push_back(std::move(f));
  };

  if (spec.base.empty()) {
    for (int c = 0; c < static_cast<int>(names.size()); ++c) add(c, -1, 1);
  } else {
    for (const auto& n : spec.base) add(column(n), -1, 1);
  }
  for (const auto& [x, y] : spec.interactions) add(column(x), column(y), 1);
  for (const auto& [x, degree] : spec.polynomials) {
    if (degree < 1) throw ConfigError("polynomial degree must be >= 1 for " + x);
    for (int d = 1; d <= degree; ++d) add(column(x), -1, d);
  }
  for (const auto& x : spec.variance) {
    add(column(x), -1, 1);
    add(column(x), -1, 2);
  }

  Eigen::MatrixXd tf = set.evaluate(treated);
  Eigen::MatrixXd cf;
  if (comparison) {
    if (comparison->cols() != treated.cols())
      throw ValidationError("comparison covariates do not match the treated width");
    cf = set.evaluate(*comparison);
  }
  std::vector<Feature> kept;
  std::vector<double> targets;
  for (std::size_t r = 0; r < set.features.size(); ++r) {
    const auto col = static_cast<Eigen::Index>(r);
    if (comparison) {
      double lo = std::min(tf.col(col).minCoeff(), cf.rows() ? cf.col(col).minCoeff() : INFINITY);
      double hi = std::max(tf.col(col).maxCoeff(), cf.rows() ? cf.col(col).maxCoeff() : -INFINITY);
      if (hi - lo <= 1e-12 * std::max(1.0, std::abs(hi))) {
        set.warnings.push_back("constant column " + set.features[r].name + " dropped");
        continue;
      }
    }
    kept.push_back(set.features[r]);
    targets.push_back(tf.col(col).mean());
  }
  set.features = std::move(kept);
  set.targets = Eigen::Map<Eigen::VectorXd>(targets.data(), static_cast<Eigen::Index>(targets.size()));
  return set;
}

}  // namespace histctl
