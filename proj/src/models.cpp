#include "stabcp/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "stabcp/stability.hpp"

namespace stabcp {

namespace {

double largest_gram_eigenvalue(const Matrix& x) {
  const Matrix gram = x.cols() <= x.rows() ? Matrix(x.transpose() * x)
                                           : Matrix(x * x.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> solver(gram, Eigen::EigenvaluesOnly);
  return std::max(solver.eigenvalues().maxCoeff(), 0.0);
}

Eigen::LLT<Matrix> ridge_factor(const Matrix& features, double lambda_reg) {
  require(lambda_reg >= 0.0, "ridge penalty must be nonnegative");
  const auto m = static_cast<double>(features.rows());
  Matrix a = features.transpose() * features;
  a.diagonal().array() += m * lambda_reg;
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorKind::Numerical,
                "ridge normal equations are singular; use lambda > 0");
  return llt;
}

}  // namespace

Vector FittedModel::predict_rows(const Matrix& rows) const {
  Vector out(rows.rows());
  for (Index i = 0; i < rows.rows(); ++i) out(i) = predict(rows.row(i).transpose());
  return out;
}

LinearModel::LinearModel(Vector coefficients)
    : coefficients_(std::move(coefficients)) {}

double LinearModel::predict(const Eigen::Ref<const Vector>& x) const {
  require(x.size() == coefficients_.size(),
          "feature vector dimension differs from the model");
  return x.dot(coefficients_);
}

RidgeModel::RidgeModel(Vector coefficients)
    : LinearModel(std::move(coefficients)) {}

RidgeModel::RidgeModel(Vector base, Vector slope, double candidate)
    : LinearModel(base + candidate * slope),
      base_(std::move(base)),
      slope_(std::move(slope)) {}

LinearResponse RidgeModel::linear_response(
    const Eigen::Ref<const Vector>& x) const {
  require(has_linear_response(), "ridge fit carries no linear response",
          ErrorKind::State);
  require(x.size() == dim(), "feature vector dimension differs from the model");
  return {x.dot(*base_), x.dot(*slope_)};
}

LadRidgeModel::LadRidgeModel(Vector coefficients, SolverReport report)
    : LinearModel(std::move(coefficients)), report_(std::move(report)) {}

std::shared_ptr<const FittedModel> Regressor::fit_augmented(
    const TabularDataset& data, double candidate) const {
  return fit(data.augmented_features(),
             augmented_targets(data.targets(), candidate));
}

// ---------------------------------------------------------------------------
// Ridge

RidgeModel fit_ridge(const Matrix& features, const Vector& targets,
                     double lambda_reg) {
  require(features.rows() == targets.size(), "rows and targets differ");
  const auto llt = ridge_factor(features, lambda_reg);
  return RidgeModel(llt.solve(features.transpose() * targets));
}

RidgeModel fit_ridge(const TabularDataset& data, double candidate,
                     double lambda_reg) {
  const Matrix x = data.augmented_features();
  const auto llt = ridge_factor(x, lambda_reg);
  // y(z) = y(0) + z e_{n+1}, so beta(z) = A^{-1} X^T y(0) + z A^{-1} x_{n+1}.
  Vector base = llt.solve(data.features().transpose() * data.targets());
  Vector slope = llt.solve(data.test_point());
  return RidgeModel(std::move(base), std::move(slope), candidate);
}

RidgeRegressor::RidgeRegressor(double lambda_reg) : lambda_reg_(lambda_reg) {
  require(lambda_reg >= 0.0, "ridge penalty must be nonnegative");
}

std::shared_ptr<const FittedModel> RidgeRegressor::fit(
    const Matrix& features, const Vector& targets) const {
  return std::make_shared<RidgeModel>(fit_ridge(features, targets, lambda_reg_));
}

std::shared_ptr<const FittedModel> RidgeRegressor::fit_augmented(
    const TabularDataset& data, double candidate) const {
  return std::make_shared<RidgeModel>(fit_ridge(data, candidate, lambda_reg_));
}

RegularityConstants RidgeRegressor::regularity(const TabularDataset& data,
                                               Range range) const {
  const Matrix x = data.augmented_features();
  RegularityConstants c;
  c.lambda_sc = 2.0 * lambda_reg_;
  c.nu = 2.0 * largest_gram_eigenvalue(x) / static_cast<double>(x.rows());
  c.loss_bound_C = bound_loss_C(data, LossSpec::squared(), range);
  c.l_phi = 1.0;
  return c;
}

// ---------------------------------------------------------------------------
// LAD-ridge

double lad_ridge_objective(const Matrix& features, const Vector& targets,
                           const Vector& beta, double lambda_reg) {
  const auto m = static_cast<double>(features.rows());
  return (targets - features * beta).lpNorm<1>() / m +
         lambda_reg * beta.squaredNorm();
}

LadRidgeModel fit_lad_ridge(const Matrix& features, const Vector& targets,
                            const LadRidgeOptions& options) {
  require(options.lambda_reg > 0.0, "LAD-ridge needs lambda > 0");
  require(options.solver_tol > 0.0, "solver tolerance must be positive");
  require(options.max_iter > 0, "max_iter must be positive");
  require(features.rows() == targets.size(), "rows and targets differ");

  const Index m = features.rows();
  const double md = static_cast<double>(m);
  const double lambda = options.lambda_reg;
  const double beta_scale = 1.0 / (2.0 * lambda * md);
  const double curvature = 1.0 / (2.0 * lambda * md * md);
  const double lipschitz = largest_gram_eigenvalue(features) * curvature;

  SolverReport report;
  Vector best_beta = Vector::Zero(features.cols());
  double best_primal = targets.lpNorm<1>() / md;
  report.objective_trace.push_back(best_primal);
  if (lipschitz <= 0.0) {
    // X = 0: beta = 0 is optimal.
    report.converged = true;
    report.objective = best_primal;
    return LadRidgeModel(std::move(best_beta), std::move(report));
  }
  const double step = 1.0 / lipschitz;

  // theta: dual iterate; u = X^T theta; r = X u.
  Vector theta = Vector::Zero(m);
  Vector u = Vector::Zero(features.cols());
  Vector r = Vector::Zero(m);
  Vector theta_prev = theta, u_prev = u, r_prev = r;
  double dual = 0.0;
  double best_dual = 0.0;
  double momentum_t = 1.0;

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    report.iterations = iter;
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum_t * momentum_t));
    const double mom = (momentum_t - 1.0) / t_next;
    // Extrapolated point w and the matching products, by linearity.
    const Vector w = theta + mom * (theta - theta_prev);
    const Vector r_w = r + mom * (r - r_prev);
    const Vector grad = targets / md - curvature * r_w;
    Vector theta_next = (w + step * grad).cwiseMax(-1.0).cwiseMin(1.0);

    Vector u_next = features.transpose() * theta_next;
    Vector r_next = features * u_next;
    const double dual_next =
        theta_next.dot(targets) / md - 0.5 * curvature * u_next.squaredNorm();

    if (dual_next < dual && momentum_t > 1.0) {
      // Objective went down: drop momentum and redo the step from theta. A
      // plain step (no momentum) is always taken; near the optimum it can
      // only lose to rounding.
      momentum_t = 1.0;
      theta_prev = theta;
      u_prev = u;
      r_prev = r;
      continue;
    }
    theta_prev = std::move(theta);
    u_prev = std::move(u);
    r_prev = std::move(r);
    theta = std::move(theta_next);
    u = std::move(u_next);
    r = std::move(r_next);
    dual = dual_next;
    momentum_t = t_next;
    best_dual = std::max(best_dual, dual);

    // beta(theta) = X^T theta / (2 lambda m); X beta = r / (2 lambda m).
    const double primal = (targets - beta_scale * r).lpNorm<1>() / md +
                          lambda * beta_scale * beta_scale * u.squaredNorm();
    if (primal < best_primal) {
      best_primal = primal;
      best_beta = beta_scale * u;
      report.objective_trace.push_back(primal);
    }
    report.duality_gap = best_primal - best_dual;
    if (report.duality_gap <= options.solver_tol) {
      report.converged = true;
      break;
    }
  }
  report.objective = best_primal;
  return LadRidgeModel(std::move(best_beta), std::move(report));
}

LadRidgeModel fit_lad_ridge(const TabularDataset& data, double candidate,
                            const LadRidgeOptions& options) {
  return fit_lad_ridge(data.augmented_features(),
                       augmented_targets(data.targets(), candidate), options);
}

LadRidgeRegressor::LadRidgeRegressor(LadRidgeOptions options)
    : options_(options) {
  require(options.lambda_reg > 0.0, "LAD-ridge needs lambda > 0");
}

std::shared_ptr<const FittedModel> LadRidgeRegressor::fit(
    const Matrix& features, const Vector& targets) const {
  return std::make_shared<LadRidgeModel>(
      fit_lad_ridge(features, targets, options_));
}

RegularityConstants LadRidgeRegressor::regularity(const TabularDataset& data,
                                                  Range range) const {
  const auto m = static_cast<double>(data.size() + 1);
  RegularityConstants c;
  c.rho = data.test_point().norm() / m;
  c.lambda_sc = 2.0 * options_.lambda_reg;
  c.nu = 0.0;
  c.loss_bound_C = bound_loss_C(data, LossSpec::absolute(), range);
  c.l_phi = 1.0;
  // Objective suboptimality eps gives ||beta - beta*|| <= sqrt(2 eps / lambda_sc).
  c.parameter_error = std::sqrt(2.0 * options_.solver_tol / c.lambda_sc);
  return c;
}

// ---------------------------------------------------------------------------
// Interpolated model

InterpolatedModel::InterpolatedModel(
    std::vector<double> knots,
    std::vector<std::shared_ptr<const FittedModel>> knot_models)
    : knots_(std::move(knots)), knot_models_(std::move(knot_models)) {
  require(knots_.size() >= 3, "interpolation needs at least one anchor");
  require(knots_.size() == knot_models_.size(), "one model per knot");
  require(std::adjacent_find(knots_.begin(), knots_.end(),
                             std::greater_equal<>()) == knots_.end(),
          "knots must be strictly increasing");
}

std::pair<std::size_t, double> InterpolatedModel::segment(double z) const {
  const std::size_t last = knots_.size() - 2;
  std::size_t t = 0;
  if (z >= knots_[last]) {
    t = last;
  } else if (z > knots_[1]) {
    t = static_cast<std::size_t>(
            std::upper_bound(knots_.begin(), knots_.end(), z) - knots_.begin()) -
        1;
  }
  const double w = (z - knots_[t]) / (knots_[t + 1] - knots_[t]);
  return {t, w};
}

double InterpolatedModel::predict(const Eigen::Ref<const Vector>& x,
                                  double z) const {
  const auto [t, w] = segment(z);
  if (w == 0.0) return knot_models_[t]->predict(x);
  if (w == 1.0) return knot_models_[t + 1]->predict(x);
  return (1.0 - w) * knot_models_[t]->predict(x) +
         w * knot_models_[t + 1]->predict(x);
}

InterpolatedModel build_interpolated_model(const TabularDataset& data,
                                           const std::vector<double>& anchors,
                                           double z_min, double z_max,
                                           const Regressor& base) {
  require(!anchors.empty(), "interpolation needs at least one anchor");
  std::vector<double> knots;
  knots.reserve(anchors.size() + 2);
  knots.push_back(z_min);
  knots.insert(knots.end(), anchors.begin(), anchors.end());
  knots.push_back(z_max);
  require(std::adjacent_find(knots.begin(), knots.end(),
                             std::greater_equal<>()) == knots.end(),
          "need z_min < anchors (strictly increasing) < z_max");

  std::vector<std::shared_ptr<const FittedModel>> models;
  models.reserve(knots.size());
  for (double z : knots) models.push_back(base.fit_augmented(data, z));
  return InterpolatedModel(std::move(knots), std::move(models));
}

double default_anchor(const TabularDataset& data, const Regressor& regressor) {
  return regressor.fit(data.features(), data.targets())
      ->predict(data.test_point());
}

}  // namespace stabcp
