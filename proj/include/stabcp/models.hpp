#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stabcp/types.hpp"

namespace stabcp {

/// Regularity constants a model declares so that stability bounds can be
/// derived for it. Unset optionals mean the property does not hold.
struct RegularityConstants {
  /// Lipschitz constant of the loss, in the parameter space the bound uses.
  std::optional<double> rho;
  /// Strong-convexity modulus of the regularizer (or of the whole objective).
  double lambda_sc = 0.0;
  /// Smoothness of the loss in the parameters; 0 means not smooth.
  double nu = 0.0;
  /// sup of the optimal loss over the candidate range.
  double loss_bound_C = 0.0;
  /// Lipschitz factor of the feature map in x^T beta; 1 for linear models.
  double l_phi = 1.0;
  /// Bound on ||beta_returned - beta_exact|| from the solver's certificate.
  double parameter_error = 0.0;
};

/// An immutable fitted predictor.
class FittedModel {
 public:
  virtual ~FittedModel() = default;

  virtual Index dim() const = 0;
  virtual double predict(const Eigen::Ref<const Vector>& x) const = 0;

  /// Predictions for every row of `rows`.
  Vector predict_rows(const Matrix& rows) const;
};

/// x^T beta predictor.
class LinearModel : public FittedModel {
 public:
  explicit LinearModel(Vector coefficients);

  Index dim() const override { return coefficients_.size(); }
  double predict(const Eigen::Ref<const Vector>& x) const override;
  const Vector& coefficients() const { return coefficients_; }

 private:
  Vector coefficients_;
};

/// mu_z(x) = a(x) + b(x) z for a ridge fit on augmented data.
struct LinearResponse {
  double a = 0.0;
  double b = 0.0;
};

class RidgeModel : public LinearModel {
 public:
  /// Plain fit: no dependence on an augmented candidate.
  explicit RidgeModel(Vector coefficients);

  /// Fit on D_{n+1}(z): coefficients = base + candidate * slope.
  RidgeModel(Vector base, Vector slope, double candidate);

  bool has_linear_response() const { return slope_.has_value(); }
  LinearResponse linear_response(const Eigen::Ref<const Vector>& x) const;

 private:
  std::optional<Vector> base_;
  std::optional<Vector> slope_;
};

struct SolverReport {
  bool converged = false;
  int iterations = 0;
  double duality_gap = 0.0;
  double objective = 0.0;
  /// Primal objective of every accepted (improving) iterate.
  std::vector<double> objective_trace;
};

class LadRidgeModel : public LinearModel {
 public:
  LadRidgeModel(Vector coefficients, SolverReport report);

  const SolverReport& report() const { return report_; }

 private:
  SolverReport report_;
};

/// A symmetric fitting procedure: permuting the training rows leaves the fit
/// unchanged.
class Regressor {
 public:
  virtual ~Regressor() = default;

  virtual std::string name() const = 0;
  virtual std::shared_ptr<const FittedModel> fit(const Matrix& features,
                                                 const Vector& targets) const = 0;

  /// Constants for fits on augmented data D_{n+1}(z), z in `range`.
  virtual RegularityConstants regularity(const TabularDataset& data,
                                         Range range) const = 0;

  /// Fits on D_{n+1}(candidate). Overridden when the model can expose more
  /// structure (ridge keeps its linear response in z).
  virtual std::shared_ptr<const FittedModel> fit_augmented(
      const TabularDataset& data, double candidate) const;
};

// ---------------------------------------------------------------------------
// Ridge: min ||y - X beta||^2 / m + lambda ||beta||^2, m = number of rows.

RidgeModel fit_ridge(const Matrix& features, const Vector& targets,
                     double lambda_reg);
RidgeModel fit_ridge(const TabularDataset& data, double candidate,
                     double lambda_reg);

class RidgeRegressor : public Regressor {
 public:
  explicit RidgeRegressor(double lambda_reg);

  std::string name() const override { return "ridge"; }
  double lambda_reg() const { return lambda_reg_; }

  std::shared_ptr<const FittedModel> fit(const Matrix& features,
                                         const Vector& targets) const override;
  std::shared_ptr<const FittedModel> fit_augmented(
      const TabularDataset& data, double candidate) const override;

  /// nu = 2 lambda_max(X^T X) / (n+1), lambda_sc = 2 lambda_reg, C from the
  /// squared loss at the zero prediction; rho unset (the loss is not
  /// Lipschitz).
  RegularityConstants regularity(const TabularDataset& data,
                                 Range range) const override;

 private:
  double lambda_reg_;
};

// ---------------------------------------------------------------------------
// LAD-ridge: min ||y - X beta||_1 / m + lambda ||beta||^2.

struct LadRidgeOptions {
  double lambda_reg = 0.5;
  double solver_tol = 1e-9;
  int max_iter = 20000;
};

/// Accelerated projected gradient ascent on the box-constrained dual
///   max_{|theta_i| <= 1}  theta^T y / m - ||X^T theta||^2 / (4 lambda m^2),
/// with primal beta(theta) = X^T theta / (2 lambda m). The step is the inverse
/// of the dual's gradient Lipschitz constant sigma_max(X)^2 / (2 lambda m^2),
/// momentum restarts whenever the dual objective drops, and the solve stops
/// once the duality gap of the best primal iterate is below solver_tol.
LadRidgeModel fit_lad_ridge(const Matrix& features, const Vector& targets,
                            const LadRidgeOptions& options);
LadRidgeModel fit_lad_ridge(const TabularDataset& data, double candidate,
                            const LadRidgeOptions& options);

double lad_ridge_objective(const Matrix& features, const Vector& targets,
                           const Vector& beta, double lambda_reg);

class LadRidgeRegressor : public Regressor {
 public:
  explicit LadRidgeRegressor(LadRidgeOptions options);

  std::string name() const override { return "ladridge"; }
  const LadRidgeOptions& options() const { return options_; }

  std::shared_ptr<const FittedModel> fit(const Matrix& features,
                                         const Vector& targets) const override;

  /// rho = ||x_{n+1}|| / (n+1): Lipschitz constant in beta of the only loss
  /// term that moves with z. lambda_sc = 2 lambda_reg.
  RegularityConstants regularity(const TabularDataset& data,
                                 Range range) const override;

 private:
  LadRidgeOptions options_;
};

// ---------------------------------------------------------------------------
// Piecewise-linear interpolation of z -> mu_z over the knots
// z_min < zhat_1 < ... < zhat_d < z_max, extended affinely outside
// [z_min, z_max] by the first and last segments.

class InterpolatedModel {
 public:
  InterpolatedModel(std::vector<double> knots,
                    std::vector<std::shared_ptr<const FittedModel>> knot_models);

  /// z_min, anchors..., z_max.
  const std::vector<double>& knots() const { return knots_; }
  const std::vector<std::shared_ptr<const FittedModel>>& knot_models() const {
    return knot_models_;
  }
  Index dim() const { return knot_models_.front()->dim(); }
  std::size_t fit_count() const { return knots_.size(); }

  double predict(const Eigen::Ref<const Vector>& x, double z) const;

  /// Segment index t and weight w such that the prediction is
  /// (1 - w) mu_{knot t} + w mu_{knot t+1}. w lies in [0, 1] inside the
  /// knot range and outside it otherwise.
  std::pair<std::size_t, double> segment(double z) const;

 private:
  std::vector<double> knots_;
  std::vector<std::shared_ptr<const FittedModel>> knot_models_;
};

/// Fits the base model at every anchor and at both endpoints (d + 2 fits).
InterpolatedModel build_interpolated_model(const TabularDataset& data,
                                           const std::vector<double>& anchors,
                                           double z_min, double z_max,
                                           const Regressor& base);

/// Model fitted on the n observed rows, evaluated at x_{n+1}.
double default_anchor(const TabularDataset& data, const Regressor& regressor);

}  // namespace stabcp
