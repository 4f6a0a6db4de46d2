#pragma once

#include <functional>
#include <optional>
#include <string>

#include "stabcp/models.hpp"
#include "stabcp/types.hpp"

namespace stabcp {

enum class TauProvenance {
  StronglyConvexLoss,
  RegularizedLipschitz,
  RegularizedSmooth,
  SgdHeuristic,
  LinearExact,
  UserSupplied,
  Interpolated,
};

std::string to_string(TauProvenance provenance);

/// Per-point bounds tau_1..tau_{n+1} on how much the score of point i can
/// move when the augmented label changes.
struct StabilityBounds {
  Vector tau;
  TauProvenance provenance = TauProvenance::UserSupplied;
  /// Candidate range a range-dependent constant was computed on.
  std::optional<Range> candidate_range;

  /// Heuristic bounds carry no coverage guarantee.
  bool coverage_safe() const {
    return provenance != TauProvenance::SgdHeuristic;
  }
  double test_tau() const { return tau(tau.size() - 1); }
};

/// tau_i = 2 gamma rho / lambda for all n+1 points (strongly convex loss in
/// the prediction vector).
StabilityBounds tau_strongly_convex(double gamma, double rho, double lambda_sc,
                                    Index n);

/// tau_i = 2 gamma rho L_phi ||x_i|| / lambda (Lipschitz loss, strongly
/// convex regularizer). `row_norms` includes ||x_{n+1}||.
StabilityBounds tau_regularized_lipschitz(double gamma, double rho,
                                          double l_phi, double lambda_sc,
                                          const Vector& row_norms);

/// tau_i = 2 gamma L_phi ||x_i|| sqrt(2 nu C) / (lambda - nu), nu < lambda.
StabilityBounds tau_regularized_smooth(double gamma, double nu,
                                       double loss_bound_C, double l_phi,
                                       double lambda_sc,
                                       const Vector& row_norms);

/// Per-sample loss l(y, 0) summed and scaled by 1/(n+1).
struct LossSpec {
  std::function<double(double target)> at_zero_prediction;
  /// z -> L(y(z), 0) is convex, so its sup over an interval sits at an end.
  bool convex_in_candidate = true;
  std::string name;

  static LossSpec squared();
  static LossSpec absolute();
};

/// C = sup_{z in range} L(y(z), 0) with the 1/(n+1) scaling.
double bound_loss_C(const TabularDataset& data, const LossSpec& loss,
                    Range range);

/// tau_i = T ||x_i|| / (n+1). Not coverage-safe.
StabilityBounds tau_sgd_heuristic(int n_iter, const Vector& row_norms, Index n);

/// tau_i = gamma |b(x_i)| (z_max - z_min): exact worst case for predictions
/// affine in z, plus a rounding pad of 64 ulps of |a(x_i)| + |b(x_i)| max|z|.
/// Requires a ridge fit on augmented data.
StabilityBounds tau_linear_exact(const RidgeModel& ridge,
                                 const TabularDataset& data, Range range,
                                 double gamma = 1.0);

/// 3 gamma tau_i: bound for the piecewise-linear interpolated model.
StabilityBounds tau_interpolated(const StabilityBounds& base, double gamma);

/// User-provided vector of n+1 nonnegative values.
StabilityBounds tau_user_supplied(Vector tau);

/// Adds 2 gamma ||x_i|| delta to every tau_i, where delta bounds the distance
/// of each returned parameter vector from the exact minimizer.
StabilityBounds inflate_for_parameter_error(StabilityBounds bounds,
                                            const Vector& row_norms,
                                            double gamma, double delta);

/// Coverage-safe bound derived from the regressor's declared constants:
/// regularized-Lipschitz when rho is declared, else regularized-smooth when
/// nu < lambda_sc. Returns nullopt when neither applies.
std::optional<StabilityBounds> tau_from_regularity(const Regressor& regressor,
                                                   const TabularDataset& data,
                                                   const ScoreFunction& score,
                                                   Range range);

}  // namespace stabcp
