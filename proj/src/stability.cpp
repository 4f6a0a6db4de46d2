#include "stabcp/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace stabcp {

namespace {

void check_row_norms(const Vector& row_norms) {
  require(row_norms.size() >= 3, "row norms must cover n >= 2 points plus x_{n+1}");
  require(row_norms.allFinite() && (row_norms.array() >= 0.0).all(),
          "row norms must be finite and nonnegative");
}

}  // namespace

std::string to_string(TauProvenance provenance) {
  switch (provenance) {
    case TauProvenance::StronglyConvexLoss: return "strongly-convex-loss";
    case TauProvenance::RegularizedLipschitz: return "regularized-lipschitz";
    case TauProvenance::RegularizedSmooth: return "regularized-smooth";
    case TauProvenance::SgdHeuristic: return "sgd-heuristic";
    case TauProvenance::LinearExact: return "linear-exact";
    case TauProvenance::UserSupplied: return "user-supplied";
    case TauProvenance::Interpolated: return "interpolated";
  }
  return "unknown";
}

StabilityBounds tau_strongly_convex(double gamma, double rho, double lambda_sc,
                                    Index n) {
  require(lambda_sc > 0.0, "strong convexity constant must be positive");
  require(gamma >= 0.0 && rho >= 0.0, "gamma and rho must be nonnegative");
  require(n >= 2, "need n >= 2");
  return {Vector::Constant(n + 1, 2.0 * gamma * rho / lambda_sc),
          TauProvenance::StronglyConvexLoss, std::nullopt};
}

StabilityBounds tau_regularized_lipschitz(double gamma, double rho,
                                          double l_phi, double lambda_sc,
                                          const Vector& row_norms) {
  require(lambda_sc > 0.0, "strong convexity constant must be positive");
  require(gamma >= 0.0 && rho >= 0.0 && l_phi >= 0.0,
          "gamma, rho and L_phi must be nonnegative");
  check_row_norms(row_norms);
  return {2.0 * gamma * rho * l_phi / lambda_sc * row_norms,
          TauProvenance::RegularizedLipschitz, std::nullopt};
}

StabilityBounds tau_regularized_smooth(double gamma, double nu,
                                       double loss_bound_C, double l_phi,
                                       double lambda_sc,
                                       const Vector& row_norms) {
  require(nu >= 0.0 && nu < lambda_sc,
          "smooth bound needs 0 <= nu < lambda_sc");
  require(loss_bound_C >= 0.0, "loss bound must be nonnegative");
  require(gamma >= 0.0 && l_phi >= 0.0, "gamma and L_phi must be nonnegative");
  check_row_norms(row_norms);
  const double factor =
      2.0 * gamma * l_phi * std::sqrt(2.0 * nu * loss_bound_C) / (lambda_sc - nu);
  return {factor * row_norms, TauProvenance::RegularizedSmooth, std::nullopt};
}

LossSpec LossSpec::squared() {
  return {[](double y) { return y * y; }, true, "squared"};
}

LossSpec LossSpec::absolute() {
  return {[](double y) { return std::abs(y); }, true, "absolute"};
}

double bound_loss_C(const TabularDataset& data, const LossSpec& loss,
                    Range range) {
  require(range.lo <= range.hi, "candidate range must satisfy lo <= hi");
  const auto m = static_cast<double>(data.size() + 1);
  double observed = 0.0;
  for (double y : data.targets()) observed += loss.at_zero_prediction(y);
  auto total = [&](double z) {
    return (observed + loss.at_zero_prediction(z)) / m;
  };
  if (loss.convex_in_candidate) return std::max(total(range.lo), total(range.hi));
  double best = 0.0;
  for (double z : linear_grid(range, 1001)) best = std::max(best, total(z));
  return best;
}

StabilityBounds tau_sgd_heuristic(int n_iter, const Vector& row_norms,
                                  Index n) {
  require(n_iter >= 0, "iteration count must be nonnegative");
  check_row_norms(row_norms);
  require(row_norms.size() == n + 1, "row norms must have n + 1 entries");
  return {static_cast<double>(n_iter) / static_cast<double>(n + 1) * row_norms,
          TauProvenance::SgdHeuristic, std::nullopt};
}

StabilityBounds tau_linear_exact(const RidgeModel& ridge,
                                 const TabularDataset& data, Range range,
                                 double gamma) {
  require(ridge.has_linear_response(),
          "linear-exact bound needs a ridge fit on augmented data");
  require(range.lo <= range.hi, "candidate range must satisfy lo <= hi");
  const Matrix x = data.augmented_features();
  const double z_abs = std::max(std::abs(range.lo), std::abs(range.hi));
  // The bound is attained at the range ends, so refits there can exceed it by
  // rounding; pad by a few dozen ulps of the prediction magnitude.
  const double ulps = 64.0 * std::numeric_limits<double>::epsilon();
  Vector tau(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const LinearResponse r = ridge.linear_response(x.row(i).transpose());
    const double b = std::abs(r.b);
    tau(i) = gamma * (b * range.width() + ulps * (std::abs(r.a) + b * z_abs));
  }
  return {std::move(tau), TauProvenance::LinearExact, range};
}

StabilityBounds tau_interpolated(const StabilityBounds& base, double gamma) {
  require(gamma >= 0.0, "gamma must be nonnegative");
  return {3.0 * gamma * base.tau, TauProvenance::Interpolated,
          base.candidate_range};
}

StabilityBounds tau_user_supplied(Vector tau) {
  require(tau.size() >= 3, "tau needs n + 1 >= 3 entries");
  require(tau.allFinite() && (tau.array() >= 0.0).all(),
          "tau entries must be finite and nonnegative");
  return {std::move(tau), TauProvenance::UserSupplied, std::nullopt};
}

StabilityBounds inflate_for_parameter_error(StabilityBounds bounds,
                                            const Vector& row_norms,
                                            double gamma, double delta) {
  require(bounds.tau.size() == row_norms.size(),
          "tau and row norms have different lengths");
  require(delta >= 0.0, "parameter error must be nonnegative");
  bounds.tau += 2.0 * gamma * delta * row_norms;
  return bounds;
}

std::optional<StabilityBounds> tau_from_regularity(const Regressor& regressor,
                                                   const TabularDataset& data,
                                                   const ScoreFunction& score,
                                                   Range range) {
  const RegularityConstants c = regressor.regularity(data, range);
  const Vector norms = data.row_norms();
  std::optional<StabilityBounds> tau;
  if (c.rho && c.lambda_sc > 0.0) {
    tau = tau_regularized_lipschitz(score.gamma(), *c.rho, c.l_phi, c.lambda_sc,
                                    norms);
  } else if (c.nu > 0.0 && c.nu < c.lambda_sc) {
    tau = tau_regularized_smooth(score.gamma(), c.nu, c.loss_bound_C, c.l_phi,
                                 c.lambda_sc, norms);
    tau->candidate_range = range;
  }
  if (tau && c.parameter_error > 0.0)
    tau = inflate_for_parameter_error(std::move(*tau), norms, score.gamma(),
                                      c.l_phi * c.parameter_error);
  return tau;
}

}  // namespace stabcp
