#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stabcp/core.hpp"
#include "stabcp/models.hpp"
#include "stabcp/stability.hpp"
#include "stabcp/types.hpp"

namespace stabcp {

/// One model fit at an anchor candidate zhat, with the observed scores
/// E_i(zhat), i = 1..n, and the prediction at x_{n+1}.
struct AnchorFit {
  double anchor = 0.0;
  std::shared_ptr<const FittedModel> model;
  Vector scores;
  double test_prediction = 0.0;
};

AnchorFit fit_anchor(const TabularDataset& data, double anchor,
                     const Regressor& regressor, const ScoreFunction& score);

/// L_i = E_i(zhat) - tau_i and U_i = E_i(zhat) + tau_i for i <= n. The test
/// point's bounds depend on z and are produced by test_bounds().
struct ConformityBounds {
  double anchor = 0.0;
  Vector lower;
  Vector upper;
  double test_prediction = 0.0;
  double test_tau = 0.0;

  /// (L_{n+1}(z), U_{n+1}(z)).
  std::pair<double, double> test_bounds(double z,
                                        const ScoreFunction& score) const;
};

ConformityBounds conformity_bounds(const AnchorFit& fit,
                                   const StabilityBounds& tau);

/// Sandwich pi_lo <= pi <= pi_up. Counts are the indicator sums over all
/// n+1 points, so pi_lo = 1 - count_lo / m and pi_up = 1 - count_up / m.
struct PiBounds {
  double lo = 0.0;
  double up = 1.0;
  std::size_t count_lo = 0;
  std::size_t count_up = 0;
  std::size_t m = 0;

  double gap() const { return up - lo; }
};

PiBounds pi_bounds(double z, const ConformityBounds& bounds,
                   const ScoreFunction& score);
PiBounds pi_bounds(double z, const AnchorFit& fit, const StabilityBounds& tau,
                   const ScoreFunction& score);

/// #{i <= n : U_i <= L_{n+1}(z)}: the selection count restricted to the
/// observed points. Equals count_up whenever tau_{n+1} > 0.
std::size_t observed_up_count(double z, const ConformityBounds& bounds,
                              const ScoreFunction& score);

/// pi_up = inf over anchors, pi_lo = sup over anchors.
PiBounds batch_pi_bounds(double z, std::span<const ConformityBounds> anchors,
                         const ScoreFunction& score);

struct MethodReport {
  PredictionSet set;
  std::optional<bool> covered;
  double length = 0.0;
  std::size_t fit_count = 0;
  double wall_time = 0.0;
  /// Set was clipped to the candidate range on at least one side.
  bool truncated = false;
  std::string tau_provenance;
};

/// Produces the stability bounds once the anchor fit is available (needed by
/// bounds that read the fit, e.g. linear-exact).
using TauRule = std::function<StabilityBounds(const AnchorFit&)>;

TauRule fixed_tau(StabilityBounds tau);

/// Closed-form stabCP for the absolute-residual score:
/// [mu_zhat(x_{n+1}) +/- (U_(k) + tau_{n+1})], with k the smallest order
/// statistic index such that at most floor((1-alpha)(n+1)) of the U_i are
/// strictly admissible, i.e. k = floor((1-alpha)(n+1)) + 1. Whole-range when
/// k > n. One model fit.
MethodReport stab_cp_interval(const TabularDataset& data, double anchor,
                              const Regressor& regressor,
                              const ScoreFunction& score, const TauRule& tau,
                              double alpha, std::optional<Range> range = {});

/// Same closed form without the tau_{n+1} > 0 guard (the tau -> 0+ limit).
MethodReport stab_cp_interval_limit(const TabularDataset& data, double anchor,
                                    const Regressor& regressor,
                                    const ScoreFunction& score,
                                    const TauRule& tau, double alpha,
                                    std::optional<Range> range = {});

struct BisectionOptions {
  Range range;
  double eps_r = 1e-4;
  std::size_t probe_count = 20;
};

/// {z : pi_up(z, zhat) >= alpha} for any score whose level sets in z are
/// convex, found by two bisections on the single anchor fit.
MethodReport stab_cp_bisection(const TabularDataset& data, double anchor,
                               const Regressor& regressor,
                               const ScoreFunction& score, const TauRule& tau,
                               double alpha, const BisectionOptions& options);

/// Number of pi_up evaluations performed by the last bisection in this
/// thread (diagnostics for the complexity bound).
std::size_t last_bisection_evaluations();

/// Alpha-superlevel set of the interpolated upper conformity function on
/// `grid`. `tau_tilde` comes from tau_interpolated().
MethodReport interpolated_cp(const TabularDataset& data,
                             const InterpolatedModel& model,
                             const StabilityBounds& tau_tilde,
                             const ScoreFunction& score, double alpha,
                             const std::vector<double>& grid);

/// Upper and lower interpolated conformity counts at z (for diagnostics).
PiBounds interpolated_pi_bounds(double z, const TabularDataset& data,
                                const InterpolatedModel& model,
                                const StabilityBounds& tau_tilde,
                                const ScoreFunction& score);

/// Split conformal: fit on rows [0, train_size), calibrate on the rest.
/// Interval mu_tr(x_{n+1}) +/- E_cal_(k), k = ceil((1-alpha)(n_cal+1)).
MethodReport split_cp(const TabularDataset& data, std::size_t train_size,
                      const Regressor& regressor, const ScoreFunction& score,
                      double alpha, std::optional<Range> range = {});

/// pi_split(z) for diagnostics: 1 - (1 + #{E_cal <= E(z)}) / (n_cal + 1).
double pi_split(double z, const Vector& calibration_scores,
                double test_prediction, const ScoreFunction& score);

/// Oracle set with one fit at the true target (tau = 0 closed form).
MethodReport oracle_cp(const TabularDataset& data, double true_target,
                       const Regressor& regressor, const ScoreFunction& score,
                       double alpha, std::optional<Range> range = {});

struct RootOptions {
  Range range;
  double eps_r = 1e-4;
  std::size_t probe_count = 20;
};

/// Endpoints of {z : pi(z) >= alpha} by bisection on the exact conformity
/// function (one refit per probe). Assumes that set is an interval.
MethodReport root_cp(const TabularDataset& data, const Regressor& regressor,
                     const ScoreFunction& score, double alpha,
                     const RootOptions& options);

/// Grid reference method as a report (fit_count = grid size).
MethodReport grid_cp(const TabularDataset& data, const Regressor& regressor,
                     const ScoreFunction& score, double alpha,
                     const std::vector<double>& grid);

struct GapRow {
  double z = 0.0;
  PiBounds bounds;
  ExactConformity exact;
};

/// Sandwich bounds plus the exact conformity (refit) at each grid point.
std::vector<GapRow> gap_profile(const TabularDataset& data, double anchor,
                                const Regressor& regressor,
                                const ScoreFunction& score, const TauRule& tau,
                                const std::vector<double>& grid);

/// Sets `covered` from the dataset's known test target, if any.
void mark_coverage(MethodReport& report, const TabularDataset& data);

}  // namespace stabcp
