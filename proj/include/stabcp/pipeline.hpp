#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "stabcp/conformal.hpp"

namespace stabcp {

/// Where the stability bounds come from.
enum class TauSource { Auto, LinearExact, SgdHeuristic, File };

std::string to_string(TauSource source);
TauSource parse_tau_source(const std::string& text);

struct ModelConfig {
  std::string name = "ridge";  // ridge | ladridge
  /// Unset picks 1.0 for ridge and 0.5 for LAD-ridge.
  std::optional<double> lambda_reg;
  double solver_tol = 1e-9;
  int max_iter = 20000;
};

std::unique_ptr<Regressor> make_regressor(const ModelConfig& config);

/// Everything a single prediction-set computation needs besides the data.
struct PredictRequest {
  std::string method = "stabcp";
  ModelConfig model;
  double alpha = 0.1;
  /// Candidate range; unset means [y_(1), y_(n)].
  std::optional<Range> range;
  /// stabCP anchor; unset means the prediction of the model fitted on D_n.
  std::optional<double> anchor;
  bool bisection = false;
  TauSource tau_source = TauSource::Auto;
  std::optional<Vector> tau_values;
  int sgd_iterations = 100;
  bool allow_unsafe_tau = false;
  double eps_r = 1e-4;
  std::size_t grid_size = 200;
  double train_fraction = 0.5;
  std::uint64_t split_seed = 0;
  /// interpcp knots strictly inside the range; unset means 3 evenly spaced.
  std::vector<double> interp_anchors;
  std::optional<double> true_target;
};

std::vector<std::string> known_methods();

struct MethodRun {
  MethodReport report;
  std::string method;
  /// Fits spent choosing the anchor (not part of the method's own count).
  std::size_t anchor_fits = 0;
  std::optional<double> anchor;
  bool unsafe_tau = false;
};

/// Stability bounds for `request` as a rule over the anchor fit.
/// Throws when the source is heuristic and unsafe bounds were not allowed.
TauRule make_tau_rule(const TabularDataset& data, const Regressor& regressor,
                      const ScoreFunction& score, const PredictRequest& request,
                      Range range);

MethodRun run_method(const TabularDataset& data, const PredictRequest& request);

struct CurveRow {
  double z = 0.0;
  double pi_lo = 0.0;
  double pi_up = 0.0;
  double pi_exact = 0.0;
  double pi_split = 0.0;
};

/// Grid step where a curve changes side of the alpha line.
struct Crossing {
  std::string curve;
  double z_before = 0.0;
  double z_after = 0.0;
  bool rising = false;
};

struct CurveResult {
  std::vector<CurveRow> rows;
  std::vector<Crossing> crossings;
  double anchor = 0.0;
  std::string tau_provenance;
};

/// Sweeps the candidate range, refitting at every grid point for pi_exact.
CurveResult conformity_curve(const TabularDataset& data,
                             const PredictRequest& request);

std::string format_curve_csv(const CurveResult& curve);

}  // namespace stabcp
